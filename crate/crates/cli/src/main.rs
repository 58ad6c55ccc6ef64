//! `prunelab` command line: dense training, method comparison, rewind
//! ablation, noise evaluation, sparse benchmark and checkpoint inspection.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prunelab::checkpoint;
use prunelab::experiment::{
    cmd_ablate_rewind, cmd_bench_sparse, cmd_compare_methods, cmd_eval_noise, cmd_train_dense,
    default_ablation_epochs, CellFailure, MethodName, ModelRef, RunConfig,
};
use prunelab::noise::NoiseKind;
use prunelab::prune::{load_mask, sparsity_of};
use prunelab::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "prunelab", version, about = "Magnitude pruning experiments on a small CTC model")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed and the dataset seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum number of grid cells trained concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the dense model, storing snapshots and telemetry.
    TrainDense,
    /// Evaluate pruning methods over a sparsity grid.
    CompareMethods {
        /// Dense run id; defaults to the run defined by the config.
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_delimiter = ',')]
        sparsities: Option<Vec<f64>>,
        /// Any of naive, finetune, parp, lth, lrr, iter-lth, iter-lrr.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// One-shot pruning with rewinding to different snapshot epochs.
    AblateRewind {
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_delimiter = ',')]
        sparsities: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        epochs: Option<Vec<u32>>,
    },
    /// Test WER under every corruption kind and level.
    EvalNoise {
        #[arg(long)]
        run: Option<String>,
        /// `dense` or `<method>@<sparsity>`, e.g. `iter-lrr@0.5`.
        #[arg(long, value_delimiter = ',', default_value = "dense")]
        models: Vec<String>,
        /// Corruption codes (BW, GB, MB, P, GN, C, VC); all by default.
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u8>>,
    },
    /// Dense vs CSR mat-vec timings.
    BenchSparse {
        #[arg(long, value_delimiter = ',', default_value = "256,1024,2048")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.8,0.9,0.95")]
        sparsities: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
    /// Print the header and tensor directory of a checkpoint or mask file.
    Inspect { path: PathBuf },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.data.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn report_failures(failures: &[CellFailure]) -> u8 {
    for f in failures {
        eprintln!("cell {}@{} failed: {}", f.label, f.sparsity, f.message);
    }
    if failures.is_empty() {
        0
    } else {
        EXIT_PARTIAL
    }
}

fn inspect(path: &Path) -> Result<(), Error> {
    let head = fs::read(path)?;
    if head.starts_with(b"PLMK") {
        let mask = load_mask(path)?;
        println!("mask {}  sparsity {:.4}", path.display(), sparsity_of(&mask));
        for t in mask.tensors() {
            println!("  {:<28} {:?} zeros {}", t.name, t.shape, t.zeros());
        }
        return Ok(());
    }
    let info = checkpoint::inspect(path)?;
    println!(
        "run {}  epoch {}  seed {}  sha256 {}",
        info.run_id, info.epoch, info.seed, info.sha256
    );
    for t in &info.tensors {
        let n: usize = t.shape.iter().product();
        let flag = if t.prunable { "prunable" } else { "" };
        println!("  {:<28} f32 {:?} {n} {flag}", t.name, t.shape);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<u8, Error> {
    if let Command::Inspect { path } = &cli.command {
        inspect(path)?;
        return Ok(0);
    }
    if let Command::BenchSparse { sizes, sparsities, reps } = &cli.command {
        let cfg = load_config(cli)?;
        let out = cfg.out_dir.join("bench.csv");
        let reports = cmd_bench_sparse(sizes, sparsities, *reps, cfg.seed, &out)?;
        print!("{}", prunelab::sparse::bench_csv(&reports));
        if reports.iter().any(|r| !r.checksums_match()) {
            eprintln!("dense and sparse outputs differ");
            return Ok(EXIT_FAILURE);
        }
        return Ok(0);
    }
    let cfg = load_config(cli)?;
    if let Command::ShowConfig = cli.command {
        cfg.validate()?;
        print!("{}", cfg.to_toml()?);
        return Ok(0);
    }
    let run_id = |r: &Option<String>| r.clone().unwrap_or_else(|| cfg.dense_run_id());
    match &cli.command {
        Command::TrainDense => {
            let run = cmd_train_dense(&cfg)?;
            let s = &run.summary;
            let note = if run.reused { " (already complete)" } else { "" };
            println!("{}{note}", s.run_id);
            println!("  dir        {}", run.dir.display());
            println!("  test WER   {:.2}%", s.test_wer);
            println!("  params     {} ({} prunable)", s.param_count, s.prunable_count);
            println!("  final      {}", s.final_sha256);
            Ok(0)
        }
        Command::CompareMethods { run, sparsities, methods } => {
            let methods = match methods {
                Some(m) => m.iter().map(|s| s.parse()).collect::<Result<Vec<MethodName>, _>>()?,
                None => cfg.prune.methods.clone(),
            };
            let sparsities = sparsities.clone().unwrap_or_else(|| cfg.prune.sparsities.clone());
            let outcome = cmd_compare_methods(&cfg, &run_id(run), &sparsities, &methods, cli.jobs)?;
            print!(
                "{}",
                prunelab::experiment::markdown_table(&outcome, &sparsities, &methods)
            );
            Ok(report_failures(&outcome.failures))
        }
        Command::AblateRewind { run, sparsities, epochs } => {
            let sparsities = sparsities
                .clone()
                .unwrap_or_else(|| cfg.prune.ablation_sparsities.clone());
            let epochs = epochs.clone().unwrap_or_else(|| default_ablation_epochs(&cfg));
            let outcome = cmd_ablate_rewind(&cfg, &run_id(run), &sparsities, &epochs, cli.jobs)?;
            println!("sparsity,rewind_epoch,wer");
            for p in &outcome.points {
                println!("{},{},{:.2}", p.sparsity, p.rewind_epoch, p.test_wer);
            }
            Ok(report_failures(&outcome.failures))
        }
        Command::EvalNoise {
            run,
            models,
            kinds,
            levels,
        } => {
            let models = models.iter().map(|m| m.parse()).collect::<Result<Vec<ModelRef>, _>>()?;
            let kinds = match kinds {
                Some(k) => k.iter().map(|s| s.parse()).collect::<Result<Vec<NoiseKind>, _>>()?,
                None => NoiseKind::SEEN.iter().chain(&NoiseKind::UNSEEN).copied().collect(),
            };
            let levels = levels.clone().unwrap_or_else(|| (0..=10).collect());
            let rows = cmd_eval_noise(&cfg, &run_id(run), &models, &kinds, &levels)?;
            println!("model,kind,level,wer");
            for r in rows {
                println!("{},{},{},{:.2}", r.model, r.kind, r.level, r.wer);
            }
            Ok(0)
        }
        Command::BenchSparse { .. } | Command::Inspect { .. } | Command::ShowConfig => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            })
        }
    }
}
