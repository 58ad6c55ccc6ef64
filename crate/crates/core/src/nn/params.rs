use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::{rng, Error, Result};

/// One named parameter tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
    /// True exactly for convolution and linear weight matrices.
    pub prunable: bool,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>, prunable: bool) -> Result<Self> {
        let name = name.into();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("{name}: extents must be positive, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "{name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        Ok(Self {
            name,
            shape,
            values,
            prunable,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Model parameters at a given epoch, in a fixed deterministic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub epoch_tag: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub params: Vec<ParamTensor>,
}

impl ModelState {
    /// Assembles a state, checking names are unique and shapes match the
    /// reference layout of `config`.
    pub fn from_parts(config: ModelConfig, epoch_tag: u32, seed: u64, params: Vec<ParamTensor>) -> Result<Self> {
        config.validate()?;
        let layout = layout(&config);
        if layout.len() != params.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for (spec, p) in layout.iter().zip(&params) {
            if spec.name != p.name || spec.shape != p.shape || spec.prunable != p.prunable {
                return Err(Error::Shape(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    p.name, p.shape, spec.name, spec.shape
                )));
            }
        }
        Ok(Self {
            epoch_tag,
            seed,
            config,
            params,
        })
    }

    /// Total parameter count `p`.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(ParamTensor::len).sum()
    }

    pub fn prunable_count(&self) -> usize {
        self.params.iter().filter(|p| p.prunable).map(ParamTensor::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Rebuilds the architecture config from tensor shapes.
    pub fn infer_config(params: &[ParamTensor]) -> Result<ModelConfig> {
        let find = |name: &str| {
            params
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
        };
        let conv = find("frontend.conv.weight")?;
        let head = find("head.weight")?;
        if conv.shape.len() != 3 || head.shape.len() != 2 {
            return Err(Error::Format("unexpected frontend/head rank".into()));
        }
        let num_blocks = params
            .iter()
            .filter(|p| p.name.starts_with("blocks.") && p.name.ends_with(".linear.weight"))
            .count();
        Ok(ModelConfig {
            feature_dim: conv.shape[1],
            hidden_dim: conv.shape[0],
            num_blocks,
            alphabet_size: head.shape[0],
            conv_kernel: conv.shape[2],
        })
    }
}

pub(crate) struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub prunable: bool,
    /// Fan-in for weights; `None` for biases and norm parameters.
    pub fan_in: Option<usize>,
    /// Constant initial value when `fan_in` is `None`.
    pub fill: f32,
}

pub(crate) fn layout(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let (d, h, a, k) = (cfg.feature_dim, cfg.hidden_dim, cfg.alphabet_size, cfg.conv_kernel);
    let weight = |name: String, shape: Vec<usize>, fan_in: usize| TensorSpec {
        name,
        shape,
        prunable: true,
        fan_in: Some(fan_in),
        fill: 0.0,
    };
    let constant = |name: String, len: usize, fill: f32| TensorSpec {
        name,
        shape: vec![len],
        prunable: false,
        fan_in: None,
        fill,
    };
    let mut out = vec![
        weight("frontend.conv.weight".into(), vec![h, d, k], d * k),
        constant("frontend.conv.bias".into(), h, 0.0),
    ];
    for b in 0..cfg.num_blocks {
        out.push(weight(format!("blocks.{b}.linear.weight"), vec![2 * h, h], h));
        out.push(constant(format!("blocks.{b}.linear.bias"), 2 * h, 0.0));
        out.push(constant(format!("blocks.{b}.norm.weight"), h, 1.0));
        out.push(constant(format!("blocks.{b}.norm.bias"), h, 0.0));
    }
    out.push(weight("head.weight".into(), vec![a, h], h));
    out.push(constant("head.bias".into(), a, 0.0));
    out
}

/// Fresh parameters `θ_0`.
///
/// Weights are drawn uniformly from `±sqrt(1 / fan_in)` in tensor order from
/// a single seeded stream; biases start at zero and norm gains at one.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelState> {
    config.validate()?;
    let mut rng = rng::stream(seed, 0);
    let params = layout(config)
        .into_iter()
        .map(|spec| {
            let len: usize = spec.shape.iter().product();
            let values = match spec.fan_in {
                Some(fan_in) => {
                    let bound = (1.0 / fan_in as f64).sqrt();
                    (0..len).map(|_| rng.random_range(-bound..bound) as f32).collect()
                }
                None => vec![spec.fill; len],
            };
            ParamTensor {
                name: spec.name,
                shape: spec.shape,
                values,
                prunable: spec.prunable,
            }
        })
        .collect();
    Ok(ModelState {
        epoch_tag: 0,
        seed,
        config: *config,
        params,
    })
}
