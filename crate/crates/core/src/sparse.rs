//! CSR storage for pruned weight matrices, a sparse mat-vec kernel and a
//! dense-vs-sparse microbenchmark.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use crate::{rng, Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Checks offsets, index bounds and per-row ordering.
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("malformed CSR: {m}")));
        if self.row_offsets.len() != self.rows + 1 || self.row_offsets[0] != 0 {
            return bad("row_offsets length or origin");
        }
        if self.row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return bad("row_offsets decrease");
        }
        if self.row_offsets[self.rows] != self.values.len() || self.col_indices.len() != self.values.len() {
            return bad("nnz disagrees with row_offsets");
        }
        for r in 0..self.rows {
            let cols = &self.col_indices[self.row_offsets[r]..self.row_offsets[r + 1]];
            if cols.iter().any(|&c| c >= self.cols) || cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad("column indices out of range or unsorted");
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for i in self.row_offsets[r]..self.row_offsets[r + 1] {
                out[[r, self.col_indices[i]]] = self.values[i];
            }
        }
        out
    }
}

/// Builds a CSR matrix holding exactly the entries where `keep` is true.
pub fn to_csr(weight: ArrayView2<'_, f64>, keep: ArrayView2<'_, bool>) -> Result<CsrMatrix> {
    if weight.dim() != keep.dim() {
        return Err(Error::Shape(format!(
            "weight {:?} vs mask {:?}",
            weight.dim(),
            keep.dim()
        )));
    }
    let (rows, cols) = weight.dim();
    let mut row_offsets = Vec::with_capacity(rows + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for r in 0..rows {
        for c in 0..cols {
            if keep[[r, c]] {
                col_indices.push(c);
                values.push(weight[[r, c]]);
            }
        }
        row_offsets.push(values.len());
    }
    Ok(CsrMatrix {
        rows,
        cols,
        row_offsets,
        col_indices,
        values,
    })
}

pub fn spmv(csr: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != csr.cols {
        return Err(Error::Shape(format!("spmv: {} columns, vector of {}", csr.cols, x.len())));
    }
    let mut y = vec![0.0; csr.rows];
    spmv_into(csr, x, &mut y);
    Ok(y)
}

fn spmv_into(csr: &CsrMatrix, x: &[f64], y: &mut [f64]) {
    for (r, out) in y.iter_mut().enumerate() {
        let (lo, hi) = (csr.row_offsets[r], csr.row_offsets[r + 1]);
        let mut acc = 0.0;
        for (&c, &v) in csr.col_indices[lo..hi].iter().zip(&csr.values[lo..hi]) {
            acc += v * x[c];
        }
        *out = acc;
    }
}

/// Plain row-major dense mat-vec, summing in column order.
pub fn dense_matvec(w: ArrayView2<'_, f64>, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.ncols() {
        return Err(Error::Shape(format!("matvec: {} columns, vector of {}", w.ncols(), x.len())));
    }
    let mut y = vec![0.0; w.nrows()];
    dense_into(w, x, &mut y);
    Ok(y)
}

fn dense_into(w: ArrayView2<'_, f64>, x: &[f64], y: &mut [f64]) {
    for (row, out) in w.outer_iter().zip(y.iter_mut()) {
        let mut acc = 0.0;
        for (&a, &b) in row.iter().zip(x) {
            acc += a * b;
        }
        *out = acc;
    }
}

/// FNV-1a over the bit patterns of `y`.
fn checksum(y: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in y {
        // +0.0 and -0.0 compare equal; hash them alike.
        let bits = if *v == 0.0 { 0 } else { v.to_bits() };
        for b in bits.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub size: usize,
    pub sparsity: f64,
    pub dense_ns: u64,
    pub sparse_ns: u64,
    pub speedup: f64,
    pub dense_checksum: u64,
    pub sparse_checksum: u64,
}

impl BenchReport {
    pub fn checksums_match(&self) -> bool {
        self.dense_checksum == self.sparse_checksum
    }
}

const WARMUP: usize = 3;

fn median(mut xs: Vec<u64>) -> u64 {
    xs.sort_unstable();
    xs[xs.len() / 2]
}

fn time_ns(reps: usize, mut f: impl FnMut()) -> u64 {
    for _ in 0..WARMUP {
        f();
    }
    let samples = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_nanos() as u64
        })
        .collect();
    median(samples)
}

/// Times dense `(m⊙W)·x` against CSR `spmv` on random `n×n` instances.
///
/// Pruned entries of the dense operand are stored as zeros, so both paths
/// sum identical products in the same order and their checksums agree.
pub fn bench(sizes: &[usize], sparsities: &[f64], repetitions: usize, seed: u64) -> Result<Vec<BenchReport>> {
    if repetitions == 0 {
        return Err(Error::InvalidInput("bench needs at least one repetition".into()));
    }
    let mut out = Vec::new();
    for &n in sizes {
        if n < 64 {
            return Err(Error::InvalidInput(format!("bench size {n} below 64")));
        }
        for &s in sparsities {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::InvalidInput(format!("bench sparsity {s} outside [0, 1)")));
            }
            let mut rng = rng::stream(seed, rng::mix(&[n as u64, s.to_bits()]));
            let mut w = Array2::<f64>::zeros((n, n));
            let mut keep = Array2::from_elem((n, n), false);
            for (wv, kv) in w.iter_mut().zip(keep.iter_mut()) {
                *kv = rng.random::<f64>() >= s;
                if *kv {
                    *wv = rng.random_range(-1.0..1.0);
                }
            }
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let csr = to_csr(w.view(), keep.view())?;
            let mut yd = vec![0.0; n];
            let mut ys = vec![0.0; n];
            let dense_ns = time_ns(repetitions, || dense_into(black_box(w.view()), black_box(&x), &mut yd));
            let sparse_ns = time_ns(repetitions, || spmv_into(black_box(&csr), black_box(&x), &mut ys));
            out.push(BenchReport {
                size: n,
                sparsity: s,
                dense_ns,
                sparse_ns,
                speedup: dense_ns as f64 / sparse_ns.max(1) as f64,
                dense_checksum: checksum(&yd),
                sparse_checksum: checksum(&ys),
            });
        }
    }
    Ok(out)
}

pub fn bench_csv(reports: &[BenchReport]) -> String {
    let mut s = String::from("size,sparsity,dense_ns,sparse_ns,speedup,checksum\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.3},{:016x}",
            r.size, r.sparsity, r.dense_ns, r.sparse_ns, r.speedup, r.sparse_checksum
        );
    }
    s
}
