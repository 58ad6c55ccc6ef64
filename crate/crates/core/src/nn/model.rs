use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::{ModelConfig, ModelState, Batch};
use crate::{Error, Result};

const NORM_EPS: f64 = 1e-5;

struct Block {
    weight: Array2<f64>,
    bias: Array1<f64>,
    gain: Array1<f64>,
    shift: Array1<f64>,
}

/// `f64` view of a parameter set, laid out for computation.
pub struct Network {
    config: ModelConfig,
    /// `[hidden, feature_dim * kernel]`, column index `i * kernel + j`.
    conv_weight: Array2<f64>,
    conv_bias: Array1<f64>,
    blocks: Vec<Block>,
    head_weight: Array2<f64>,
    head_bias: Array1<f64>,
}

struct BlockCache {
    input: Array2<f64>,
    value: Array2<f64>,
    gate: Array2<f64>,
    normed: Array2<f64>,
    inv_std: Array1<f64>,
}

struct Cache {
    columns: Array2<f64>,
    blocks: Vec<BlockCache>,
    features: Array2<f64>,
    probs: Array2<f64>,
}

fn matrix(values: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), values.to_vec()).expect("length checked by caller")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Network {
    pub fn from_state(state: &ModelState) -> Result<Self> {
        let flat: Vec<Vec<f64>> = state
            .params
            .iter()
            .map(|p| p.values.iter().map(|&v| f64::from(v)).collect())
            .collect();
        Self::from_flat(&state.config, &flat)
    }

    /// Builds from flat tensors in [`ModelState`] parameter order.
    pub fn from_flat(config: &ModelConfig, tensors: &[Vec<f64>]) -> Result<Self> {
        let (d, h, a, k) = (config.feature_dim, config.hidden_dim, config.alphabet_size, config.conv_kernel);
        let expected = 4 + 4 * config.num_blocks;
        if tensors.len() != expected {
            return Err(Error::Shape(format!("expected {expected} tensors, got {}", tensors.len())));
        }
        let check = |idx: usize, len: usize| -> Result<&[f64]> {
            let t = &tensors[idx];
            if t.len() != len {
                return Err(Error::Shape(format!("tensor {idx}: {} values, expected {len}", t.len())));
            }
            Ok(t)
        };
        let conv_weight = matrix(check(0, h * d * k)?, h, d * k);
        let conv_bias = Array1::from(check(1, h)?.to_vec());
        let mut blocks = Vec::with_capacity(config.num_blocks);
        for b in 0..config.num_blocks {
            let base = 2 + 4 * b;
            blocks.push(Block {
                weight: matrix(check(base, 2 * h * h)?, 2 * h, h),
                bias: Array1::from(check(base + 1, 2 * h)?.to_vec()),
                gain: Array1::from(check(base + 2, h)?.to_vec()),
                shift: Array1::from(check(base + 3, h)?.to_vec()),
            });
        }
        let base = 2 + 4 * config.num_blocks;
        Ok(Self {
            config: *config,
            conv_weight,
            conv_bias,
            blocks,
            head_weight: matrix(check(base, a * h)?, a, h),
            head_bias: Array1::from(check(base + 1, a)?.to_vec()),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn columns(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let (n, d) = x.dim();
        let k = self.config.conv_kernel;
        let pad = k / 2;
        let mut cols = Array2::zeros((n, d * k));
        for t in 0..n {
            for j in 0..k {
                let src = t + j;
                if src < pad || src - pad >= n {
                    continue;
                }
                let row = x.row(src - pad);
                for i in 0..d {
                    cols[[t, i * k + j]] = row[i];
                }
            }
        }
        cols
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        let (n, d) = x.dim();
        if d != self.config.feature_dim {
            return Err(Error::Shape(format!(
                "input feature_dim {d} does not match model feature_dim {}",
                self.config.feature_dim
            )));
        }
        if n == 0 {
            return Err(Error::Shape("input sequence has no frames".into()));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Cache) {
        let h = self.config.hidden_dim;
        let columns = self.columns(x);
        let mut hidden = columns.dot(&self.conv_weight.t()) + &self.conv_bias;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let pre = hidden.dot(&block.weight.t()) + &block.bias;
            let value = pre.slice(s![.., ..h]).to_owned();
            let gate = pre.slice(s![.., h..]).mapv(sigmoid);
            let mut residual = &hidden + &(&value * &gate);
            let n = residual.nrows();
            let mut inv_std = Array1::zeros(n);
            for (t, mut row) in residual.axis_iter_mut(Axis(0)).enumerate() {
                let mean = row.sum() / h as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
                let inv = 1.0 / (var + NORM_EPS).sqrt();
                row.mapv_inplace(|v| (v - mean) * inv);
                inv_std[t] = inv;
            }
            let normed = residual;
            let out = &normed * &block.gain + &block.shift;
            caches.push(BlockCache {
                input: std::mem::replace(&mut hidden, out),
                value,
                gate,
                normed,
                inv_std,
            });
        }
        let mut logprobs = hidden.dot(&self.head_weight.t()) + &self.head_bias;
        for mut row in logprobs.axis_iter_mut(Axis(0)) {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        let probs = logprobs.mapv(f64::exp);
        (
            logprobs,
            Cache {
                columns,
                blocks: caches,
                features: hidden,
                probs,
            },
        )
    }

    /// Per-frame log-probabilities `[frames, alphabet]` for one sequence.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.run(x).0)
    }

    /// Log-probabilities and the parameter gradient in tensor order.
    /// `upstream` maps the log-probabilities to `dL/dlogprobs`.
    pub fn forward_backward<F>(&self, x: ArrayView2<'_, f64>, upstream: F) -> Result<(Array2<f64>, Vec<Vec<f64>>)>
    where
        F: FnOnce(ArrayView2<'_, f64>) -> Result<Array2<f64>>,
    {
        self.check_input(x)?;
        let (logprobs, cache) = self.run(x);
        let grad_out = upstream(logprobs.view())?;
        if grad_out.dim() != logprobs.dim() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                grad_out.dim(),
                logprobs.dim()
            )));
        }
        let grads = self.backprop(&cache, grad_out.view());
        Ok((logprobs, grads))
    }

    fn backprop(&self, cache: &Cache, grad_out: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
        let h = self.config.hidden_dim;
        let row_sums = grad_out.sum_axis(Axis(1));
        let grad_logits = &grad_out - &(&cache.probs * &row_sums.insert_axis(Axis(1)));
        let head_w = grad_logits.t().dot(&cache.features);
        let head_b = grad_logits.sum_axis(Axis(0));
        let mut grad_hidden = grad_logits.dot(&self.head_weight);

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let gain_grad = (&grad_hidden * &bc.normed).sum_axis(Axis(0));
            let shift_grad = grad_hidden.sum_axis(Axis(0));
            let grad_normed = &grad_hidden * &block.gain;
            let mut grad_residual = Array2::zeros(grad_normed.dim());
            for t in 0..grad_normed.nrows() {
                let g = grad_normed.row(t);
                let r = bc.normed.row(t);
                let m1 = g.sum() / h as f64;
                let m2 = g.iter().zip(r.iter()).map(|(a, b)| a * b).sum::<f64>() / h as f64;
                let inv = bc.inv_std[t];
                for c in 0..h {
                    grad_residual[[t, c]] = inv * (g[c] - m1 - r[c] * m2);
                }
            }
            let n = grad_residual.nrows();
            let mut grad_pre = Array2::zeros((n, 2 * h));
            for t in 0..n {
                for c in 0..h {
                    let g = grad_residual[[t, c]];
                    let gate = bc.gate[[t, c]];
                    grad_pre[[t, c]] = g * gate;
                    grad_pre[[t, h + c]] = g * bc.value[[t, c]] * gate * (1.0 - gate);
                }
            }
            let w_grad = grad_pre.t().dot(&bc.input);
            let b_grad = grad_pre.sum_axis(Axis(0));
            grad_hidden = grad_residual + grad_pre.dot(&block.weight);
            block_grads.push([flat2(w_grad), b_grad.to_vec(), gain_grad.to_vec(), shift_grad.to_vec()]);
        }

        let conv_w = grad_hidden.t().dot(&cache.columns);
        let conv_b = grad_hidden.sum_axis(Axis(0));

        let mut out = Vec::with_capacity(4 + 4 * self.blocks.len());
        out.push(flat2(conv_w));
        out.push(conv_b.to_vec());
        for g in block_grads.into_iter().rev() {
            out.extend(g);
        }
        out.push(flat2(head_w));
        out.push(head_b.to_vec());
        out
    }
}

fn flat2(a: Array2<f64>) -> Vec<f64> {
    if a.is_standard_layout() {
        a.into_raw_vec_and_offset().0
    } else {
        a.iter().copied().collect()
    }
}

/// Parameter gradient keyed by tensor name, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(state: &ModelState) -> Self {
        Self {
            names: state.params.iter().map(|p| p.name.clone()).collect(),
            values: state.params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    pub(crate) fn accumulate(&mut self, grads: &[Vec<f64>], scale: f64) {
        for (acc, g) in self.values.iter_mut().zip(grads) {
            for (a, &v) in acc.iter_mut().zip(g) {
                *a += scale * v;
            }
        }
    }
}

/// Log-probabilities for every sequence in the batch. Each row
/// exponentiates to a distribution over the alphabet.
pub fn forward(model: &ModelState, batch: &Batch) -> Result<Vec<Array2<f64>>> {
    let net = Network::from_state(model)?;
    batch
        .sequences
        .iter()
        .map(|seq| net.forward(seq.to_array().view()))
        .collect()
}

/// Gradient of `Σ_i <upstream_i, logprobs_i>` over the batch.
pub fn backward(model: &ModelState, batch: &Batch, upstream: &[Array2<f64>]) -> Result<Gradients> {
    if upstream.len() != batch.sequences.len() {
        return Err(Error::Shape(format!(
            "{} upstream gradients for {} sequences",
            upstream.len(),
            batch.sequences.len()
        )));
    }
    let net = Network::from_state(model)?;
    let mut grads = Gradients::zeros_like(model);
    for (seq, up) in batch.sequences.iter().zip(upstream) {
        let (_, g) = net.forward_backward(seq.to_array().view(), |_| Ok(up.clone()))?;
        grads.accumulate(&g, 1.0);
    }
    Ok(grads)
}

#[cfg(test)]
fn row_logsumexp(row: ndarray::ArrayView1<'_, f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
