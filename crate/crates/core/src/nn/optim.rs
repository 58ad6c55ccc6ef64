use super::{Gradients, ModelState};
use crate::{Error, Result};

/// AdamW hyper-parameters. Defaults: `β1 = 0.9`, `β2 = 0.98`, `ε = 1e-8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// AdamW with decoupled weight decay. Moments live here, not in the model
/// state, so rewinding a model always starts from a fresh optimizer.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, state: &ModelState) -> Self {
        let zeros: Vec<Vec<f64>> = state.params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self, tensor: usize) -> &[f64] {
        &self.first[tensor]
    }

    /// Applies one update at learning rate `lr`:
    /// `θ ← θ(1 − lr·λ) − lr·m̂ / (sqrt(v̂) + ε)`.
    pub fn step(&mut self, model: &mut ModelState, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.names.len() != model.params.len() {
            return Err(Error::KeyMismatch(format!(
                "{} gradients for {} parameters",
                grads.names.len(),
                model.params.len()
            )));
        }
        for ((name, g), p) in grads.names.iter().zip(&grads.values).zip(&model.params) {
            if *name != p.name || g.len() != p.len() {
                return Err(Error::KeyMismatch(format!(
                    "gradient {name} ({}) vs parameter {} ({})",
                    g.len(),
                    p.name,
                    p.len()
                )));
            }
        }
        if self.first.len() != model.params.len() {
            return Err(Error::KeyMismatch("optimizer built for a different model".into()));
        }

        self.steps += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.steps as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;

        for (idx, p) in model.params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.first[idx], &mut self.second[idx], &grads.values[idx]);
            for i in 0..p.values.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                let w = f64::from(p.values[i]) * decay - lr * m_hat / (v_hat.sqrt() + eps);
                p.values[i] = w as f32;
            }
        }
        Ok(())
    }
}
