//! Adaptive-moment optimizer with decoupled weight decay and a
//! warmup-then-cosine learning-rate schedule.

use std::collections::HashMap;

use crate::backbone::ModelParams;
use crate::numerics::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct OptimConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Peak learning rate for fast-weight-sublayer parameters (`.ttt.`).
    pub lr_ttt: f64,
    /// Peak learning rate for everything else.
    pub lr_other: f64,
    /// Fraction of total steps spent in linear warmup.
    pub warmup_frac: f64,
    pub total_steps: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.05,
            lr_ttt: 1e-4,
            lr_other: 1e-5,
            warmup_frac: 0.05,
            total_steps: 1,
        }
    }
}

pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

pub struct AdamW {
    pub config: OptimConfig,
    pub moments: HashMap<String, Moments>,
    /// Number of optimizer steps taken (drives bias correction).
    pub step: usize,
}

impl AdamW {
    pub fn new(config: OptimConfig) -> AdamW {
        AdamW { config, moments: HashMap::new(), step: 0 }
    }

    /// Warmup then cosine decay, scaled per parameter group.
    pub fn lr_at(&self, step: usize, ttt_group: bool) -> f64 {
        let peak = if ttt_group { self.config.lr_ttt } else { self.config.lr_other };
        let total = self.config.total_steps.max(1) as f64;
        let warmup = (self.config.warmup_frac * total).max(1.0);
        let s = step as f64;
        if s < warmup {
            peak * (s + 1.0) / warmup
        } else {
            let t = ((s - warmup) / (total - warmup).max(1.0)).clamp(0.0, 1.0);
            peak * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }

    /// Apply one update to every parameter that accumulated a gradient.
    pub fn apply<T: Real>(&mut self, params: &mut ModelParams<T>) {
        let step = self.step;
        self.step += 1;
        let c = self.config.clone();
        let bias1 = 1.0 - c.beta1.powi(step as i32 + 1);
        let bias2 = 1.0 - c.beta2.powi(step as i32 + 1);
        let lr_ttt = self.lr_at(step, true);
        let lr_other = self.lr_at(step, false);
        let moments = &mut self.moments;
        params.visit(&mut |name, tensor| {
            let Some(grad) = tensor.grad() else { return };
            let slot = moments
                .entry(name.to_string())
                .or_insert_with(|| Moments { m: vec![0.0; grad.len()], v: vec![0.0; grad.len()] });
            let lr = if name.contains(".ttt.") { lr_ttt } else { lr_other };
            let mut data: Vec<T> = tensor.data().to_vec();
            for i in 0..data.len() {
                let g = grad[i].into_f64();
                slot.m[i] = c.beta1 * slot.m[i] + (1.0 - c.beta1) * g;
                slot.v[i] = c.beta2 * slot.v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = slot.m[i] / bias1;
                let v_hat = slot.v[i] / bias2;
                let w = data[i].into_f64();
                let update = m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * w;
                data[i] = T::from_f64(w - lr * update);
            }
            *tensor = Tensor::from_vec(tensor.shape(), data).requiring_grad();
        });
    }
}
