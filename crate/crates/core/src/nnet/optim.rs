use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup followed by cosine decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub warmup_frac: f64,
    pub lr_start: f64,
    pub lr_peak: f64,
    pub lr_end: f64,
    pub total_steps: u64,
}

impl Schedule {
    pub fn new(total_steps: u64) -> Self {
        Self {
            warmup_frac: 0.10,
            lr_start: 1e-5,
            lr_peak: 1e-4,
            lr_end: 1e-6,
            total_steps,
        }
    }

    pub fn constant(lr: f64) -> Self {
        Self {
            warmup_frac: 0.0,
            lr_start: lr,
            lr_peak: lr,
            lr_end: lr,
            total_steps: 1,
        }
    }

    /// Warmup length in steps, kept strictly inside `(0, total_steps)` when
    /// the run has at least two steps.
    pub fn warmup_steps(&self) -> u64 {
        let w = (self.warmup_frac * self.total_steps as f64).round() as u64;
        if self.total_steps >= 2 {
            w.clamp(1, self.total_steps - 1)
        } else {
            w.max(1)
        }
    }

    pub fn lr(&self, step: u64) -> f64 {
        let w = self.warmup_steps();
        if step <= w {
            return self.lr_start + (self.lr_peak - self.lr_start) * step as f64 / w as f64;
        }
        if step >= self.total_steps {
            return self.lr_end;
        }
        let progress = (step - w) as f64 / (self.total_steps - w) as f64;
        self.lr_end + (self.lr_peak - self.lr_end) * 0.5 * (1.0 + (PI * progress).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW-style) weight decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub schedule: Schedule,
    pub adam: AdamConfig,
}

impl OptimizerState {
    pub fn new(n_params: usize, schedule: Schedule, adam: AdamConfig) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            schedule,
            adam,
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.schedule.lr(self.step)
    }

    /// One Adam update at the scheduled learning rate; returns that rate.
    pub fn adam_step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<f64> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let lr = self.current_lr();
        let AdamConfig { beta1, beta2, eps, weight_decay } = self.adam;
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * params[i]);
        }
        self.step += 1;
        Ok(lr)
    }
}
