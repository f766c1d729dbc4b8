//! AdamW: bias-corrected Adam with decoupled weight decay.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Parameter(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::Parameter(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Parameter(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Parameter(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Optimizer state: one (first, second) moment pair per named parameter and a
/// shared step counter bumped once per `apply`.
#[derive(Debug)]
pub struct AdamW {
    cfg: AdamWConfig,
    step: u64,
    slots: HashMap<String, (Matrix, Matrix)>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            step: 0,
            slots: HashMap::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Updates one named parameter in place using its gradient. Call once per
    /// parameter per optimization step, after [`AdamW::begin_step`].
    pub fn update(&mut self, name: &str, param: &mut Matrix, grad: &Matrix) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(crate::error::dim_err("adamw update", param.shape(), grad.shape()));
        }
        if let Some(bad) = grad.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter '{name}' at entry {bad}"
            )));
        }
        let (m, v) = self
            .slots
            .entry(name.to_string())
            .or_insert_with(|| (Matrix::zeros(param.rows(), param.cols()), Matrix::zeros(param.rows(), param.cols())));
        if m.shape() != param.shape() {
            return Err(Error::Contract(format!(
                "optimizer slot for '{name}' has shape {:?}, parameter has {:?}",
                m.shape(),
                param.shape()
            )));
        }
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        let p = param.data_mut();
        let g = grad.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..p.len() {
            md[i] = self.cfg.beta1 * md[i] + (1.0 - self.cfg.beta1) * g[i];
            vd[i] = self.cfg.beta2 * vd[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            p[i] -= self.cfg.lr * (m_hat / (v_hat.sqrt() + self.cfg.eps) + self.cfg.weight_decay * p[i]);
        }
        Ok(())
    }

    /// Advances the shared step counter; every `update` until the next
    /// `begin_step` uses the new count for bias correction.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }
}
