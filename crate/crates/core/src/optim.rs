//! First-order optimizers over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            alpha: 0.99,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_shapes(self.m.len(), params, grads)?;
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.t as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// RMSProp without momentum or centering.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    v: Vec<f64>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, n_params: usize) -> Self {
        Self {
            config,
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_shapes(self.v.len(), params, grads)?;
        let RmsPropConfig { lr, alpha, eps } = self.config;
        for i in 0..params.len() {
            let g = grads[i];
            self.v[i] = alpha * self.v[i] + (1.0 - alpha) * g * g;
            params[i] -= lr * g / (self.v[i].sqrt() + eps);
        }
        Ok(())
    }
}

fn check_shapes(n: usize, params: &[f64], grads: &[f64]) -> Result<()> {
    if params.len() != n || grads.len() != n {
        return Err(Error::Usage(format!(
            "optimizer built for {n} parameters, got {} params and {} grads",
            params.len(),
            grads.len()
        )));
    }
    Ok(())
}

/// Either optimizer behind one interface.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Adam(Adam),
    RmsProp(RmsProp),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        match self {
            Optimizer::Adam(o) => o.step(params, grads),
            Optimizer::RmsProp(o) => o.step(params, grads),
        }
    }
}
