use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};

/// A named trainable tensor with its gradient accumulator and AdaDelta state.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub accum_sq_grad: Tensor,
    pub accum_sq_update: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            grad: zeros.clone(),
            accum_sq_grad: zeros.clone(),
            accum_sq_update: zeros,
            value,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, Tensor::zeros(shape))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn reset_optimizer_state(&mut self) {
        self.accum_sq_grad.fill(0.0);
        self.accum_sq_update.fill(0.0);
    }
}

/// AdaDelta with a global step multiplier.
///
/// The running average of squared updates tracks the unscaled AdaDelta step,
/// so `lr` only rescales what is applied to the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaDelta {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdaDelta {
    fn default() -> Self {
        Self { lr: 0.005, rho: 0.95, eps: 1e-6 }
    }
}

impl AdaDelta {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NumericsError::BadHyperParameter(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(NumericsError::BadHyperParameter(format!("rho must be in (0,1), got {}", self.rho)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(NumericsError::BadHyperParameter(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }

    /// Applies one update to `p` and zeroes its gradient.
    pub fn step(&self, p: &mut Parameter) -> Result<(), NumericsError> {
        adadelta_step(p, self.lr, self.rho, self.eps)
    }
}

pub fn adadelta_step(p: &mut Parameter, lr: f64, rho: f64, eps: f64) -> Result<(), NumericsError> {
    AdaDelta { lr, rho, eps }.validate()?;
    if !p.grad.is_finite() {
        return Err(NumericsError::NonFinite(format!("gradient of parameter `{}`", p.name)));
    }
    let values = p.value.data_mut();
    let grads = p.grad.data();
    let sq_g = p.accum_sq_grad.data_mut();
    let sq_dx = p.accum_sq_update.data_mut();
    for i in 0..values.len() {
        let g = grads[i];
        sq_g[i] = rho * sq_g[i] + (1.0 - rho) * g * g;
        let delta = ((sq_dx[i] + eps).sqrt() / (sq_g[i] + eps).sqrt()) * g;
        sq_dx[i] = rho * sq_dx[i] + (1.0 - rho) * delta * delta;
        values[i] -= lr * delta;
    }
    p.zero_grad();
    Ok(())
}
