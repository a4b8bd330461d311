//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::layers::Param;
use crate::tensor::Real;
use crate::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { lr: 2e-5, beta1: 0.5, beta2: 0.999, epsilon: 1e-8, batch_size: 1 }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size >= 1;
        if ok {
            Ok(())
        } else {
            Err(NetError::InvalidSpec(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// One Adam update of `value` in place; `t` is the 1-based step count.
#[allow(clippy::too_many_arguments)]
pub fn adam_update<T: Real>(value: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &OptimConfig) -> Result<(), NetError> {
    if grad.len() != value.len() || m.len() != value.len() || v.len() != value.len() {
        return Err(NetError::Shape(format!(
            "adam: value {} grad {} m {} v {}",
            value.len(),
            grad.len(),
            m.len(),
            v.len()
        )));
    }
    if t == 0 {
        return Err(NetError::InvalidSpec("adam step count starts at 1".into()));
    }
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let c1 = T::of(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::of(1.0 - cfg.beta2.powi(t as i32));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.epsilon));
    let (inv_c1, inv_c2) = (T::one() / c1, T::one() / c2);
    for (((p, &g), m), v) in value.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
        *p -= lr * (*m * inv_c1) / ((*v * inv_c2).sqrt() + eps);
    }
    Ok(())
}

/// First and second moments for every parameter of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[&Param<T>]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    /// Applies one update to all parameters using their accumulated grads.
    pub fn step(&mut self, params: &mut [&mut Param<T>], cfg: &OptimConfig) -> Result<(), NetError> {
        if params.len() != self.m.len() {
            return Err(NetError::Shape(format!("adam: {} params, {} moment slots", params.len(), self.m.len())));
        }
        self.step += 1;
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Param { value, grad, .. } = &mut **p;
            adam_update(value, grad, m, v, self.step, cfg)?;
        }
        Ok(())
    }
}
