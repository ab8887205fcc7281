use alloc::string::ToString;
use alloc::vec::Vec;

use super::{Gradients, NetworkParams, NnError, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-5, weight_decay: 1e-5 }
    }
}

/// Adam moments, shape-congruent with the parameters they update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &NetworkParams<T>, config: AdamConfig) -> Self {
        let zeros = || params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState { config, m: zeros(), v: zeros(), step: 0 }
    }

    /// One Adam step with bias correction. Non-finite gradients are rejected
    /// and leave both the parameters and the moments untouched.
    pub fn apply(&mut self, params: &mut NetworkParams<T>, grads: &Gradients<T>) -> Result<(), NnError> {
        if grads.tensors.len() != params.tensors.len() || self.m.len() != params.tensors.len() {
            return Err(NnError::Shape("optimizer, gradient and parameter tensor counts differ".to_string()));
        }
        for (i, (g, p)) in grads.tensors.iter().zip(&params.tensors).enumerate() {
            if g.shape() != p.shape() || self.m[i].shape() != p.shape() {
                return Err(NnError::Shape(alloc::format!("tensor {} shape {:?} vs {:?}", super::TENSOR_NAMES[i], g.shape(), p.shape())));
            }
            if g.data.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { tensor: super::TENSOR_NAMES[i].to_string() });
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let wd = T::of(c.weight_decay);
        let step_size = T::of(c.lr / bc1);
        let inv_sqrt_bc2 = T::of(1.0 / libm::sqrt(bc2));
        let eps = T::of(c.eps);

        for i in 0..params.tensors.len() {
            let p = &mut params.tensors[i].data;
            let g = &grads.tensors[i].data;
            let m = &mut self.m[i].data;
            let v = &mut self.v[i].data;
            for k in 0..p.len() {
                let gk = g[k] + wd * p[k];
                m[k] = b1 * m[k] + one_b1 * gk;
                v[k] = b2 * v[k] + one_b2 * gk * gk;
                let denom = v[k].sqrt() * inv_sqrt_bc2 + eps;
                p[k] -= step_size * m[k] / denom;
            }
        }
        params.version += 1;
        Ok(())
    }
}
