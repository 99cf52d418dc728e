use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for every parameter of one store.
#[derive(Clone, Debug)]
pub struct AdamState<T: Real> {
    pub config: AdamConfig,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .slots()
                .map(|s| Matrix::zeros(s.value.rows(), s.value.cols()))
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update from the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::shape("adam_step", self.first.len(), store.len()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let step_size = T::lit(c.lr / bias1);
        let inv_sqrt_bias2 = T::lit(1.0 / bias2.sqrt());
        let eps = T::lit(c.eps);

        for ((slot, m), v) in store.slots_mut().zip(&mut self.first).zip(&mut self.second) {
            if !slot.trainable {
                continue;
            }
            if m.shape() != slot.value.shape() {
                return Err(Error::shape("adam_step", format!("{:?}", m.shape()), format!("{:?}", slot.value.shape())));
            }
            let grad = slot.grad.as_slice();
            let (mv, vv) = (m.as_mut_slice(), v.as_mut_slice());
            for (i, p) in slot.value.as_mut_slice().iter_mut().enumerate() {
                let g = grad[i];
                mv[i] = b1 * mv[i] + one_b1 * g;
                vv[i] = b2 * vv[i] + one_b2 * g * g;
                let denom = vv[i].sqrt() * inv_sqrt_bias2 + eps;
                *p = *p - step_size * mv[i] / denom;
            }
        }
        Ok(())
    }
}
