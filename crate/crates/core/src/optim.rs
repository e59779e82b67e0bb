//! Adam with bias correction.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates, one pair of buffers per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| alloc::vec![0.0; p.len()]).collect();
        Self { step: 0, m: zeros(), v: zeros() }
    }

    /// Checks that the buffers line up with `params`.
    pub fn matches(&self, params: &[Tensor]) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params.iter().zip(&self.m).zip(&self.v).all(|((p, m), v)| p.len() == m.len() && p.len() == v.len())
    }
}

pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || !state.matches(params) {
        return Err(Error::shape(format!("{} parameters, {} gradients", params.len(), grads.len())));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (k, (w, gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            *w -= cfg.lr * mh / (libm::sqrt(vh) + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<Tensor> {
        alloc::vec![Tensor::new(alloc::vec![1], alloc::vec![v]).unwrap()]
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar(0.7);
        let mut s = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &scalar(0.0), &mut s, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p[0].data()[0], 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(0.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &scalar(1.0), &mut s, &AdamConfig::default()).unwrap();
        assert!((p[0].data()[0] + 0.001).abs() < 1e-9);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = scalar(0.0);
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        for _ in 0..200 {
            let g = 2.0 * (p[0].data()[0] - 3.0);
            adam_step(&mut p, &scalar(g), &mut s, &cfg).unwrap();
        }
        assert!((p[0].data()[0] - 3.0).abs() < 0.1);
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut p = scalar(0.0);
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &[], &mut s, &AdamConfig::default()).is_err());
    }
}
