//! Adam with bias correction, on flat real parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One in-place Adam update of `params` along `-grads`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len());
    if state.m.len() != params.len() {
        *state = AdamState::new(params.len());
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        for _ in 0..10 {
            adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default());
        }
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default();
        let g = [0.3, -2.0, 1e-9];
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &g, &mut s, &cfg);
        for i in 0..3 {
            let want = -cfg.lr * g[i] / (g[i].abs() + cfg.eps);
            assert!((p[i] - want).abs() < 1e-15, "{} vs {want}", p[i]);
        }
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(2);
        for _ in 0..100 {
            adam_step(&mut p, &[0.5, -0.5], &mut s, &AdamConfig::default());
        }
        assert!(p[0] < -0.5 && p[1] > 0.5);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![3.0];
        let mut s = AdamState::new(1);
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        for _ in 0..500 {
            let g = [2.0 * (p[0] - 1.0)];
            adam_step(&mut p, &g, &mut s, &cfg);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }
}
