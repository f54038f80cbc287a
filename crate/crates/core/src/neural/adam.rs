use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
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

/// Adam optimizer state. Moments are kept in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Descends along `grad` (the gradient of a loss to be minimized).
    pub fn step<T: Real>(&mut self, params: &mut [T], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            let delta = lr * mhat / (vhat.sqrt() + eps);
            if delta != 0.0 {
                params[i] -= T::of(delta);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = vec![0.3f64, -1.2, 7.0];
        let before = p.clone();
        let mut adam = Adam::new(
            3,
            AdamConfig {
                lr: 0.0,
                ..Default::default()
            },
        );
        for _ in 0..10 {
            adam.step(&mut p, &[1.0, -50.0, 1e-9]);
        }
        assert_eq!(p, before);
        assert_eq!(adam.steps(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![1.0f64, 1.0];
        let mut adam = Adam::new(2, AdamConfig::default());
        adam.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![2.0f64];
        let mut adam = Adam::new(
            1,
            AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
        );
        for _ in 0..2000 {
            let g = [2.0 * (p[0] + 1.0)];
            adam.step(&mut p, &g);
        }
        assert!((p[0] + 1.0).abs() < 1e-3);
    }
}
