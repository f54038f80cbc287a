//! Natural policy gradient training.
//!
//! Each iteration samples a batch with the stochastic policy, computes GAE
//! advantages against a learned value baseline, solves `F x = g` with
//! conjugate gradient using a matrix-free Fisher operator, and steps the
//! policy by `sqrt(delta / g.x) x`. The value network is refit on the
//! batch afterwards.

mod gae;
mod step;
mod train;

use serde::{Deserialize, Serialize};

use crate::envcore::EnvError;
use crate::neural::{NeuralError, ValueTrainerConfig};
use crate::sampler::SampleError;

pub use gae::{batch_advantages, gae_advantages, gae_into, normalize, Advantages};
pub use step::{
    fisher_vector_product, mean_kl, natural_step, npg_step, policy_step, FisherOperator,
    NaturalStep, PolicyStep, StepReport,
};
pub use train::{
    evaluate_deterministic, read_reports, train, Checkpoint, IterationTiming, TrainOptions,
    TrainOutcome, CHECKPOINT_DIR, LOG_CSV, LOG_JSONL, TIMING_CSV,
};

/// Added to `g.x` in the step-size denominator.
pub const TINY: f64 = 1e-20;

#[derive(Debug, thiserror::Error)]
pub enum NpgError {
    #[error("invalid npg config: {0}")]
    Config(String),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl NpgError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        NpgError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpgConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Normalized step size `delta`.
    pub step_size: f64,
    /// Minimum number of environment steps per iteration.
    pub samples: usize,
    pub hmax: usize,
    pub iterations: usize,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub damping: f64,
    /// Shift and scale advantages to zero mean, unit variance per batch.
    pub normalize_advantages: bool,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub value: ValueTrainerConfig,
    /// Deterministic (mean-action) episodes evaluated per iteration.
    pub eval_episodes: usize,
    pub checkpoint_every: usize,
}

impl Default for NpgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            gae_lambda: 0.97,
            step_size: 0.1,
            samples: 10_000,
            hmax: 1000,
            iterations: 100,
            cg_iters: 12,
            cg_tol: 1e-10,
            damping: 1e-4,
            normalize_advantages: true,
            policy_hidden: vec![64, 64],
            value_hidden: vec![128, 128],
            value: ValueTrainerConfig::default(),
            eval_episodes: 10,
            checkpoint_every: 25,
        }
    }
}

impl NpgConfig {
    pub fn validate(&self) -> Result<(), NpgError> {
        let bad = |m: String| Err(NpgError::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!(
                "gae_lambda must be in [0, 1], got {}",
                self.gae_lambda
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!(
                "step_size must be positive, got {}",
                self.step_size
            ));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return bad(format!(
                "damping must be non-negative, got {}",
                self.damping
            ));
        }
        if !(self.cg_tol >= 0.0) {
            return bad(format!("cg_tol must be non-negative, got {}", self.cg_tol));
        }
        for (name, v) in [
            ("samples", self.samples),
            ("hmax", self.hmax),
            ("cg_iters", self.cg_iters),
            ("checkpoint_every", self.checkpoint_every),
            ("value.epochs", self.value.epochs),
            ("value.batch_size", self.value.batch_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.policy_hidden.contains(&0) || self.value_hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }
}

/// Per-iteration training statistics. Everything except `wall_s` is a
/// deterministic function of the seed; `wall_s` is excluded from the
/// serialized form and logged separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub trajectories: usize,
    pub samples: usize,
    /// Mean return of the sampled (stochastic) trajectories.
    pub stoc_return: f64,
    /// Mean return of the deterministic evaluation episodes.
    pub det_return: f64,
    /// Mean per-step eval metric over the sampled batch.
    pub eval_mean: f64,
    /// Mean eval metric at the last step of the deterministic episodes.
    pub det_final_eval: f64,
    pub kl: f64,
    pub value_loss_before: f64,
    pub value_loss_after: f64,
    pub grad_norm: f64,
    pub gx: f64,
    pub step_norm: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub degenerate: bool,
    #[serde(skip)]
    pub wall_s: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        NpgConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        for c in [
            NpgConfig {
                gamma: 1.5,
                ..Default::default()
            },
            NpgConfig {
                gae_lambda: -0.1,
                ..Default::default()
            },
            NpgConfig {
                step_size: 0.0,
                ..Default::default()
            },
            NpgConfig {
                damping: -1.0,
                ..Default::default()
            },
            NpgConfig {
                samples: 0,
                ..Default::default()
            },
            NpgConfig {
                value_hidden: vec![0],
                ..Default::default()
            },
        ] {
            assert!(matches!(c.validate(), Err(NpgError::Config(_))));
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = serde_json::from_str::<NpgConfig>(r#"{"gamma": 0.9, "lr": 1}"#);
        assert!(e.is_err());
        let c: NpgConfig = serde_json::from_str(r#"{"gamma": 0.9}"#).unwrap();
        assert_eq!(c.gae_lambda, 0.97);
    }
}
