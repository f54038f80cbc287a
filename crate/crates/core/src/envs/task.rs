//! Episode-level success for goal-reaching tasks.

use serde::{Deserialize, Serialize};

use super::reacher::EPISODE_LEN;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum TaskError {
    #[error("incomplete episode: {got} of {expected} steps")]
    Incomplete { expected: usize, got: usize },
    #[error("success radius must be positive, got {0}")]
    BadRadius(f64),
}

/// A reaching goal together with the rule that decides success.
///
/// An episode succeeds when the mean evaluation (goal distance) over its
/// final quarter is below `success_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachTask {
    pub goal: [f64; 2],
    pub success_radius: f64,
    pub episode_len: usize,
}

impl ReachTask {
    pub fn new(goal: [f64; 2], success_radius: f64) -> Result<Self, TaskError> {
        if !(success_radius > 0.0) {
            return Err(TaskError::BadRadius(success_radius));
        }
        Ok(Self {
            goal,
            success_radius,
            episode_len: EPISODE_LEN,
        })
    }

    /// Number of trailing steps averaged by the success rule.
    pub fn final_quarter_len(&self) -> usize {
        self.episode_len.div_ceil(4)
    }

    /// Applies the final-quarter-mean rule to the per-step evaluations of a
    /// complete episode.
    pub fn episode_success(&self, evals: &[f64]) -> Result<bool, TaskError> {
        episode_success(evals, self.episode_len, self.success_radius)
    }
}

/// Final-quarter-mean success rule for an episode of `episode_len` steps.
pub fn episode_success(evals: &[f64], episode_len: usize, radius: f64) -> Result<bool, TaskError> {
    if evals.len() != episode_len || episode_len == 0 {
        return Err(TaskError::Incomplete {
            expected: episode_len,
            got: evals.len(),
        });
    }
    let tail = &evals[episode_len - episode_len.div_ceil(4)..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    Ok(mean < radius)
}
