//! Rollouts, deterministic parallel trajectory collection and throughput
//! benchmarks.

mod bench;
mod controller;
mod parallel;
mod rollout;

pub use bench::{
    benchmark_throughput, throughput_rows, write_throughput_csv, ThroughputReport, ThroughputRow,
};
pub use controller::{Controller, Deterministic, FnController, RandomController, ZeroController};
pub use parallel::{parallel_rollouts, trajectory_rng, SamplerConfig, TrajectoryBatch};
pub use rollout::{rollout, rollout_into, RolloutScratch, Trajectory};

use crate::envcore::EnvError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("worker {worker}: environment construction failed: {source}")]
    Factory { worker: usize, source: EnvError },
    #[error("worker {worker}: {source}")]
    Env { worker: usize, source: EnvError },
    #[error("controller returned {got} action values, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("a sampling worker panicked")]
    Panicked,
}

impl SampleError {
    pub(crate) fn env(worker: usize) -> impl Fn(EnvError) -> SampleError {
        move |source| SampleError::Env { worker, source }
    }

    pub(crate) fn with_worker(self, worker: usize) -> Self {
        match self {
            SampleError::Env { source, .. } => SampleError::Env { worker, source },
            e => e,
        }
    }
}
