use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use super::rollout::{rollout_into, RolloutScratch, Trajectory};
use super::{Controller, SampleError};
use crate::envcore::{EnvError, Environment};
use crate::scalar::Real;
use crate::seed;

/// Settings for [`parallel_rollouts`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Minimum number of environment steps to collect.
    pub n_samples: usize,
    pub hmax: usize,
    pub workers: usize,
    pub seed: u64,
}

/// Whole trajectories concatenated step-major. Trajectory `i` occupies rows
/// `offsets[i]..offsets[i + 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryBatch<T> {
    pub state_len: usize,
    pub obs_len: usize,
    pub act_len: usize,
    pub states: Vec<T>,
    pub obs: Vec<T>,
    pub actions: Vec<T>,
    pub rewards: Vec<T>,
    pub evals: Vec<T>,
    pub dones: Vec<bool>,
    pub offsets: Vec<usize>,
    /// Observation after each trajectory's last step, `obs_len` per row.
    pub final_obs: Vec<T>,
}

impl<T: Real> TrajectoryBatch<T> {
    pub fn from_trajectories(trajs: &[Trajectory<T>]) -> Self {
        let mut b = Self {
            offsets: vec![0],
            ..Default::default()
        };
        if let Some(t) = trajs.first() {
            b.state_len = t.state_len;
            b.obs_len = t.obs_len;
            b.act_len = t.act_len;
        }
        for t in trajs {
            b.states.extend_from_slice(&t.states);
            b.obs.extend_from_slice(&t.obs);
            b.actions.extend_from_slice(&t.actions);
            b.rewards.extend_from_slice(&t.rewards);
            b.evals.extend_from_slice(&t.evals);
            b.dones.extend_from_slice(&t.dones);
            b.final_obs.extend_from_slice(&t.final_obs);
            b.offsets.push(b.rewards.len());
        }
        b
    }

    pub fn num_trajectories(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn total_steps(&self) -> usize {
        self.rewards.len()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn terminated(&self, i: usize) -> bool {
        let r = self.range(i);
        r.end > r.start && self.dones[r.end - 1]
    }

    pub fn final_obs(&self, i: usize) -> &[T] {
        &self.final_obs[i * self.obs_len..(i + 1) * self.obs_len]
    }

    /// Undiscounted return of each trajectory.
    pub fn returns(&self) -> Vec<f64> {
        (0..self.num_trajectories())
            .map(|i| self.rewards[self.range(i)].iter().map(|r| r.as_f64()).sum())
            .collect()
    }

    /// Extracts trajectory `i` as a standalone record.
    pub fn trajectory(&self, i: usize) -> Trajectory<T> {
        let r = self.range(i);
        Trajectory {
            state_len: self.state_len,
            obs_len: self.obs_len,
            act_len: self.act_len,
            states: self.states[r.start * self.state_len..r.end * self.state_len].to_vec(),
            obs: self.obs[r.start * self.obs_len..r.end * self.obs_len].to_vec(),
            actions: self.actions[r.start * self.act_len..r.end * self.act_len].to_vec(),
            rewards: self.rewards[r.clone()].to_vec(),
            evals: self.evals[r.clone()].to_vec(),
            dones: self.dones[r].to_vec(),
            final_obs: self.final_obs(i).to_vec(),
        }
    }
}

/// Generator for trajectory `index` of a batch rooted at `seed`. It drives
/// both the randomized reset and the controller.
pub fn trajectory_rng(seed: u64, index: usize) -> rand_chacha::ChaCha8Rng {
    seed::stream(seed::derive(seed, "trajectory"), index as u64)
}

/// Collects whole trajectories until at least `n_samples` steps exist.
///
/// Trajectory `i` starts from `rand_reset` and is driven by
/// [`trajectory_rng`]`(seed, i)`, so its content depends only on
/// `(seed, i)`. Workers claim indices from a shared counter and the result
/// is the shortest index prefix reaching `n_samples` steps, which makes the
/// batch identical for every worker count.
pub fn parallel_rollouts<T, E, F, C>(
    factory: F,
    controller: &C,
    config: &SamplerConfig,
) -> Result<TrajectoryBatch<T>, SampleError>
where
    T: Real,
    E: Environment<T>,
    F: Fn(usize) -> Result<E, EnvError> + Sync,
    C: Controller<T> + ?Sized,
{
    if config.workers == 0 || config.n_samples == 0 || config.hmax == 0 {
        return Err(SampleError::Config(format!(
            "workers, n_samples and hmax must be at least 1 (got {}, {}, {})",
            config.workers, config.n_samples, config.hmax
        )));
    }
    let next = AtomicUsize::new(0);
    let done_steps = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Vec<Result<Vec<(usize, Trajectory<T>)>, SampleError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.workers)
            .map(|w| {
                let (factory, next, done_steps, abort) = (&factory, &next, &done_steps, &abort);
                s.spawn(
                    move || -> Result<Vec<(usize, Trajectory<T>)>, SampleError> {
                        let run = || {
                            let mut env = factory(w)
                                .map_err(|source| SampleError::Factory { worker: w, source })?;
                            let mut scratch = RolloutScratch::new(&env, controller.scratch());
                            let mut out = Vec::new();
                            while !abort.load(Ordering::Relaxed)
                                && done_steps.load(Ordering::Acquire) < config.n_samples
                            {
                                let i = next.fetch_add(1, Ordering::AcqRel);
                                let mut rng = trajectory_rng(config.seed, i);
                                env.rand_reset(&mut rng);
                                let mut traj = Trajectory::with_capacity(&env, config.hmax);
                                rollout_into(
                                    &mut env,
                                    controller,
                                    config.hmax,
                                    &mut rng,
                                    &mut scratch,
                                    &mut traj,
                                )
                                .map_err(|e| e.with_worker(w))?;
                                done_steps.fetch_add(traj.len(), Ordering::AcqRel);
                                out.push((i, traj));
                            }
                            Ok(out)
                        };
                        let r = run();
                        if r.is_err() {
                            abort.store(true, Ordering::Relaxed);
                        }
                        r
                    },
                )
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(SampleError::Panicked)))
            .collect()
    });
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    all.sort_by_key(|(i, _)| *i);
    let mut total = 0;
    let mut keep = 0;
    for (k, (i, t)) in all.iter().enumerate() {
        debug_assert_eq!(*i, k, "claimed indices form a prefix");
        total += t.len();
        keep = k + 1;
        if total >= config.n_samples {
            break;
        }
    }
    all.truncate(keep);
    let trajs: Vec<Trajectory<T>> = all.into_iter().map(|(_, t)| t).collect();
    Ok(TrajectoryBatch::from_trajectories(&trajs))
}
