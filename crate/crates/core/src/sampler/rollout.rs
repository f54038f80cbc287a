use rand_chacha::ChaCha8Rng;

use super::{Controller, SampleError};
use crate::envcore::Environment;
use crate::scalar::Real;

/// One episode, stored step-major. Row `t` of `states`/`obs` is the state and
/// observation before action `t`; `rewards`, `evals` and `dones` describe
/// the transition it caused.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<T> {
    pub state_len: usize,
    pub obs_len: usize,
    pub act_len: usize,
    pub states: Vec<T>,
    pub obs: Vec<T>,
    pub actions: Vec<T>,
    pub rewards: Vec<T>,
    pub evals: Vec<T>,
    pub dones: Vec<bool>,
    /// Observation after the last step.
    pub final_obs: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    /// Empty trajectory with room for `hmax` steps, so recording never
    /// reallocates.
    pub fn with_capacity<E: Environment<T> + ?Sized>(env: &E, hmax: usize) -> Self {
        let (ns, no, na) = (
            env.layout().len(),
            env.obs_space().len(),
            env.action_space().len(),
        );
        Self {
            state_len: ns,
            obs_len: no,
            act_len: na,
            states: Vec::with_capacity(hmax * ns),
            obs: Vec::with_capacity(hmax * no),
            actions: Vec::with_capacity(hmax * na),
            rewards: Vec::with_capacity(hmax),
            evals: Vec::with_capacity(hmax),
            dones: Vec::with_capacity(hmax),
            final_obs: Vec::with_capacity(no),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Whether the episode ended on a terminal state rather than the
    /// horizon.
    pub fn terminated(&self) -> bool {
        self.dones.last().copied().unwrap_or(false)
    }

    pub fn clear(&mut self) {
        self.states.clear();
        self.obs.clear();
        self.actions.clear();
        self.rewards.clear();
        self.evals.clear();
        self.dones.clear();
        self.final_obs.clear();
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().map(|r| r.as_f64()).sum()
    }
}

/// Per-worker buffers reused across rollouts.
#[derive(Debug, Clone)]
pub struct RolloutScratch<T, S> {
    state: Vec<T>,
    obs: Vec<T>,
    action: Vec<T>,
    pub controller: S,
}

impl<T: Real, S> RolloutScratch<T, S> {
    pub fn new<E: Environment<T> + ?Sized>(env: &E, controller: S) -> Self {
        Self {
            state: vec![T::zero(); env.layout().len()],
            obs: vec![T::zero(); env.obs_space().len()],
            action: vec![T::zero(); env.action_space().len()],
            controller,
        }
    }
}

/// Runs `env` from its current state under `controller` until it reports
/// done or `hmax` steps have been taken, appending into `traj` (which is
/// cleared first). Does not allocate when `traj` has capacity for `hmax`
/// steps and the scratch buffers are warm.
pub fn rollout_into<T, E, C>(
    env: &mut E,
    controller: &C,
    hmax: usize,
    rng: &mut ChaCha8Rng,
    scratch: &mut RolloutScratch<T, C::Scratch>,
    traj: &mut Trajectory<T>,
) -> Result<(), SampleError>
where
    T: Real,
    E: Environment<T> + ?Sized,
    C: Controller<T> + ?Sized,
{
    traj.clear();
    env.get_obs_into(&mut scratch.obs)
        .map_err(SampleError::env(0))?;
    for _ in 0..hmax {
        env.get_state_into(&mut scratch.state)
            .map_err(SampleError::env(0))?;
        controller.act(
            &scratch.obs,
            rng,
            &mut scratch.controller,
            &mut scratch.action,
        )?;
        traj.states.extend_from_slice(&scratch.state);
        traj.obs.extend_from_slice(&scratch.obs);
        traj.actions.extend_from_slice(&scratch.action);
        let r = env.step(&scratch.action).map_err(SampleError::env(0))?;
        env.get_obs_into(&mut scratch.obs)
            .map_err(SampleError::env(0))?;
        traj.rewards.push(r.reward);
        traj.evals.push(r.eval);
        traj.dones.push(r.done);
        if r.done {
            break;
        }
    }
    traj.final_obs.extend_from_slice(&scratch.obs);
    Ok(())
}

/// Allocating convenience wrapper around [`rollout_into`].
pub fn rollout<T, E, C>(
    env: &mut E,
    controller: &C,
    hmax: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory<T>, SampleError>
where
    T: Real,
    E: Environment<T> + ?Sized,
    C: Controller<T> + ?Sized,
{
    let mut scratch = RolloutScratch::new(env, controller.scratch());
    let mut traj = Trajectory::with_capacity(env, hmax);
    rollout_into(env, controller, hmax, rng, &mut scratch, &mut traj)?;
    Ok(traj)
}
