//! The environment interface.
//!
//! Every consumer (samplers, MPPI, NPG, the live loop) talks to simulators
//! through [`Environment`]. The interface differs from the usual
//! reset/step/observe triple in three ways:
//!
//! * the complete simulator state can be read and written at any time, so
//!   planners can branch rollouts from a snapshot;
//! * every accessor has an in-place form that writes into a caller-owned
//!   buffer and performs no heap allocation;
//! * besides the shaped training reward, each step reports an evaluation
//!   metric that is meant to be read by humans.
//!
//! Flat state vectors use the layout `[qpos | qvel | t | task]`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what}[{index}] = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        what: &'static str,
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("action[{index}] is not finite ({value})")]
    NonFiniteAction { index: usize, value: f64 },
    #[error("{model}: non-finite dynamics at t = {time}; qpos = {qpos:?}, qvel = {qvel:?}")]
    Fault {
        model: &'static str,
        time: f64,
        qpos: Vec<f64>,
        qvel: Vec<f64>,
    },
    #[error("invalid {model} configuration: {reason}")]
    InvalidConfig { model: &'static str, reason: String },
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SpaceError {
    #[error("space has zero elements (dims = {0:?})")]
    Empty(Vec<usize>),
    #[error("bounds have length {got}, space has {expected} elements")]
    BoundsLength { expected: usize, got: usize },
    #[error("lo[{0}] > hi[{0}]")]
    Inverted(usize),
}

/// Shape and elementwise bounds of a state, observation, action, reward or
/// evaluation vector. Unbounded elements use infinite bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Space<T> {
    dims: Vec<usize>,
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> Space<T> {
    pub fn new(dims: Vec<usize>, lo: Vec<T>, hi: Vec<T>) -> Result<Self, SpaceError> {
        let len: usize = dims.iter().product();
        if dims.is_empty() || len == 0 {
            return Err(SpaceError::Empty(dims));
        }
        for b in [&lo, &hi] {
            if b.len() != len {
                return Err(SpaceError::BoundsLength {
                    expected: len,
                    got: b.len(),
                });
            }
        }
        if let Some(i) = lo.iter().zip(&hi).position(|(l, h)| !(l <= h)) {
            return Err(SpaceError::Inverted(i));
        }
        Ok(Self { dims, lo, hi })
    }

    /// Rank-1 space with infinite bounds.
    pub fn unbounded(len: usize) -> Self {
        Self::new(
            vec![len],
            vec![T::neg_infinity(); len],
            vec![T::infinity(); len],
        )
        .expect("unbounded space with positive length")
    }

    /// Rank-1 space with identical bounds on every element.
    pub fn uniform(len: usize, lo: T, hi: T) -> Self {
        Self::new(vec![len], vec![lo; len], vec![hi; len]).expect("valid uniform space")
    }

    /// Unbounded single real, used for rewards and evaluation metrics.
    pub fn scalar() -> Self {
        Self::unbounded(1)
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Flat number of elements.
    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.len()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn check_len(&self, what: &'static str, got: usize) -> Result<(), EnvError> {
        if got != self.len() {
            return Err(EnvError::DimensionMismatch {
                what,
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// Checks length and bounds; NaN is out of bounds.
    pub fn check(&self, what: &'static str, x: &[T]) -> Result<(), EnvError> {
        self.check_len(what, x.len())?;
        for (index, (v, (l, h))) in x.iter().zip(self.lo.iter().zip(&self.hi)).enumerate() {
            if !(*l <= *v && *v <= *h) {
                return Err(EnvError::OutOfBounds {
                    what,
                    index,
                    value: v.as_f64(),
                    lo: l.as_f64(),
                    hi: h.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Writes `src` clamped to the bounds into `dst`.
    pub fn clamp_into(&self, src: &[T], dst: &mut [T]) {
        for ((d, s), (l, h)) in dst.iter_mut().zip(src).zip(self.lo.iter().zip(&self.hi)) {
            *d = s.max(*l).min(*h);
        }
    }
}

/// Outcome of one control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult<T> {
    pub reward: T,
    pub eval: T,
    pub done: bool,
}

/// Sizes of the blocks of a flat state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub nq: usize,
    pub nv: usize,
    pub ntask: usize,
}

impl StateLayout {
    pub const fn len(&self) -> usize {
        self.nq + self.nv + 1 + self.ntask
    }

    pub const fn is_empty(&self) -> bool {
        false
    }

    pub const fn time_index(&self) -> usize {
        self.nq + self.nv
    }

    pub fn qpos<'a, T>(&self, s: &'a [T]) -> &'a [T] {
        &s[..self.nq]
    }

    pub fn qvel<'a, T>(&self, s: &'a [T]) -> &'a [T] {
        &s[self.nq..self.nq + self.nv]
    }

    pub fn time<T: Copy>(&self, s: &[T]) -> T {
        s[self.time_index()]
    }

    pub fn task<'a, T>(&self, s: &'a [T]) -> &'a [T] {
        &s[self.time_index() + 1..]
    }
}

/// Owned, structured view of a flat state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState<T> {
    pub qpos: Vec<T>,
    pub qvel: Vec<T>,
    pub t: T,
    pub task: Vec<T>,
}

impl<T: Real> EnvState<T> {
    pub fn from_flat(layout: StateLayout, s: &[T]) -> Result<Self, EnvError> {
        if s.len() != layout.len() {
            return Err(EnvError::DimensionMismatch {
                what: "state",
                expected: layout.len(),
                got: s.len(),
            });
        }
        Ok(Self {
            qpos: layout.qpos(s).to_vec(),
            qvel: layout.qvel(s).to_vec(),
            t: layout.time(s),
            task: layout.task(s).to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut s = Vec::with_capacity(self.qpos.len() + self.qvel.len() + 1 + self.task.len());
        s.extend_from_slice(&self.qpos);
        s.extend_from_slice(&self.qvel);
        s.push(self.t);
        s.extend_from_slice(&self.task);
        s
    }
}

/// A simulated system that can be snapshotted, restored and stepped.
///
/// Instances are single-owner; parallel code gives each worker its own
/// instance (hence the `Send` bound).
pub trait Environment<T: Real>: Send {
    fn name(&self) -> &'static str;

    fn layout(&self) -> StateLayout;

    fn state_space(&self) -> &Space<T>;

    fn obs_space(&self) -> &Space<T>;

    fn action_space(&self) -> &Space<T>;

    fn reward_space(&self) -> Space<T> {
        Space::scalar()
    }

    fn eval_space(&self) -> Space<T> {
        Space::scalar()
    }

    /// Writes a complete, restorable snapshot into `buf`.
    fn get_state_into(&self, buf: &mut [T]) -> Result<(), EnvError>;

    /// Restores a snapshot produced by [`get_state_into`](Self::get_state_into).
    fn set_state(&mut self, s: &[T]) -> Result<(), EnvError>;

    /// Writes the current observation into `buf`.
    fn get_obs_into(&self, buf: &mut [T]) -> Result<(), EnvError>;

    /// Shaped training signal. Pure in its arguments.
    fn reward(&self, s: &[T], a: &[T], o: &[T]) -> T;

    /// Interpretable task metric. Pure in its arguments.
    fn eval(&self, s: &[T], a: &[T], o: &[T]) -> T;

    /// Advances one control period. Out-of-range actions are clamped to the
    /// action space; non-finite actions are rejected. Reward and evaluation
    /// are computed from the pre-step state, the applied action and the
    /// post-step observation.
    fn step(&mut self, a: &[T]) -> Result<StepResult<T>, EnvError>;

    /// Returns to the fixed initial state.
    fn reset(&mut self);

    /// Returns to the fixed initial state plus small random perturbations
    /// (and, for goal-directed tasks, a random goal).
    fn rand_reset(&mut self, rng: &mut dyn RngCore);

    fn is_done(&self) -> bool;

    /// Control period in seconds.
    fn dt(&self) -> T;

    fn time(&self) -> T;

    fn state(&self) -> Vec<T> {
        let mut s = vec![T::zero(); self.state_space().len()];
        self.get_state_into(&mut s)
            .expect("buffer sized from state space");
        s
    }

    fn obs(&self) -> Vec<T> {
        let mut o = vec![T::zero(); self.obs_space().len()];
        self.get_obs_into(&mut o)
            .expect("buffer sized from obs space");
        o
    }
}
