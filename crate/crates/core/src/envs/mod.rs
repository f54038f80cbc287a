//! Analytic, contact-free environments.
//!
//! A new environment is authored by implementing [`Model`]: the equations of
//! motion, the observation map, reward and evaluation. [`ModelEnv`] turns a
//! model into a full [`Environment`] with snapshot/restore, action clamping,
//! preallocated scratch buffers and randomized resets.

mod builtin;
pub mod cartpole;
pub mod pendulum;
pub mod pointmass;
pub mod reacher;
pub mod task;

use rand::RngCore;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use builtin::{BuiltinEnv, ENV_NAMES};
pub use cartpole::{CartPole, CartPoleConfig};
pub use pendulum::{Pendulum, PendulumConfig};
pub use pointmass::{PointMass, PointMassConfig};
pub use reacher::{Reacher, ReacherConfig, EPISODE_LEN};
pub use task::{episode_success, ReachTask, TaskError};

use crate::envcore::{EnvError, Environment, Space, StateLayout, StepResult};
use crate::scalar::Real;

/// Half-width of the uniform perturbation applied by randomized resets.
pub const RESET_NOISE: f64 = 0.005;

/// Bound applied to velocity components of observations.
pub const OBS_VEL_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classic fourth-order Runge-Kutta on each substep.
    #[default]
    Rk4,
    /// Velocity update followed by a position update with the new velocity.
    SemiImplicitEuler,
}

/// Time discretization shared by every model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    pub dt: f64,
    pub substeps: usize,
    pub integrator: Integrator,
}

impl DynamicsConfig {
    pub fn validate(&self, model: &'static str) -> Result<(), EnvError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(
                model,
                format!("dt must be positive, got {}", self.dt),
            ));
        }
        if self.substeps == 0 {
            return Err(invalid(model, "substeps must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn invalid(model: &'static str, reason: String) -> EnvError {
    EnvError::InvalidConfig { model, reason }
}

pub(crate) fn check_positive(model: &'static str, name: &str, x: f64) -> Result<(), EnvError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(model, format!("{name} must be positive, got {x}")))
    }
}

pub(crate) fn check_nonnegative(model: &'static str, name: &str, x: f64) -> Result<(), EnvError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            model,
            format!("{name} must be non-negative, got {x}"),
        ))
    }
}

/// Equations of motion plus task definition for one system.
///
/// Every model has as many velocity coordinates as position coordinates and
/// `qpos` integrates `qvel` directly.
pub trait Model<T: Real>: Clone + Send + 'static {
    const NAME: &'static str;

    fn layout(&self) -> StateLayout;

    fn obs_len(&self) -> usize;

    fn action_len(&self) -> usize;

    fn dynamics(&self) -> DynamicsConfig;

    /// Generalized accelerations for positions `q`, velocities `v` and the
    /// already clamped control `u`.
    fn acceleration(&mut self, q: &[T], v: &[T], u: &[T], qacc: &mut [T]);

    fn reset_state(&self, qpos: &mut [T], qvel: &mut [T], task: &mut [T]);

    /// Draws a new task (e.g. a goal) for randomized resets.
    fn randomize_task(&self, _task: &mut [T], _rng: &mut dyn RngCore) {}

    fn observe(&self, qpos: &[T], qvel: &[T], task: &[T], o: &mut [T]);

    fn reward(&self, s: &[T], a: &[T], o: &[T]) -> T;

    fn eval(&self, s: &[T], a: &[T], o: &[T]) -> T;

    fn terminated(&self, _qpos: &[T], _qvel: &[T]) -> bool {
        false
    }

    fn action_bounds(&self) -> (T, T) {
        (-T::one(), T::one())
    }
}

/// Substep integrator with preallocated stage buffers.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    q0: Vec<T>,
    v0: Vec<T>,
    qt: Vec<T>,
    vt: Vec<T>,
    kq: [Vec<T>; 4],
    kv: [Vec<T>; 4],
}

impl<T: Real> Stepper<T> {
    pub fn new(n: usize) -> Self {
        let z = || vec![T::zero(); n];
        Self {
            q0: z(),
            v0: z(),
            qt: z(),
            vt: z(),
            kq: [z(), z(), z(), z()],
            kv: [z(), z(), z(), z()],
        }
    }
}

/// Advances `(q, v)` by one control period under control `u`.
///
/// The period is split into `substeps` equal substeps. Non-finite results are
/// reported as [`EnvError::Fault`] with the state at the start of the call.
pub fn dynamics_step<T: Real, M: Model<T>>(
    model: &mut M,
    stepper: &mut Stepper<T>,
    q: &mut [T],
    v: &mut [T],
    u: &[T],
    time: T,
) -> Result<(), EnvError> {
    let cfg = model.dynamics();
    let h = T::of(cfg.dt / cfg.substeps as f64);
    stepper.q0.copy_from_slice(q);
    stepper.v0.copy_from_slice(v);
    for _ in 0..cfg.substeps {
        match cfg.integrator {
            Integrator::SemiImplicitEuler => {
                let acc = &mut stepper.kv[0];
                model.acceleration(q, v, u, acc);
                for i in 0..q.len() {
                    v[i] += h * acc[i];
                    q[i] += h * v[i];
                }
            }
            Integrator::Rk4 => rk4_substep(model, stepper, q, v, u, h),
        }
    }
    if q.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        let err = EnvError::Fault {
            model: M::NAME,
            time: time.as_f64(),
            qpos: stepper.q0.iter().map(|x| x.as_f64()).collect(),
            qvel: stepper.v0.iter().map(|x| x.as_f64()).collect(),
        };
        q.copy_from_slice(&stepper.q0);
        v.copy_from_slice(&stepper.v0);
        return Err(err);
    }
    Ok(())
}

fn rk4_substep<T: Real, M: Model<T>>(
    model: &mut M,
    st: &mut Stepper<T>,
    q: &mut [T],
    v: &mut [T],
    u: &[T],
    h: T,
) {
    let half = T::of(0.5) * h;
    let n = q.len();
    // stage 1
    st.kq[0].copy_from_slice(v);
    model.acceleration(q, v, u, &mut st.kv[0]);
    // stages 2..4
    for stage in 1..4 {
        let c = if stage == 3 { h } else { half };
        for i in 0..n {
            st.qt[i] = q[i] + c * st.kq[stage - 1][i];
            st.vt[i] = v[i] + c * st.kv[stage - 1][i];
        }
        st.kq[stage].copy_from_slice(&st.vt);
        let (qt, vt) = (&st.qt, &st.vt);
        model.acceleration(qt, vt, u, &mut st.kv[stage]);
    }
    let sixth = h / T::of(6.0);
    let two = T::of(2.0);
    for i in 0..n {
        q[i] += sixth * (st.kq[0][i] + two * st.kq[1][i] + two * st.kq[2][i] + st.kq[3][i]);
        v[i] += sixth * (st.kv[0][i] + two * st.kv[1][i] + two * st.kv[2][i] + st.kv[3][i]);
    }
}

/// Generic [`Environment`] implementation over a [`Model`].
#[derive(Debug, Clone)]
pub struct ModelEnv<T: Real, M> {
    model: M,
    layout: StateLayout,
    state_space: Space<T>,
    obs_space: Space<T>,
    action_space: Space<T>,
    qpos: Vec<T>,
    qvel: Vec<T>,
    time: T,
    task: Vec<T>,
    done: bool,
    stepper: Stepper<T>,
    action: Vec<T>,
    s_prev: Vec<T>,
    o_next: Vec<T>,
}

impl<T: Real, M: Model<T>> ModelEnv<T, M> {
    pub fn new(model: M) -> Self {
        let layout = model.layout();
        let (alo, ahi) = model.action_bounds();
        let nu = model.action_len();
        let no = model.obs_len();
        let mut env = Self {
            layout,
            state_space: Space::unbounded(layout.len()),
            obs_space: Space::unbounded(no),
            action_space: Space::uniform(nu, alo, ahi),
            qpos: vec![T::zero(); layout.nq],
            qvel: vec![T::zero(); layout.nv],
            time: T::zero(),
            task: vec![T::zero(); layout.ntask],
            done: false,
            stepper: Stepper::new(layout.nq),
            action: vec![T::zero(); nu],
            s_prev: vec![T::zero(); layout.len()],
            o_next: vec![T::zero(); no],
            model,
        };
        env.reset();
        env
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn qpos(&self) -> &[T] {
        &self.qpos
    }

    pub fn qvel(&self) -> &[T] {
        &self.qvel
    }

    pub fn task(&self) -> &[T] {
        &self.task
    }

    fn write_state(&self, buf: &mut [T]) {
        let l = self.layout;
        buf[..l.nq].copy_from_slice(&self.qpos);
        buf[l.nq..l.nq + l.nv].copy_from_slice(&self.qvel);
        buf[l.time_index()] = self.time;
        buf[l.time_index() + 1..].copy_from_slice(&self.task);
    }
}

impl<T: Real, M: Model<T>> Environment<T> for ModelEnv<T, M> {
    fn name(&self) -> &'static str {
        M::NAME
    }

    fn layout(&self) -> StateLayout {
        self.layout
    }

    fn state_space(&self) -> &Space<T> {
        &self.state_space
    }

    fn obs_space(&self) -> &Space<T> {
        &self.obs_space
    }

    fn action_space(&self) -> &Space<T> {
        &self.action_space
    }

    fn get_state_into(&self, buf: &mut [T]) -> Result<(), EnvError> {
        self.state_space.check_len("state buffer", buf.len())?;
        self.write_state(buf);
        Ok(())
    }

    fn set_state(&mut self, s: &[T]) -> Result<(), EnvError> {
        self.state_space.check("state", s)?;
        let l = self.layout;
        self.qpos.copy_from_slice(l.qpos(s));
        self.qvel.copy_from_slice(l.qvel(s));
        self.time = l.time(s);
        self.task.copy_from_slice(l.task(s));
        self.done = self.model.terminated(&self.qpos, &self.qvel);
        Ok(())
    }

    fn get_obs_into(&self, buf: &mut [T]) -> Result<(), EnvError> {
        self.obs_space.check_len("observation buffer", buf.len())?;
        self.model.observe(&self.qpos, &self.qvel, &self.task, buf);
        Ok(())
    }

    fn reward(&self, s: &[T], a: &[T], o: &[T]) -> T {
        self.model.reward(s, a, o)
    }

    fn eval(&self, s: &[T], a: &[T], o: &[T]) -> T {
        self.model.eval(s, a, o)
    }

    fn step(&mut self, a: &[T]) -> Result<StepResult<T>, EnvError> {
        self.action_space.check_len("action", a.len())?;
        if let Some((index, value)) = a.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(EnvError::NonFiniteAction {
                index,
                value: value.as_f64(),
            });
        }
        self.action_space.clamp_into(a, &mut self.action);
        let mut s_prev = std::mem::take(&mut self.s_prev);
        self.write_state(&mut s_prev);
        self.s_prev = s_prev;
        dynamics_step(
            &mut self.model,
            &mut self.stepper,
            &mut self.qpos,
            &mut self.qvel,
            &self.action,
            self.time,
        )?;
        self.time += T::of(self.model.dynamics().dt);
        self.model
            .observe(&self.qpos, &self.qvel, &self.task, &mut self.o_next);
        let reward = self.model.reward(&self.s_prev, &self.action, &self.o_next);
        let eval = self.model.eval(&self.s_prev, &self.action, &self.o_next);
        self.done = self.model.terminated(&self.qpos, &self.qvel);
        Ok(StepResult {
            reward,
            eval,
            done: self.done,
        })
    }

    fn reset(&mut self) {
        self.model
            .reset_state(&mut self.qpos, &mut self.qvel, &mut self.task);
        self.time = T::zero();
        self.done = self.model.terminated(&self.qpos, &self.qvel);
    }

    fn rand_reset(&mut self, rng: &mut dyn RngCore) {
        self.reset();
        let dist = Uniform::new(-RESET_NOISE, RESET_NOISE);
        for x in self.qpos.iter_mut().chain(self.qvel.iter_mut()) {
            *x += T::of(dist.sample(rng));
        }
        self.model.randomize_task(&mut self.task, rng);
        self.done = self.model.terminated(&self.qpos, &self.qvel);
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn dt(&self) -> T {
        T::of(self.model.dynamics().dt)
    }

    fn time(&self) -> T {
        self.time
    }
}

/// Clamps a velocity for use in an observation.
#[inline]
pub(crate) fn clamp_vel<T: Real>(v: T) -> T {
    let b = T::of(OBS_VEL_CLAMP);
    v.max(-b).min(b)
}

#[inline]
pub(crate) fn sum_sq<T: Real>(a: &[T]) -> T {
    a.iter().map(|x| *x * *x).sum()
}
