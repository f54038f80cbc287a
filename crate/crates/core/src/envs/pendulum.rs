//! Torque-driven pendulum. The angle is measured from upright, so the
//! resting configuration hangs at `theta = pi`.

use serde::{Deserialize, Serialize};

use super::{
    check_nonnegative, check_positive, clamp_vel, sum_sq, DynamicsConfig, Integrator, Model,
};
use crate::envcore::{EnvError, StateLayout};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumConfig {
    pub dt: f64,
    pub substeps: usize,
    pub integrator: Integrator,
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
    /// Torque (N m) per unit action.
    pub action_scale: f64,
    pub ctrl_cost: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            substeps: 4,
            integrator: Integrator::Rk4,
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            damping: 0.0,
            action_scale: 5.0,
            ctrl_cost: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum<T> {
    cfg: PendulumConfig,
    inertia: T,
    gravity_term: T,
    damping: T,
    action_scale: T,
    ctrl_cost: T,
}

impl<T: Real> Pendulum<T> {
    pub fn new(cfg: PendulumConfig) -> Result<Self, EnvError> {
        const M: &str = "pendulum";
        DynamicsConfig {
            dt: cfg.dt,
            substeps: cfg.substeps,
            integrator: cfg.integrator,
        }
        .validate(M)?;
        check_positive(M, "mass", cfg.mass)?;
        check_positive(M, "length", cfg.length)?;
        check_nonnegative(M, "gravity", cfg.gravity)?;
        check_nonnegative(M, "damping", cfg.damping)?;
        check_nonnegative(M, "ctrl_cost", cfg.ctrl_cost)?;
        Ok(Self {
            inertia: T::of(cfg.mass * cfg.length * cfg.length),
            gravity_term: T::of(cfg.mass * cfg.gravity * cfg.length),
            damping: T::of(cfg.damping),
            action_scale: T::of(cfg.action_scale),
            ctrl_cost: T::of(cfg.ctrl_cost),
            cfg,
        })
    }

    pub fn config(&self) -> &PendulumConfig {
        &self.cfg
    }

    /// Kinetic plus potential energy, potential measured from the pivot.
    pub fn energy(&self, qpos: &[T], qvel: &[T]) -> f64 {
        let (th, w) = (qpos[0].as_f64(), qvel[0].as_f64());
        let c = &self.cfg;
        0.5 * c.mass * c.length * c.length * w * w + c.mass * c.gravity * c.length * th.cos()
    }
}

impl<T: Real> Model<T> for Pendulum<T> {
    const NAME: &'static str = "pendulum";

    fn layout(&self) -> StateLayout {
        StateLayout {
            nq: 1,
            nv: 1,
            ntask: 0,
        }
    }

    fn obs_len(&self) -> usize {
        3
    }

    fn action_len(&self) -> usize {
        1
    }

    fn dynamics(&self) -> DynamicsConfig {
        DynamicsConfig {
            dt: self.cfg.dt,
            substeps: self.cfg.substeps,
            integrator: self.cfg.integrator,
        }
    }

    fn acceleration(&mut self, q: &[T], v: &[T], u: &[T], qacc: &mut [T]) {
        let torque = self.action_scale * u[0];
        qacc[0] = (self.gravity_term * q[0].sin() - self.damping * v[0] + torque) / self.inertia;
    }

    fn reset_state(&self, qpos: &mut [T], qvel: &mut [T], _task: &mut [T]) {
        qpos[0] = T::PI();
        qvel[0] = T::zero();
    }

    fn observe(&self, qpos: &[T], qvel: &[T], _task: &[T], o: &mut [T]) {
        o[0] = qpos[0].cos();
        o[1] = qpos[0].sin();
        o[2] = clamp_vel(qvel[0]);
    }

    /// Uprightness in `[0, 1]` minus a quadratic control cost.
    fn reward(&self, _s: &[T], a: &[T], o: &[T]) -> T {
        T::of(0.5) * (T::one() + o[0]) - self.ctrl_cost * sum_sq(a)
    }

    /// Angle from upright in radians.
    fn eval(&self, _s: &[T], _a: &[T], o: &[T]) -> T {
        o[1].atan2(o[0]).abs()
    }
}
