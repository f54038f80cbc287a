//! Cart-pole swing-up.
//!
//! A point mass on a massless rod is hinged to a cart on a rail. The pole
//! angle is measured from upright (`pi` hangs down) and the episode ends when
//! the cart leaves the rail.
//!
//! State layout: `[x, theta, xdot, thetadot, t]`.
//! Observation: `[x, cos theta, sin theta, xdot, thetadot]` with velocities
//! clamped.

use serde::{Deserialize, Serialize};

use super::{
    check_nonnegative, check_positive, clamp_vel, sum_sq, DynamicsConfig, Integrator, Model,
};
use crate::envcore::{EnvError, StateLayout};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleConfig {
    pub dt: f64,
    pub substeps: usize,
    pub integrator: Integrator,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Pivot to pole mass (m).
    pub pole_length: f64,
    pub gravity: f64,
    pub cart_damping: f64,
    pub pole_damping: f64,
    /// Force (N) per unit action.
    pub action_scale: f64,
    /// |x| beyond which the episode terminates (m).
    pub rail_limit: f64,
    pub ctrl_cost: f64,
    /// Exponent on the uprightness term; larger values pay less for
    /// partial swings.
    pub upright_power: f64,
    /// Pole speed (rad/s) at which the slow-pole reward factor drops to
    /// 0.1; 0 disables the factor.
    pub velocity_margin: f64,
}

impl Default for CartPoleConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            substeps: 4,
            integrator: Integrator::Rk4,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.5,
            gravity: 9.81,
            cart_damping: 0.0,
            pole_damping: 0.0,
            action_scale: 10.0,
            rail_limit: 3.0,
            ctrl_cost: 1e-3,
            upright_power: 3.0,
            velocity_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CartPole<T> {
    cfg: CartPoleConfig,
    total_mass: T,
    ml: T,
    ml2: T,
    mgl: T,
    cart_damping: T,
    pole_damping: T,
    action_scale: T,
    rail_limit: T,
    ctrl_cost: T,
    upright_power: T,
    velocity_margin: T,
}

impl<T: Real> CartPole<T> {
    pub fn new(cfg: CartPoleConfig) -> Result<Self, EnvError> {
        const M: &str = "cartpole";
        DynamicsConfig {
            dt: cfg.dt,
            substeps: cfg.substeps,
            integrator: cfg.integrator,
        }
        .validate(M)?;
        check_positive(M, "cart_mass", cfg.cart_mass)?;
        check_positive(M, "pole_mass", cfg.pole_mass)?;
        check_positive(M, "pole_length", cfg.pole_length)?;
        check_positive(M, "rail_limit", cfg.rail_limit)?;
        check_nonnegative(M, "gravity", cfg.gravity)?;
        check_nonnegative(M, "cart_damping", cfg.cart_damping)?;
        check_nonnegative(M, "pole_damping", cfg.pole_damping)?;
        check_nonnegative(M, "ctrl_cost", cfg.ctrl_cost)?;
        check_positive(M, "upright_power", cfg.upright_power)?;
        check_nonnegative(M, "velocity_margin", cfg.velocity_margin)?;
        let (m, l) = (cfg.pole_mass, cfg.pole_length);
        Ok(Self {
            total_mass: T::of(cfg.cart_mass + m),
            ml: T::of(m * l),
            ml2: T::of(m * l * l),
            mgl: T::of(m * cfg.gravity * l),
            cart_damping: T::of(cfg.cart_damping),
            pole_damping: T::of(cfg.pole_damping),
            action_scale: T::of(cfg.action_scale),
            rail_limit: T::of(cfg.rail_limit),
            ctrl_cost: T::of(cfg.ctrl_cost),
            upright_power: T::of(cfg.upright_power),
            velocity_margin: T::of(cfg.velocity_margin),
            cfg,
        })
    }

    pub fn config(&self) -> &CartPoleConfig {
        &self.cfg
    }

    /// Closed-form Hamiltonian (kinetic plus potential, potential measured
    /// from the pivot height).
    pub fn energy(&self, qpos: &[T], qvel: &[T]) -> f64 {
        let c = &self.cfg;
        let (th, xd, thd) = (qpos[1].as_f64(), qvel[0].as_f64(), qvel[1].as_f64());
        let (m, l) = (c.pole_mass, c.pole_length);
        0.5 * (c.cart_mass + m) * xd * xd
            + m * l * th.cos() * xd * thd
            + 0.5 * m * l * l * thd * thd
            + m * c.gravity * l * th.cos()
    }
}

impl<T: Real> Model<T> for CartPole<T> {
    const NAME: &'static str = "cartpole";

    fn layout(&self) -> StateLayout {
        StateLayout {
            nq: 2,
            nv: 2,
            ntask: 0,
        }
    }

    fn obs_len(&self) -> usize {
        5
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
        let (s, c) = q[1].sin_cos();
        let (xd, thd) = (v[0], v[1]);
        // [M+m, ml c; ml c, ml^2] [xdd; thdd] = [r1; r2]
        let a11 = self.total_mass;
        let a12 = self.ml * c;
        let a22 = self.ml2;
        let r1 = self.action_scale * u[0] - self.cart_damping * xd + self.ml * s * thd * thd;
        let r2 = self.mgl * s - self.pole_damping * thd;
        let det = a11 * a22 - a12 * a12;
        qacc[0] = (r1 * a22 - a12 * r2) / det;
        qacc[1] = (a11 * r2 - a12 * r1) / det;
    }

    fn reset_state(&self, qpos: &mut [T], qvel: &mut [T], _task: &mut [T]) {
        qpos[0] = T::zero();
        qpos[1] = T::PI();
        qvel.fill(T::zero());
    }

    fn observe(&self, qpos: &[T], qvel: &[T], _task: &[T], o: &mut [T]) {
        o[0] = qpos[0];
        o[1] = qpos[1].cos();
        o[2] = qpos[1].sin();
        o[3] = clamp_vel(qvel[0]);
        o[4] = clamp_vel(qvel[1]);
    }

    /// Pole uprightness `((1 + cos theta) / 2)^upright_power`, optionally
    /// scaled by `(1 + 0.1^((theta_dot / velocity_margin)^2)) / 2`, minus a
    /// quadratic control cost.
    fn reward(&self, _s: &[T], a: &[T], o: &[T]) -> T {
        let half = T::of(0.5);
        let upright = (half * (T::one() + o[1])).powf(self.upright_power);
        let slow = if self.velocity_margin > T::zero() {
            let z = o[4] / self.velocity_margin;
            half * (T::one() + T::of(0.1).powf(z * z))
        } else {
            T::one()
        };
        upright * slow - self.ctrl_cost * sum_sq(a)
    }

    /// Pole angle from upright in radians.
    fn eval(&self, _s: &[T], _a: &[T], o: &[T]) -> T {
        o[2].atan2(o[1]).abs()
    }

    fn terminated(&self, qpos: &[T], _qvel: &[T]) -> bool {
        qpos[0].abs() > self.rail_limit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envcore::Environment;
    use crate::envs::ModelEnv;

    fn env() -> ModelEnv<f64, CartPole<f64>> {
        ModelEnv::new(CartPole::new(CartPoleConfig::default()).unwrap())
    }

    #[test]
    fn reset_state_hangs_at_rest() {
        let e = env();
        assert_eq!(e.state(), vec![0.0, std::f64::consts::PI, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn leaving_the_rail_terminates() {
        let mut e = env();
        let mut s = e.state();
        s[0] = 2.99;
        s[2] = 5.0;
        e.set_state(&s).unwrap();
        assert!(!e.is_done());
        let r = e.step(&[1.0]).unwrap();
        assert!(r.done && e.is_done());
    }

    #[test]
    fn pushing_the_cart_accelerates_it() {
        let mut e = env();
        e.step(&[1.0]).unwrap();
        assert!(e.qvel()[0] > 0.0);
        // clamped: 5.0 acts like 1.0
        let mut e2 = env();
        e2.step(&[5.0]).unwrap();
        assert_eq!(e.state(), e2.state());
    }
}
