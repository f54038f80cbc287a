//! Damped double integrator that must reach a goal. The dimension is
//! configurable; one dimension gives an LQR-like regulation problem.
//!
//! State layout: `[pos | vel | t | goal]`.
//! Observation: `[pos | vel (clamped) | goal - pos]`.

use rand::RngCore;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{
    check_nonnegative, check_positive, clamp_vel, invalid, sum_sq, DynamicsConfig, Integrator,
    Model,
};
use crate::envcore::{EnvError, StateLayout};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassConfig {
    pub dt: f64,
    pub substeps: usize,
    pub integrator: Integrator,
    pub dim: usize,
    pub mass: f64,
    pub damping: f64,
    /// Force (N) per unit action.
    pub action_scale: f64,
    pub ctrl_cost: f64,
    /// Goal used by the deterministic reset.
    pub reset_goal: Vec<f64>,
    /// Random goals are uniform in `[-goal_range, goal_range]^dim`.
    pub goal_range: f64,
    pub success_radius: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            substeps: 4,
            integrator: Integrator::Rk4,
            dim: 2,
            mass: 1.0,
            damping: 0.5,
            action_scale: 2.0,
            ctrl_cost: 1e-3,
            reset_goal: vec![0.5, 0.5],
            goal_range: 1.0,
            success_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointMass<T> {
    cfg: PointMassConfig,
    inv_mass: T,
    damping: T,
    action_scale: T,
    ctrl_cost: T,
}

impl<T: Real> PointMass<T> {
    pub fn new(mut cfg: PointMassConfig) -> Result<Self, EnvError> {
        const M: &str = "pointmass";
        DynamicsConfig {
            dt: cfg.dt,
            substeps: cfg.substeps,
            integrator: cfg.integrator,
        }
        .validate(M)?;
        if cfg.dim == 0 {
            return Err(invalid(M, "dim must be at least 1".into()));
        }
        // A default-sized goal adapts to the configured dimension.
        if cfg.reset_goal.len() != cfg.dim {
            if cfg.reset_goal == PointMassConfig::default().reset_goal {
                cfg.reset_goal = vec![0.5; cfg.dim];
            } else {
                return Err(invalid(
                    M,
                    format!(
                        "reset_goal has {} entries, dim is {}",
                        cfg.reset_goal.len(),
                        cfg.dim
                    ),
                ));
            }
        }
        check_positive(M, "mass", cfg.mass)?;
        check_positive(M, "success_radius", cfg.success_radius)?;
        check_nonnegative(M, "damping", cfg.damping)?;
        check_nonnegative(M, "goal_range", cfg.goal_range)?;
        check_nonnegative(M, "ctrl_cost", cfg.ctrl_cost)?;
        Ok(Self {
            inv_mass: T::of(1.0 / cfg.mass),
            damping: T::of(cfg.damping),
            action_scale: T::of(cfg.action_scale),
            ctrl_cost: T::of(cfg.ctrl_cost),
            cfg,
        })
    }

    pub fn config(&self) -> &PointMassConfig {
        &self.cfg
    }

    pub fn success_radius(&self) -> f64 {
        self.cfg.success_radius
    }

    /// Distance between position and goal for a flat state.
    pub fn distance(&self, s: &[T]) -> T {
        let d = self.cfg.dim;
        let (pos, goal) = (&s[..d], &s[2 * d + 1..]);
        pos.iter()
            .zip(goal)
            .map(|(p, g)| (*g - *p) * (*g - *p))
            .sum::<T>()
            .sqrt()
    }
}

impl<T: Real> Model<T> for PointMass<T> {
    const NAME: &'static str = "pointmass";

    fn layout(&self) -> StateLayout {
        StateLayout {
            nq: self.cfg.dim,
            nv: self.cfg.dim,
            ntask: self.cfg.dim,
        }
    }

    fn obs_len(&self) -> usize {
        3 * self.cfg.dim
    }

    fn action_len(&self) -> usize {
        self.cfg.dim
    }

    fn dynamics(&self) -> DynamicsConfig {
        DynamicsConfig {
            dt: self.cfg.dt,
            substeps: self.cfg.substeps,
            integrator: self.cfg.integrator,
        }
    }

    fn acceleration(&mut self, _q: &[T], v: &[T], u: &[T], qacc: &mut [T]) {
        for i in 0..qacc.len() {
            qacc[i] = (self.action_scale * u[i] - self.damping * v[i]) * self.inv_mass;
        }
    }

    fn reset_state(&self, qpos: &mut [T], qvel: &mut [T], task: &mut [T]) {
        qpos.fill(T::zero());
        qvel.fill(T::zero());
        for (t, g) in task.iter_mut().zip(&self.cfg.reset_goal) {
            *t = T::of(*g);
        }
    }

    fn randomize_task(&self, task: &mut [T], rng: &mut dyn RngCore) {
        if self.cfg.goal_range == 0.0 {
            return;
        }
        let dist = Uniform::new_inclusive(-self.cfg.goal_range, self.cfg.goal_range);
        for t in task.iter_mut() {
            *t = T::of(dist.sample(rng));
        }
    }

    fn observe(&self, qpos: &[T], qvel: &[T], task: &[T], o: &mut [T]) {
        let d = self.cfg.dim;
        for i in 0..d {
            o[i] = qpos[i];
            o[d + i] = clamp_vel(qvel[i]);
            o[2 * d + i] = task[i] - qpos[i];
        }
    }

    fn reward(&self, s: &[T], a: &[T], o: &[T]) -> T {
        -self.eval(s, a, o) - self.ctrl_cost * sum_sq(a)
    }

    /// Distance to goal (m).
    fn eval(&self, _s: &[T], _a: &[T], o: &[T]) -> T {
        let d = self.cfg.dim;
        sum_sq(&o[2 * d..3 * d]).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envcore::Environment;
    use crate::envs::ModelEnv;

    #[test]
    fn one_dimensional_variant_has_matching_spaces() {
        let cfg = PointMassConfig {
            dim: 1,
            ..Default::default()
        };
        let env = ModelEnv::new(PointMass::<f64>::new(cfg).unwrap());
        assert_eq!(env.state_space().len(), 4);
        assert_eq!(env.obs_space().len(), 3);
        assert_eq!(env.action_space().len(), 1);
        assert_eq!(env.task(), &[0.5]);
    }

    #[test]
    fn mismatched_goal_is_rejected() {
        let cfg = PointMassConfig {
            dim: 3,
            reset_goal: vec![1.0, 2.0],
            ..Default::default()
        };
        assert!(PointMass::<f64>::new(cfg).is_err());
    }

    #[test]
    fn eval_is_goal_distance() {
        let pm = PointMass::<f64>::new(PointMassConfig::default()).unwrap();
        let mut o = [0.0; 6];
        pm.observe(&[0.0, 0.0], &[0.0, 0.0], &[0.3, 0.4], &mut o);
        assert!((pm.eval(&[], &[0.0, 0.0], &o) - 0.5).abs() < 1e-15);
        let s = [0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.4];
        assert!((pm.distance(&s) - 0.5).abs() < 1e-15);
    }
}
