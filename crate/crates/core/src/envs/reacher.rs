//! Planar N-link reaching arm.
//!
//! Each link carries a point mass at its distal end, joints are torque driven
//! with viscous damping and the arm moves in a horizontal plane (no
//! gravity). The task is to bring the end effector to a goal.
//!
//! State layout: `[q (N) | qdot (N) | t | goal (2)]`.
//! Observation: `[cos q (N) | sin q (N) | qdot clamped (N) | ee - goal (2)]`.

use rand::RngCore;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{
    check_nonnegative, check_positive, clamp_vel, invalid, sum_sq, DynamicsConfig, Integrator,
    Model,
};
use crate::envcore::{EnvError, StateLayout};
use crate::scalar::Real;

/// Episode length of the reaching task, in control steps.
pub const EPISODE_LEN: usize = 75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReacherConfig {
    pub dt: f64,
    pub substeps: usize,
    pub integrator: Integrator,
    pub link_lengths: Vec<f64>,
    pub link_masses: Vec<f64>,
    /// Rotor inertia added to every joint (kg m^2).
    pub armature: f64,
    /// Viscous joint damping (N m s).
    pub damping: f64,
    /// Torque (N m) per unit action.
    pub action_scale: f64,
    pub ctrl_cost: f64,
    pub reset_goal: [f64; 2],
    /// Random goals are area-uniform on the annulus between these fractions
    /// of the total reach.
    pub goal_annulus: [f64; 2],
    pub success_radius: f64,
    pub episode_len: usize,
}

impl Default for ReacherConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            substeps: 4,
            integrator: Integrator::Rk4,
            link_lengths: vec![0.5, 0.5],
            link_masses: vec![0.1, 0.1],
            armature: 0.01,
            damping: 1.0,
            action_scale: 20.0,
            ctrl_cost: 1e-3,
            reset_goal: [0.0, 0.6],
            goal_annulus: [0.2, 0.9],
            success_radius: 0.05,
            episode_len: EPISODE_LEN,
        }
    }
}

impl ReacherConfig {
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Smallest distance from the base the end effector can attain.
    pub fn min_reach(&self) -> f64 {
        let longest = self.link_lengths.iter().cloned().fold(0.0, f64::max);
        (2.0 * longest - self.reach()).max(0.0)
    }

    /// Goal annulus radii in metres.
    pub fn goal_radii(&self) -> (f64, f64) {
        let r = self.reach();
        (self.goal_annulus[0] * r, self.goal_annulus[1] * r)
    }
}

#[derive(Debug, Clone)]
pub struct Reacher<T> {
    cfg: ReacherConfig,
    lengths: Vec<T>,
    masses: Vec<T>,
    armature: T,
    damping: T,
    action_scale: T,
    ctrl_cost: T,
    // scratch for the equations of motion
    cos: Vec<T>,
    sin: Vec<T>,
    omega: Vec<T>,
    jx: Vec<T>,
    jy: Vec<T>,
    mass_matrix: Vec<T>,
    rhs: Vec<T>,
}

impl<T: Real> Reacher<T> {
    pub fn new(cfg: ReacherConfig) -> Result<Self, EnvError> {
        const M: &str = "reacher";
        DynamicsConfig {
            dt: cfg.dt,
            substeps: cfg.substeps,
            integrator: cfg.integrator,
        }
        .validate(M)?;
        let n = cfg.link_lengths.len();
        if n == 0 {
            return Err(invalid(M, "at least one link is required".into()));
        }
        if cfg.link_masses.len() != n {
            return Err(invalid(
                M,
                format!(
                    "{} link lengths but {} link masses",
                    n,
                    cfg.link_masses.len()
                ),
            ));
        }
        for (l, m) in cfg.link_lengths.iter().zip(&cfg.link_masses) {
            check_positive(M, "link length", *l)?;
            check_positive(M, "link mass", *m)?;
        }
        check_nonnegative(M, "armature", cfg.armature)?;
        check_nonnegative(M, "damping", cfg.damping)?;
        check_nonnegative(M, "ctrl_cost", cfg.ctrl_cost)?;
        check_positive(M, "success_radius", cfg.success_radius)?;
        if cfg.episode_len != EPISODE_LEN {
            return Err(invalid(
                M,
                format!(
                    "episode_len is fixed at {EPISODE_LEN}, got {}",
                    cfg.episode_len
                ),
            ));
        }
        let (lo, hi) = (cfg.goal_annulus[0], cfg.goal_annulus[1]);
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) || lo * cfg.reach() < cfg.min_reach() - 1e-12 {
            return Err(invalid(
                M,
                format!(
                    "goal_annulus {:?} outside the reachable annulus",
                    cfg.goal_annulus
                ),
            ));
        }
        let z = || vec![T::zero(); n];
        Ok(Self {
            lengths: cfg.link_lengths.iter().map(|x| T::of(*x)).collect(),
            masses: cfg.link_masses.iter().map(|x| T::of(*x)).collect(),
            armature: T::of(cfg.armature),
            damping: T::of(cfg.damping),
            action_scale: T::of(cfg.action_scale),
            ctrl_cost: T::of(cfg.ctrl_cost),
            cos: z(),
            sin: z(),
            omega: z(),
            jx: z(),
            jy: z(),
            mass_matrix: vec![T::zero(); n * n],
            rhs: z(),
            cfg,
        })
    }

    pub fn config(&self) -> &ReacherConfig {
        &self.cfg
    }

    pub fn links(&self) -> usize {
        self.lengths.len()
    }

    pub fn success_radius(&self) -> f64 {
        self.cfg.success_radius
    }

    /// End-effector position for joint angles `q`.
    pub fn end_effector(&self, q: &[T]) -> [T; 2] {
        forward_kinematics(&self.lengths, q)
    }

    /// End-effector to goal distance (m) for a flat state.
    pub fn distance(&self, s: &[T]) -> T {
        let n = self.links();
        let ee = self.end_effector(&s[..n]);
        let goal = &s[2 * n + 1..2 * n + 3];
        ((ee[0] - goal[0]).powi(2) + (ee[1] - goal[1]).powi(2)).sqrt()
    }

    /// Kinetic energy of the arm (the only energy; there is no gravity).
    pub fn energy(&self, q: &[T], v: &[T]) -> f64 {
        let (mut phi, mut w) = (0.0, 0.0);
        let (mut vx, mut vy) = (0.0, 0.0);
        let mut e = 0.0;
        for i in 0..self.links() {
            phi += q[i].as_f64();
            w += v[i].as_f64();
            let l = self.cfg.link_lengths[i];
            vx += -l * phi.sin() * w;
            vy += l * phi.cos() * w;
            e += 0.5 * self.cfg.link_masses[i] * (vx * vx + vy * vy);
            e += 0.5 * self.cfg.armature * v[i].as_f64().powi(2);
        }
        e
    }
}

/// Planar forward kinematics of a serial chain rooted at the origin with
/// relative joint angles `q`.
pub fn forward_kinematics<T: Real>(lengths: &[T], q: &[T]) -> [T; 2] {
    let (mut x, mut y, mut phi) = (T::zero(), T::zero(), T::zero());
    for (l, qi) in lengths.iter().zip(q) {
        phi += *qi;
        let (s, c) = phi.sin_cos();
        x += *l * c;
        y += *l * s;
    }
    [x, y]
}

impl<T: Real> Model<T> for Reacher<T> {
    const NAME: &'static str = "reacher";

    fn layout(&self) -> StateLayout {
        let n = self.links();
        StateLayout {
            nq: n,
            nv: n,
            ntask: 2,
        }
    }

    fn obs_len(&self) -> usize {
        3 * self.links() + 2
    }

    fn action_len(&self) -> usize {
        self.links()
    }

    fn dynamics(&self) -> DynamicsConfig {
        DynamicsConfig {
            dt: self.cfg.dt,
            substeps: self.cfg.substeps,
            integrator: self.cfg.integrator,
        }
    }

    /// Solves `M(q) qdd = tau - b qd - h(q, qd)` where `M = sum_k m_k J_k^T J_k`
    /// and `h = sum_k m_k J_k^T (Jdot_k qd)` for the link-end masses.
    fn acceleration(&mut self, q: &[T], v: &[T], u: &[T], qacc: &mut [T]) {
        let n = self.links();
        let (mut phi, mut w) = (T::zero(), T::zero());
        for i in 0..n {
            phi += q[i];
            w += v[i];
            let (s, c) = phi.sin_cos();
            self.sin[i] = s;
            self.cos[i] = c;
            self.omega[i] = w;
        }
        self.mass_matrix.fill(T::zero());
        for i in 0..n {
            self.rhs[i] = self.action_scale * u[i] - self.damping * v[i];
            self.mass_matrix[i * n + i] = self.armature;
        }
        let (mut ax, mut ay) = (T::zero(), T::zero());
        for k in 0..n {
            let lw2 = self.lengths[k] * self.omega[k] * self.omega[k];
            ax -= lw2 * self.cos[k];
            ay -= lw2 * self.sin[k];
            // column j of J_k is sum_{i=j..k} l_i (-sin phi_i, cos phi_i)
            let (mut cx, mut cy) = (T::zero(), T::zero());
            for j in (0..=k).rev() {
                cx -= self.lengths[j] * self.sin[j];
                cy += self.lengths[j] * self.cos[j];
                self.jx[j] = cx;
                self.jy[j] = cy;
            }
            let m = self.masses[k];
            for j in 0..=k {
                self.rhs[j] -= m * (self.jx[j] * ax + self.jy[j] * ay);
                for l in 0..=k {
                    self.mass_matrix[j * n + l] +=
                        m * (self.jx[j] * self.jx[l] + self.jy[j] * self.jy[l]);
                }
            }
        }
        cholesky_solve(&mut self.mass_matrix, n, &self.rhs, qacc);
    }

    fn reset_state(&self, qpos: &mut [T], qvel: &mut [T], task: &mut [T]) {
        qpos.fill(T::zero());
        qvel.fill(T::zero());
        task[0] = T::of(self.cfg.reset_goal[0]);
        task[1] = T::of(self.cfg.reset_goal[1]);
    }

    fn randomize_task(&self, task: &mut [T], rng: &mut dyn RngCore) {
        let (r0, r1) = self.cfg.goal_radii();
        let r2 = Uniform::new_inclusive(r0 * r0, r1 * r1).sample(rng);
        let ang = Uniform::new(-std::f64::consts::PI, std::f64::consts::PI).sample(rng);
        let r = r2.sqrt();
        task[0] = T::of(r * ang.cos());
        task[1] = T::of(r * ang.sin());
    }

    fn observe(&self, qpos: &[T], qvel: &[T], task: &[T], o: &mut [T]) {
        let n = self.links();
        for i in 0..n {
            let (s, c) = qpos[i].sin_cos();
            o[i] = c;
            o[n + i] = s;
            o[2 * n + i] = clamp_vel(qvel[i]);
        }
        let ee = self.end_effector(qpos);
        o[3 * n] = ee[0] - task[0];
        o[3 * n + 1] = ee[1] - task[1];
    }

    fn reward(&self, s: &[T], a: &[T], o: &[T]) -> T {
        -self.eval(s, a, o) - self.ctrl_cost * sum_sq(a)
    }

    /// End-effector to goal distance (m).
    fn eval(&self, _s: &[T], _a: &[T], o: &[T]) -> T {
        let n = self.links();
        sum_sq(&o[3 * n..3 * n + 2]).sqrt()
    }
}

/// In-place Cholesky factorization of the symmetric positive-definite
/// row-major `a` followed by a solve for `x`.
fn cholesky_solve<T: Real>(a: &mut [T], n: usize, b: &[T], x: &mut [T]) {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // L y = b
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    // L^T x = y
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= a[k * n + i] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envcore::Environment;
    use crate::envs::ModelEnv;

    #[test]
    fn single_link_at_zero_reaches_unit_goal() {
        let cfg = ReacherConfig {
            link_lengths: vec![1.0],
            link_masses: vec![1.0],
            reset_goal: [1.0, 0.0],
            goal_annulus: [1.0, 1.0],
            ..Default::default()
        };
        let r = Reacher::<f64>::new(cfg).unwrap();
        let s = [0.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(r.distance(&s), 0.0);
        let env = ModelEnv::new(r);
        let o = env.obs();
        assert_eq!(env.eval(&env.state(), &[0.0], &o), 0.0);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let a0 = a.clone();
        let b = [1.0, -2.0, 0.5];
        let mut x = [0.0; 3];
        cholesky_solve(&mut a, 3, &b, &mut x);
        for i in 0..3 {
            let r: f64 = (0..3).map(|k| a0[i * 3 + k] * x[k]).sum();
            assert!((r - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unreachable_annulus_and_wrong_episode_length() {
        let bad = ReacherConfig {
            link_lengths: vec![1.0, 0.2],
            link_masses: vec![1.0, 1.0],
            goal_annulus: [0.1, 0.9],
            ..Default::default()
        };
        assert!(Reacher::<f64>::new(bad).is_err());
        let bad = ReacherConfig {
            episode_len: 100,
            ..Default::default()
        };
        assert!(Reacher::<f64>::new(bad).is_err());
    }

    #[test]
    fn torque_on_base_joint_spins_arm_counterclockwise() {
        let mut env = ModelEnv::new(Reacher::<f64>::new(ReacherConfig::default()).unwrap());
        env.step(&[1.0, 0.0]).unwrap();
        assert!(env.qvel()[0] > 0.0);
    }
}
