//! Environment properties checked against independent oracles.

use ergon::envs::{
    reacher, BuiltinEnv, CartPole, CartPoleConfig, Integrator, Model, ModelEnv, Pendulum,
    PendulumConfig, PointMass, PointMassConfig, Reacher, ReacherConfig, RESET_NOISE,
};
use ergon::{seed, EnvError, Environment};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PI: f64 = std::f64::consts::PI;

fn all_envs() -> Vec<BuiltinEnv<f64>> {
    ergon::envs::ENV_NAMES
        .iter()
        .map(|n| BuiltinEnv::from_name(n, None).unwrap())
        .collect()
}

// ---------------------------------------------------------------------------
// Independent equations of motion (closed form) and a plain RK4.
// ---------------------------------------------------------------------------

fn rk4(x: &mut [f64], h: f64, f: &dyn Fn(&[f64], &mut [f64])) {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; 4];
    let mut tmp = vec![0.0; n];
    f(x, &mut k[0]);
    for (stage, c) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
        for i in 0..n {
            tmp[i] = x[i] + c * h * k[stage - 1][i];
        }
        let (head, tail) = k.split_at_mut(stage);
        let _ = head;
        f(&tmp, &mut tail[0]);
    }
    for i in 0..n {
        x[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

/// x = [x, th, xd, thd]
fn cartpole_rhs(c: &CartPoleConfig, u: f64) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |x, dx| {
        let (m, mc, l, g) = (c.pole_mass, c.cart_mass, c.pole_length, c.gravity);
        let (th, xd, thd) = (x[1], x[2], x[3]);
        let f = c.action_scale * u.clamp(-1.0, 1.0) - c.cart_damping * xd;
        // Textbook form for a point-mass pole measured from upright.
        let s = th.sin();
        let co = th.cos();
        let denom = mc + m * s * s;
        let xdd = (f + m * s * (l * thd * thd - g * co) + co * c.pole_damping * thd / l) / denom;
        let thdd = (g * s - co * xdd) / l - c.pole_damping * thd / (m * l * l);
        dx[0] = xd;
        dx[1] = thd;
        dx[2] = xdd;
        dx[3] = thdd;
    }
}

fn pendulum_rhs(c: &PendulumConfig, u: f64) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |x, dx| {
        let i = c.mass * c.length * c.length;
        dx[0] = x[1];
        dx[1] = (c.mass * c.gravity * c.length * x[0].sin() - c.damping * x[1]
            + c.action_scale * u.clamp(-1.0, 1.0))
            / i;
    }
}

/// Two-link arm with point masses at the link ends, textbook closed form.
fn reacher2_rhs(c: &ReacherConfig, u: [f64; 2]) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |x, dx| {
        let (l1, l2) = (c.link_lengths[0], c.link_lengths[1]);
        let (m1, m2) = (c.link_masses[0], c.link_masses[1]);
        let (q2, w1, w2) = (x[1], x[2], x[3]);
        let (s2, c2) = q2.sin_cos();
        let a = c.armature;
        let m11 = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2) + a;
        let m12 = m2 * (l2 * l2 + l1 * l2 * c2);
        let m22 = m2 * l2 * l2 + a;
        let h1 = -m2 * l1 * l2 * s2 * (2.0 * w1 * w2 + w2 * w2);
        let h2 = m2 * l1 * l2 * s2 * w1 * w1;
        let t1 = c.action_scale * u[0].clamp(-1.0, 1.0) - c.damping * w1 - h1;
        let t2 = c.action_scale * u[1].clamp(-1.0, 1.0) - c.damping * w2 - h2;
        let det = m11 * m22 - m12 * m12;
        dx[0] = w1;
        dx[1] = w2;
        dx[2] = (m22 * t1 - m12 * t2) / det;
        dx[3] = (m11 * t2 - m12 * t1) / det;
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    num / den
}

fn controls(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// Fine-step reference integrator: 100x substeps, independent equations.
// ---------------------------------------------------------------------------

#[test]
fn cartpole_matches_fine_step_reference() {
    let cfg = CartPoleConfig {
        cart_damping: 0.1,
        pole_damping: 0.01,
        ..Default::default()
    };
    let mut env = ModelEnv::new(CartPole::<f64>::new(cfg.clone()).unwrap());
    let mut s = env.state();
    s[1] = PI - 0.4;
    s[3] = 0.3;
    env.set_state(&s).unwrap();
    let mut x = vec![s[0], s[1], s[2], s[3]];
    let h = cfg.dt / (cfg.substeps * 100) as f64;
    for u in controls(100, 1, 1) {
        env.step(&u).unwrap();
        let f = cartpole_rhs(&cfg, u[0]);
        for _ in 0..cfg.substeps * 100 {
            rk4(&mut x, h, &f);
        }
    }
    let got = env.state();
    let err = rel_err(&got[..4], &x);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn pendulum_matches_fine_step_reference() {
    let cfg = PendulumConfig {
        damping: 0.05,
        ..Default::default()
    };
    let mut env = ModelEnv::new(Pendulum::<f64>::new(cfg.clone()).unwrap());
    env.set_state(&[PI - 1.0, 0.5, 0.0]).unwrap();
    let mut x = vec![PI - 1.0, 0.5];
    let h = cfg.dt / (cfg.substeps * 100) as f64;
    for u in controls(100, 1, 2) {
        env.step(&u).unwrap();
        let f = pendulum_rhs(&cfg, u[0]);
        for _ in 0..cfg.substeps * 100 {
            rk4(&mut x, h, &f);
        }
    }
    let err = rel_err(&env.state()[..2], &x);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn reacher_matches_fine_step_reference() {
    let cfg = ReacherConfig::default();
    let mut env = ModelEnv::new(Reacher::<f64>::new(cfg.clone()).unwrap());
    let mut x = vec![0.3, -0.7, 0.0, 0.0];
    let mut s = env.state();
    s[..4].copy_from_slice(&x);
    env.set_state(&s).unwrap();
    let h = cfg.dt / (cfg.substeps * 100) as f64;
    for u in controls(100, 2, 3) {
        env.step(&u).unwrap();
        let f = reacher2_rhs(&cfg, [u[0], u[1]]);
        for _ in 0..cfg.substeps * 100 {
            rk4(&mut x, h, &f);
        }
    }
    let err = rel_err(&env.state()[..4], &x);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn pointmass_matches_fine_step_reference() {
    let cfg = PointMassConfig::default();
    let mut env = ModelEnv::new(PointMass::<f64>::new(cfg.clone()).unwrap());
    // x = [px, py, vx, vy]
    let mut x = vec![0.0; 4];
    let h = cfg.dt / (cfg.substeps * 100) as f64;
    for u in controls(100, 2, 4) {
        env.step(&u).unwrap();
        let f = |x: &[f64], dx: &mut [f64]| {
            for i in 0..2 {
                dx[i] = x[2 + i];
                dx[2 + i] = (cfg.action_scale * u[i] - cfg.damping * x[2 + i]) / cfg.mass;
            }
        };
        for _ in 0..cfg.substeps * 100 {
            rk4(&mut x, h, &f);
        }
    }
    let err = rel_err(&env.state()[..4], &x);
    assert!(err < 1e-4, "relative error {err}");
}

// ---------------------------------------------------------------------------
// Energy conservation with zero control and zero damping.
// ---------------------------------------------------------------------------

fn max_energy_drift<M: Model<f64>>(
    env: &mut ModelEnv<f64, M>,
    energy: impl Fn(&ModelEnv<f64, M>) -> f64,
) -> f64 {
    let zero = vec![0.0; env.action_space().len()];
    let e0 = energy(env);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        env.step(&zero).unwrap();
        worst = worst.max(((energy(env) - e0) / e0).abs());
    }
    worst
}

#[test]
fn cartpole_conserves_energy() {
    let mut env = ModelEnv::new(CartPole::<f64>::new(CartPoleConfig::default()).unwrap());
    env.set_state(&[0.0, PI - 1.2, 0.3, 0.0, 0.0]).unwrap();
    let drift = max_energy_drift(&mut env, |e| e.model().energy(e.qpos(), e.qvel()));
    assert!(drift < 1e-3, "drift {drift}");
}

#[test]
fn pendulum_conserves_energy() {
    let mut env = ModelEnv::new(Pendulum::<f64>::new(PendulumConfig::default()).unwrap());
    env.set_state(&[PI - 2.0, 0.0, 0.0]).unwrap();
    let drift = max_energy_drift(&mut env, |e| e.model().energy(e.qpos(), e.qvel()));
    assert!(drift < 1e-3, "drift {drift}");
}

#[test]
fn reacher_conserves_energy_without_damping() {
    let cfg = ReacherConfig {
        damping: 0.0,
        ..Default::default()
    };
    let mut env = ModelEnv::new(Reacher::<f64>::new(cfg).unwrap());
    let mut s = env.state();
    s[2] = 2.0;
    s[3] = -1.0;
    env.set_state(&s).unwrap();
    let drift = max_energy_drift(&mut env, |e| e.model().energy(e.qpos(), e.qvel()));
    assert!(drift < 1e-3, "drift {drift}");
}

#[test]
fn semi_implicit_euler_energy_stays_bounded() {
    // First-order symplectic integrator: energy oscillates but does not drift.
    let cfg = PendulumConfig {
        integrator: Integrator::SemiImplicitEuler,
        ..Default::default()
    };
    let mut env = ModelEnv::new(Pendulum::<f64>::new(cfg).unwrap());
    env.set_state(&[PI - 0.3, 0.0, 0.0]).unwrap();
    let e0 = env.model().energy(env.qpos(), env.qvel());
    let mut first = 0.0f64;
    let mut last = 0.0f64;
    for i in 0..20_000 {
        env.step(&[0.0]).unwrap();
        let d = ((env.model().energy(env.qpos(), env.qvel()) - e0) / e0).abs();
        if i < 1000 {
            first = first.max(d);
        } else if i >= 19_000 {
            last = last.max(d);
        }
    }
    assert!(first < 1e-2);
    assert!(last < 1.5 * first, "energy error grew: {first} -> {last}");
}

#[test]
fn stable_equilibria_are_fixed_points() {
    let mut cp = ModelEnv::new(CartPole::<f64>::new(CartPoleConfig::default()).unwrap());
    let s0 = cp.state();
    cp.step(&[0.0]).unwrap();
    let s1 = cp.state();
    for i in 0..4 {
        assert!((s1[i] - s0[i]).abs() < 1e-10);
    }
    let mut p = ModelEnv::new(Pendulum::<f64>::new(PendulumConfig::default()).unwrap());
    p.step(&[0.0]).unwrap();
    assert!((p.state()[0] - PI).abs() < 1e-10 && p.state()[1].abs() < 1e-10);
}

#[test]
fn non_finite_dynamics_fault_with_state_dump() {
    let cfg = PendulumConfig {
        action_scale: f64::MAX,
        ..Default::default()
    };
    let mut env = ModelEnv::new(Pendulum::<f64>::new(cfg).unwrap());
    let before = env.state();
    match env.step(&[1.0]) {
        Err(EnvError::Fault { model, qpos, .. }) => {
            assert_eq!(model, "pendulum");
            assert_eq!(qpos, vec![PI]);
        }
        other => panic!("expected fault, got {other:?}"),
    }
    assert_eq!(env.state(), before);
}

// ---------------------------------------------------------------------------
// Forward kinematics oracle.
// ---------------------------------------------------------------------------

/// Homogeneous-transform chain, coded independently of the library.
fn fk_oracle(lengths: &[f64], q: &[f64]) -> (f64, f64) {
    let mut t = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for (l, qi) in lengths.iter().zip(q) {
        let (s, c) = qi.sin_cos();
        let step = [[c, -s, c * l], [s, c, s * l], [0.0, 0.0, 1.0]];
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for k in 0..3 {
                out[r][k] = (0..3).map(|j| t[r][j] * step[j][k]).sum();
            }
        }
        t = out;
    }
    (t[0][2], t[1][2])
}

#[test]
fn reacher_fk_matches_transform_chain_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=5);
        let lengths: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-PI..PI)).collect();
        let [x, y] = reacher::forward_kinematics(&lengths, &q);
        let (ox, oy) = fk_oracle(&lengths, &q);
        assert!((x - ox).abs() < 1e-12 && (y - oy).abs() < 1e-12);
    }
}

#[test]
fn reacher_eval_matches_oracle_distance() {
    let model = Reacher::<f64>::new(ReacherConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let s = [
            rng.gen_range(-PI..PI),
            rng.gen_range(-PI..PI),
            0.0,
            0.0,
            0.0,
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let (x, y) = fk_oracle(&[0.5, 0.5], &s[..2]);
        let want = ((x - s[5]).powi(2) + (y - s[6]).powi(2)).sqrt();
        assert!((model.distance(&s) - want).abs() < 1e-12);
        let mut o = [0.0; 8];
        model.observe(&s[..2], &s[2..4], &s[5..], &mut o);
        assert!((model.eval(&s, &[0.0, 0.0], &o) - want).abs() < 1e-12);
    }
}

#[test]
fn reacher_first_step_toward_goal_reduces_distance() {
    let mut env = ModelEnv::new(Reacher::<f64>::new(ReacherConfig::default()).unwrap());
    let s = env.state();
    let d0 = env.model().distance(&s);
    // Direction J^T (goal - ee), Jacobian by central differences.
    let q = [s[0], s[1]];
    let ee = reacher::forward_kinematics(&[0.5, 0.5], &q);
    let err = [s[5] - ee[0], s[6] - ee[1]];
    let mut a = [0.0; 2];
    for j in 0..2 {
        let h = 1e-6;
        let (mut qp, mut qm) = (q, q);
        qp[j] += h;
        qm[j] -= h;
        let p = reacher::forward_kinematics(&[0.5, 0.5], &qp);
        let m = reacher::forward_kinematics(&[0.5, 0.5], &qm);
        a[j] = ((p[0] - m[0]) * err[0] + (p[1] - m[1]) * err[1]) / (2.0 * h);
    }
    let n = (a[0] * a[0] + a[1] * a[1]).sqrt();
    let r = env.step(&[a[0] / n, a[1] / n]).unwrap();
    assert!(r.eval < d0, "{} !< {}", r.eval, d0);
}

// ---------------------------------------------------------------------------
// Restoration determinism, purity and accessor contracts for every env.
// ---------------------------------------------------------------------------

#[test]
fn snapshot_restore_replays_bit_identically() {
    for mut env in all_envs() {
        let mut rng = seed::rng(5);
        env.rand_reset(&mut rng);
        let na = env.action_space().len();
        let acts = controls(15, na, 6);
        for a in &acts[..10] {
            env.step(a).unwrap();
        }
        let mut snap = vec![0.0; env.state_space().len()];
        env.get_state_into(&mut snap).unwrap();
        let mut first = Vec::new();
        for a in &acts[10..] {
            first.push(env.step(a).unwrap());
        }
        let end1 = env.state();
        env.set_state(&snap).unwrap();
        let mut second = Vec::new();
        for a in &acts[10..] {
            second.push(env.step(a).unwrap());
        }
        assert_eq!(first, second, "{}", env.name());
        assert_eq!(end1, env.state(), "{}", env.name());
    }
}

#[test]
fn get_set_get_round_trips() {
    for mut env in all_envs() {
        env.rand_reset(&mut seed::rng(1));
        let s = env.state();
        env.set_state(&s).unwrap();
        assert_eq!(env.state(), s);
        let o = env.obs();
        env.set_state(&s).unwrap();
        assert_eq!(env.obs(), o);
    }
}

#[test]
fn set_state_of_reset_snapshot_equals_reset() {
    for mut env in all_envs() {
        env.reset();
        let s0 = env.state();
        env.rand_reset(&mut seed::rng(2));
        env.step(&vec![0.3; env.action_space().len()]).unwrap();
        env.set_state(&s0).unwrap();
        let mut fresh = env.clone();
        fresh.reset();
        assert_eq!(env.state(), fresh.state());
        assert_eq!(env.obs(), fresh.obs());
    }
}

#[test]
fn accessors_reject_wrong_lengths_and_bad_states() {
    for mut env in all_envs() {
        let n = env.state_space().len();
        let mut short = vec![0.0; n - 1];
        assert!(matches!(
            env.get_state_into(&mut short),
            Err(EnvError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            env.get_obs_into(&mut vec![0.0; env.obs_space().len() + 1]),
            Err(EnvError::DimensionMismatch { .. })
        ));
        assert!(env.set_state(&short).is_err());
        let mut nan = env.state();
        nan[0] = f64::NAN;
        assert!(matches!(
            env.set_state(&nan),
            Err(EnvError::OutOfBounds { .. })
        ));
        let mut a = vec![0.0; env.action_space().len()];
        a[0] = f64::INFINITY;
        assert!(matches!(
            env.step(&a),
            Err(EnvError::NonFiniteAction { index: 0, .. })
        ));
        assert!(env.step(&[0.0; 7]).is_err());
    }
}

#[test]
fn reward_and_eval_are_pure() {
    for env in all_envs() {
        let s = env.state();
        let o = env.obs();
        let a = vec![0.4; env.action_space().len()];
        let r1 = env.reward(&s, &a, &o);
        let e1 = env.eval(&s, &a, &o);
        assert_eq!(env.state(), s);
        assert_eq!(r1, env.reward(&s, &a, &o));
        assert_eq!(e1, env.eval(&s, &a, &o));
    }
}

#[test]
fn observation_clamps_velocities() {
    let mut env = ModelEnv::new(Pendulum::<f64>::new(PendulumConfig::default()).unwrap());
    env.set_state(&[PI, 50.0, 0.0]).unwrap();
    assert_eq!(env.obs()[2], 10.0);
    env.set_state(&[PI, -50.0, 0.0]).unwrap();
    assert_eq!(env.obs()[2], -10.0);
    env.set_state(&[PI, 0.0, 0.0]).unwrap();
    assert_eq!(env.obs()[2], 0.0);
}

#[test]
fn goal_changes_reward_not_dynamics() {
    let mut a = ModelEnv::new(Reacher::<f64>::new(ReacherConfig::default()).unwrap());
    let mut b = a.clone();
    let mut s = a.state();
    s[2] = 0.7;
    a.set_state(&s).unwrap();
    s[5] = -0.5;
    s[6] = -0.2;
    b.set_state(&s).unwrap();
    let (ra, rb) = (a.step(&[0.0, 0.0]).unwrap(), b.step(&[0.0, 0.0]).unwrap());
    assert_eq!(&a.state()[..5], &b.state()[..5]);
    assert_ne!(ra.reward, rb.reward);
}

#[test]
fn reacher_at_goal_has_zero_eval_and_maximal_reward() {
    let env = ModelEnv::new(Reacher::<f64>::new(ReacherConfig::default()).unwrap());
    let mut s = env.state();
    let ee = reacher::forward_kinematics(&[0.5, 0.5], &[0.4, 0.9]);
    s[0] = 0.4;
    s[1] = 0.9;
    s[5] = ee[0];
    s[6] = ee[1];
    let mut e = env.clone();
    e.set_state(&s).unwrap();
    let o = e.obs();
    assert!(e.eval(&s, &[0.0, 0.0], &o) < 1e-15);
    let best = e.reward(&s, &[0.0, 0.0], &o);
    assert!(best.abs() < 1e-15);
    let mut rng = seed::rng(4);
    for _ in 0..100 {
        let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        assert!(e.reward(&s, &a, &o) <= best);
        // eval depends on state only
        assert_eq!(e.eval(&s, &a, &o), e.eval(&s, &[0.0, 0.0], &o));
    }
}

proptest! {
    #[test]
    fn reward_decreases_with_action_magnitude(scale in 0.0f64..0.99, a0 in -1.0f64..1.0, a1 in -1.0f64..1.0) {
        prop_assume!(a0.abs() + a1.abs() > 1e-3);
        let env = BuiltinEnv::<f64>::from_name("reacher", None).unwrap();
        let (s, o) = (env.state(), env.obs());
        let big = env.reward(&s, &[a0, a1], &o);
        let small = env.reward(&s, &[a0 * scale, a1 * scale], &o);
        prop_assert!(small > big);
    }
}

// ---------------------------------------------------------------------------
// Randomized resets.
// ---------------------------------------------------------------------------

#[test]
fn rand_reset_is_seeded_and_bounded() {
    for mut env in all_envs() {
        let mut e2 = env.clone();
        env.rand_reset(&mut seed::rng(9));
        e2.rand_reset(&mut seed::rng(9));
        assert_eq!(env.state(), e2.state());
        let mut base = env.clone();
        base.reset();
        let (l, s, b) = (env.layout(), env.state(), base.state());
        for i in 0..l.nq + l.nv {
            assert!((s[i] - b[i]).abs() <= RESET_NOISE);
        }
        assert_eq!(l.time(&s), 0.0);
    }
}

#[test]
fn rand_reset_perturbations_have_zero_mean() {
    let mut env = BuiltinEnv::<f64>::from_name("cartpole", None).unwrap();
    let mut rng = seed::rng(21);
    let n = 10_000;
    let mut sum = [0.0; 4];
    for _ in 0..n {
        env.rand_reset(&mut rng);
        let s = env.state();
        sum[0] += s[0];
        sum[1] += s[1] - PI;
        sum[2] += s[2];
        sum[3] += s[3];
    }
    // U(-a, a) has standard deviation a / sqrt(3).
    let se = RESET_NOISE / 3f64.sqrt() / (n as f64).sqrt();
    for s in sum {
        assert!(
            (s / n as f64).abs() < 3.0 * se,
            "mean {} vs 3se {}",
            s / n as f64,
            3.0 * se
        );
    }
}

/// Upper-tail probability of the chi-square distribution, by the regularized
/// incomplete gamma series.
fn chi_square_sf(x: f64, k: usize) -> f64 {
    let a = k as f64 / 2.0;
    let z = x / 2.0;
    let mut sum = 1.0 / a;
    let mut term = 1.0 / a;
    for n in 1..1000 {
        term *= z / (a + n as f64);
        sum += term;
    }
    let ln_gamma_a = ln_gamma(a);
    let lower = (a * z.ln() - z - ln_gamma_a).exp() * sum;
    1.0 - lower
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation.
    let g = 7.0;
    let c = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = c[0];
    let t = x + g + 0.5;
    for (i, ci) in c.iter().enumerate().skip(1) {
        a += ci / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[test]
fn reacher_goals_are_uniform_over_annulus() {
    let cfg = ReacherConfig::default();
    let (r0, r1) = cfg.goal_radii();
    let mut env = ModelEnv::new(Reacher::<f64>::new(cfg).unwrap());
    let mut rng = seed::rng(33);
    // 5 equal-area radial rings x 8 sectors.
    let (rings, sectors) = (5usize, 8usize);
    let mut counts = vec![0usize; rings * sectors];
    let n = 10_000;
    for _ in 0..n {
        env.rand_reset(&mut rng);
        let (gx, gy) = (env.task()[0], env.task()[1]);
        let r2 = gx * gx + gy * gy;
        assert!(r2 >= r0 * r0 - 1e-12 && r2 <= r1 * r1 + 1e-12);
        let ring = (((r2 - r0 * r0) / (r1 * r1 - r0 * r0)) * rings as f64)
            .floor()
            .min(rings as f64 - 1.0) as usize;
        let ang = gy.atan2(gx) + PI;
        let sector = ((ang / (2.0 * PI)) * sectors as f64)
            .floor()
            .min(sectors as f64 - 1.0) as usize;
        counts[ring * sectors + sector] += 1;
    }
    let expected = n as f64 / (rings * sectors) as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = chi_square_sf(chi2, rings * sectors - 1);
    assert!(p > 0.01, "chi2 = {chi2}, p = {p}");
}

#[test]
fn chi_square_tail_sanity() {
    // Known values: P(chi2_1 > 3.841) = 0.05, P(chi2_10 > 18.307) = 0.05.
    assert!((chi_square_sf(3.841, 1) - 0.05).abs() < 1e-3);
    assert!((chi_square_sf(18.307, 10) - 0.05).abs() < 1e-3);
}

#[test]
fn single_precision_envs_track_double_precision() {
    let mut a = ergon::f32::CartPole::new(CartPole::<f32>::new(CartPoleConfig::default()).unwrap());
    let mut b = ergon::CartPole::new(CartPole::<f64>::new(CartPoleConfig::default()).unwrap());
    for u in controls(50, 1, 8) {
        a.step(&[u[0] as f32]).unwrap();
        b.step(&u).unwrap();
    }
    let (sa, sb) = (a.state(), b.state());
    for i in 0..4 {
        assert!((sa[i] as f64 - sb[i]).abs() < 1e-3);
    }
}
