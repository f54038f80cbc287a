use ergon::envcore::{EnvError, Environment, Space, StateLayout, StepResult};
use ergon::envs::{PointMassConfig, ReacherConfig};
use ergon::mppi::{
    run_episode, sample_perturbations, softmax_weights, Mppi, MppiConfig, MppiError, Sigma,
};
use ergon::{seed, PointMass, Reacher};
use proptest::prelude::*;
use rand::RngCore;

fn reacher() -> Reacher {
    Reacher::new(ergon::envs::Reacher::new(ReacherConfig::default()).unwrap())
}

#[test]
fn smoothed_noise_lag1_autocorrelation_matches_filter_moments() {
    let (b0, b1) = (0.2, 0.8);
    let cfg = MppiConfig {
        horizon: 20,
        samples: 50_000,
        beta0: b0,
        beta1: b1,
        ..MppiConfig::default()
    };
    let sigma = 0.7;
    let mut eps = vec![0.0; cfg.samples * cfg.horizon];
    sample_perturbations(&cfg, &[sigma], &mut seed::rng(11), &mut eps);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for seq in eps.chunks_exact(cfg.horizon) {
        for t in 1..cfg.horizon {
            sxy += seq[t] * seq[t - 1];
            sxx += seq[t] * seq[t];
            syy += seq[t - 1] * seq[t - 1];
        }
    }
    let empirical = sxy / (sxx * syy).sqrt();
    // Exact moments of eps[t] = b0 n[t] + b1 eps[t-1] from zero memory
    // (the eps[t-2] tap is zero here).
    let mut var = vec![0.0; cfg.horizon];
    for t in 0..cfg.horizon {
        let prev = if t > 0 { var[t - 1] } else { 0.0 };
        var[t] = b0 * b0 * sigma * sigma + b1 * b1 * prev;
    }
    let cov: f64 = (1..cfg.horizon).map(|t| b1 * var[t - 1]).sum();
    let vx: f64 = var[1..].iter().sum();
    let vy: f64 = var[..cfg.horizon - 1].iter().sum();
    let exact = cov / (vx * vy).sqrt();
    assert!(
        (empirical - exact).abs() < 0.01 * exact,
        "empirical {empirical}, exact {exact}"
    );
}

#[test]
fn uniform_returns_move_plan_by_mean_perturbation() {
    let mut w = vec![0.0; 4];
    softmax_weights(&[-3.0; 4], 5.0, &mut w).unwrap();
    assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
}

#[test]
fn huge_temperature_update_is_the_mean_perturbation() {
    let env = reacher();
    let cfg = MppiConfig {
        temperature: 1e6,
        ..MppiConfig::default()
    }
    .validated(false)
    .unwrap();
    let mut m = Mppi::new(cfg.clone(), &env, 4).unwrap();
    m.update(&env).unwrap();
    let hm = cfg.horizon * 2;
    let mut mean = vec![0.0; hm];
    for seq in m.perturbations().chunks_exact(hm) {
        for (a, e) in mean.iter_mut().zip(seq) {
            *a += e / cfg.samples as f64;
        }
    }
    for (u, e) in m.plan().iter().zip(&mean) {
        assert!((u - e).abs() < 1e-6);
    }
}

#[test]
fn updates_never_touch_the_true_environment() {
    let mut env = reacher();
    env.rand_reset(&mut seed::rng(3));
    env.step(&[0.3, -0.2]).unwrap();
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    let (s0, o0) = (bits(env.state()), bits(env.obs()));
    let mut m = Mppi::new(MppiConfig::default().validated(false).unwrap(), &env, 1).unwrap();
    let mut a = [0.0; 2];
    for _ in 0..5 {
        m.act(&env, &mut a).unwrap();
    }
    assert_eq!(bits(env.state()), s0);
    assert_eq!(bits(env.obs()), o0);
}

#[test]
fn pointmass_at_goal_stays_quiet() {
    let mut env = PointMass::new(
        ergon::envs::PointMass::new(PointMassConfig {
            reset_goal: vec![0.0, 0.0],
            ..Default::default()
        })
        .unwrap(),
    );
    env.reset();
    let cfg = MppiConfig::default().validated(false).unwrap();
    let mut m = Mppi::new(cfg, &env, 3).unwrap();
    let mut a = [0.0; 2];
    for t in 0..100 {
        m.act(&env, &mut a).unwrap();
        let n = (a[0] * a[0] + a[1] * a[1]).sqrt();
        assert!(n < 0.05, "step {t}: |a| = {n}");
        env.step(&a).unwrap();
    }
}

#[test]
fn identical_seeds_and_snapshots_emit_identical_actions() {
    let mut env = reacher();
    env.rand_reset(&mut seed::rng(8));
    let cfg = MppiConfig::default().validated(false).unwrap();
    let mut a = Mppi::new(cfg.clone(), &env, 21).unwrap();
    let mut b = Mppi::new(MppiConfig { workers: 3, ..cfg }, &env, 21).unwrap();
    let (mut ua, mut ub) = ([0.0; 2], [0.0; 2]);
    for _ in 0..10 {
        a.act(&env, &mut ua).unwrap();
        b.act(&env, &mut ub).unwrap();
        assert_eq!(ua, ub);
        env.step(&ua).unwrap();
    }
}

#[test]
fn reacher_episode_runs_end_to_end() {
    let mut env = reacher();
    let cfg = MppiConfig::default().validated(false).unwrap();
    let mut m = Mppi::new(cfg, &env, 0).unwrap();
    let rep = run_episode(&mut env, &mut m, 75, 5, 0, Some(0.05)).unwrap();
    assert_eq!(rep.steps, 75);
    assert_eq!(rep.latencies_s.len(), 75);
    assert!(rep.latencies_s.iter().all(|l| *l > 0.0));
    assert!(rep.success.is_some());
    let again = run_episode(&mut env, &mut m, 75, 5, 0, Some(0.05)).unwrap();
    assert_eq!(rep.evals, again.evals);
}

#[test]
fn plan_shift_repeats_the_last_action() {
    let env = reacher();
    let mut m = Mppi::new(MppiConfig::default().validated(false).unwrap(), &env, 2).unwrap();
    let mut a = [0.0; 2];
    m.act(&env, &mut a).unwrap();
    let p = m.plan();
    let h = m.config().horizon;
    assert_eq!(p[(h - 1) * 2..], p[(h - 2) * 2..(h - 1) * 2]);
}

/// Point mass whose step fails whenever the first action component is
/// above a threshold.
#[derive(Clone)]
struct Fragile {
    inner: PointMass,
    limit: f64,
}

impl Environment<f64> for Fragile {
    fn name(&self) -> &'static str {
        "fragile"
    }
    fn layout(&self) -> StateLayout {
        self.inner.layout()
    }
    fn state_space(&self) -> &Space<f64> {
        self.inner.state_space()
    }
    fn obs_space(&self) -> &Space<f64> {
        self.inner.obs_space()
    }
    fn action_space(&self) -> &Space<f64> {
        self.inner.action_space()
    }
    fn get_state_into(&self, buf: &mut [f64]) -> Result<(), EnvError> {
        self.inner.get_state_into(buf)
    }
    fn set_state(&mut self, s: &[f64]) -> Result<(), EnvError> {
        self.inner.set_state(s)
    }
    fn get_obs_into(&self, buf: &mut [f64]) -> Result<(), EnvError> {
        self.inner.get_obs_into(buf)
    }
    fn reward(&self, s: &[f64], a: &[f64], o: &[f64]) -> f64 {
        self.inner.reward(s, a, o)
    }
    fn eval(&self, s: &[f64], a: &[f64], o: &[f64]) -> f64 {
        self.inner.eval(s, a, o)
    }
    fn step(&mut self, a: &[f64]) -> Result<StepResult<f64>, EnvError> {
        if a[0] > self.limit {
            return Err(EnvError::NonFiniteAction {
                index: 0,
                value: f64::NAN,
            });
        }
        self.inner.step(a)
    }
    fn reset(&mut self) {
        self.inner.reset()
    }
    fn rand_reset(&mut self, rng: &mut dyn RngCore) {
        self.inner.rand_reset(rng)
    }
    fn is_done(&self) -> bool {
        self.inner.is_done()
    }
    fn dt(&self) -> f64 {
        self.inner.dt()
    }
    fn time(&self) -> f64 {
        self.inner.time()
    }
}

#[test]
fn failing_candidates_are_discarded_and_all_failing_is_an_error() {
    let inner = PointMass::new(ergon::envs::PointMass::new(Default::default()).unwrap());
    let cfg = MppiConfig {
        sigma: Sigma::Uniform(1.0),
        ..MppiConfig::default()
    }
    .validated(false)
    .unwrap();
    let env = Fragile {
        inner: inner.clone(),
        limit: 0.0,
    };
    let mut m = Mppi::new(cfg.clone(), &env, 0).unwrap();
    let d = m.update(&env).unwrap();
    assert!(d.discarded > 0 && d.discarded < cfg.samples);
    for (w, seq) in m
        .weights()
        .iter()
        .zip(m.perturbations().chunks_exact(cfg.horizon * 2))
    {
        if seq.iter().step_by(2).any(|e| *e > 0.0) {
            assert_eq!(*w, 0.0);
        }
    }
    let env = Fragile {
        inner,
        limit: -10.0,
    };
    let mut m = Mppi::new(cfg.clone(), &env, 0).unwrap();
    assert_eq!(
        m.update(&env).unwrap_err(),
        MppiError::AllNonFinite(cfg.samples)
    );
}

proptest! {
    #[test]
    fn weights_normalize_and_ignore_shifts(
        r in prop::collection::vec(-50.0f64..50.0, 1..40),
        shift in -1e3f64..1e3,
        lambda in 0.01f64..100.0,
    ) {
        let mut w = vec![0.0; r.len()];
        let mut ws = vec![0.0; r.len()];
        softmax_weights(&r, lambda, &mut w).unwrap();
        let shifted: Vec<f64> = r.iter().map(|x| x + shift).collect();
        softmax_weights(&shifted, lambda, &mut ws).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in w.iter().zip(&ws) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // direct evaluation without the max baseline
        let z: f64 = r.iter().map(|x| (x / lambda).exp()).sum();
        if z.is_finite() && z > 0.0 {
            for (a, x) in w.iter().zip(&r) {
                prop_assert!((a - (x / lambda).exp() / z).abs() < 1e-12);
            }
        }
    }
}
