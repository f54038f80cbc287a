//! Model predictive path integral control.
//!
//! Each control step samples `K` smoothed perturbations of the nominal plan,
//! rolls every candidate out for `H` steps on a copy of the environment
//! restored to the current state, and moves the plan by the
//! exponentially weighted average of the perturbations.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envcore::{EnvError, Environment};
use crate::envs::{episode_success, TaskError};
use crate::scalar::Real;
use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MppiError {
    #[error("invalid mppi config: {0}")]
    Config(String),
    #[error("all {0} candidate rollouts produced non-finite returns")]
    AllNonFinite(usize),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Per-dimension perturbation scale; a single number applies to every
/// action dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Uniform(f64),
    PerDim(Vec<f64>),
}

impl Sigma {
    pub fn resolve(&self, act_len: usize) -> Result<Vec<f64>, MppiError> {
        let v = match self {
            Sigma::Uniform(s) => vec![*s; act_len],
            Sigma::PerDim(v) if v.len() == act_len => v.clone(),
            Sigma::PerDim(v) => {
                return Err(MppiError::Config(format!(
                    "sigma has {} entries, action has {act_len}",
                    v.len()
                )))
            }
        };
        if v.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(MppiError::Config(
                "sigma must be finite and non-negative".into(),
            ));
        }
        Ok(v)
    }
}

/// How the last plan entry is filled after shifting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailInit {
    #[default]
    RepeatLast,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MppiConfig {
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub samples: usize,
    pub temperature: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub sigma: Sigma,
    pub tail: TailInit,
    /// Threads used to evaluate candidates.
    pub workers: usize,
}

/// Tuned for the builtin analytic environments, whose rewards are in
/// metres and radians; see [`MppiConfig::sawyer`] for the published
/// reaching settings.
impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            horizon: 16,
            samples: 30,
            temperature: 0.02,
            beta0: 0.25,
            beta1: 0.8,
            sigma: Sigma::Uniform(0.05),
            tail: TailInit::RepeatLast,
            workers: 1,
        }
    }
}

impl MppiConfig {
    /// Settings of the arm reaching experiment.
    pub fn sawyer() -> Self {
        Self {
            horizon: 16,
            samples: 30,
            temperature: 5.0,
            beta0: 0.25,
            beta1: 0.8,
            sigma: Sigma::Uniform(0.5),
            tail: TailInit::RepeatLast,
            workers: 1,
        }
    }

    /// Settings of the in-hand manipulation experiment.
    pub fn hand() -> Self {
        Self {
            horizon: 32,
            samples: 160,
            temperature: 1.0,
            ..Self::sawyer()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "sawyer" => Some(Self::sawyer()),
            "hand" => Some(Self::hand()),
            _ => None,
        }
    }

    /// Weight of `eps[t - 2]` in the smoothing filter.
    pub fn beta2(&self) -> f64 {
        1.0 - self.beta0 - self.beta1
    }

    /// Checks the config. A smoothing pair summing above 1 is rescaled to
    /// sum to exactly 1 (with a warning) unless `strict` is set, in which
    /// case it is rejected. Returns the config to use.
    pub fn validated(&self, strict: bool) -> Result<Self, MppiError> {
        let bad = |m: String| Err(MppiError::Config(m));
        if self.horizon < 1 {
            return bad("H must be at least 1".into());
        }
        if self.samples < 1 {
            return bad("K must be at least 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        for (name, b) in [("beta0", self.beta0), ("beta1", self.beta1)] {
            if !(0.0..=1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1], got {b}"));
            }
        }
        if self.workers < 1 {
            return bad("workers must be at least 1".into());
        }
        if let Sigma::Uniform(s) = self.sigma {
            if !s.is_finite() || s < 0.0 {
                return bad("sigma must be finite and non-negative".into());
            }
        }
        let sum = self.beta0 + self.beta1;
        let mut out = self.clone();
        if sum > 1.0 + 1e-12 {
            if strict {
                return bad(format!(
                    "beta0 + beta1 = {sum} exceeds 1 (the eps[t-2] tap would be negative)"
                ));
            }
            out.beta0 /= sum;
            out.beta1 /= sum;
            log::warn!(
                "mppi: beta0 + beta1 = {sum} > 1; normalized to beta0 = {:.6}, beta1 = {:.6}",
                out.beta0,
                out.beta1
            );
        }
        Ok(out)
    }
}

/// Fills `out` (`K x H x m`, row-major) with smoothed Gaussian noise:
/// `eps[t] = b0 n[t] + b1 eps[t-1] + (1 - b0 - b1) eps[t-2]` with
/// `n[t] ~ N(0, diag(sigma^2))` and zero initial filter memory.
pub fn sample_perturbations<R: Rng + ?Sized>(
    config: &MppiConfig,
    sigma: &[f64],
    rng: &mut R,
    out: &mut [f64],
) {
    let (h, m) = (config.horizon, sigma.len());
    let (b0, b1, b2) = (config.beta0, config.beta1, config.beta2());
    debug_assert_eq!(out.len(), config.samples * h * m);
    for seq in out.chunks_exact_mut(h * m) {
        for t in 0..h {
            for d in 0..m {
                let n: f64 = rng.sample(StandardNormal);
                let p1 = if t >= 1 { seq[(t - 1) * m + d] } else { 0.0 };
                let p2 = if t >= 2 { seq[(t - 2) * m + d] } else { 0.0 };
                seq[t * m + d] = b0 * sigma[d] * n + b1 * p1 + b2 * p2;
            }
        }
    }
}

/// Writes `w[k] = exp((R[k] - max R) / lambda) / Z` into `weights`.
/// Non-finite returns get weight 0. Returns how many were finite.
pub fn softmax_weights(
    returns: &[f64],
    temperature: f64,
    weights: &mut [f64],
) -> Result<usize, MppiError> {
    let max = returns
        .iter()
        .copied()
        .filter(|r| r.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(MppiError::AllNonFinite(returns.len()));
    }
    let mut z = 0.0;
    let mut finite = 0;
    for (w, r) in weights.iter_mut().zip(returns) {
        *w = if r.is_finite() {
            finite += 1;
            ((r - max) / temperature).exp()
        } else {
            0.0
        };
        z += *w;
    }
    for w in weights.iter_mut() {
        *w /= z;
    }
    Ok(finite)
}

/// Per-call controller diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MppiDiagnostics {
    pub latency_s: f64,
    pub best_return: f64,
    pub mean_return: f64,
    pub weight_entropy: f64,
    pub discarded: usize,
}

/// MPPI controller for environments that can be cloned and restored.
#[derive(Debug, Clone)]
pub struct Mppi<T: Real, E> {
    config: MppiConfig,
    sigma: Vec<f64>,
    act_len: usize,
    act_lo: Vec<f64>,
    act_hi: Vec<f64>,
    plan: Vec<f64>,
    noise: Vec<f64>,
    returns: Vec<f64>,
    weights: Vec<f64>,
    snapshot: Vec<T>,
    workers: Vec<CandidateWorker<T, E>>,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
struct CandidateWorker<T, E> {
    env: E,
    action: Vec<T>,
}

impl<T: Real, E: Environment<T> + Clone> Mppi<T, E> {
    /// Builds a controller for `env`'s action space. The config must already
    /// be validated (see [`MppiConfig::validated`]).
    pub fn new(config: MppiConfig, env: &E, seed: u64) -> Result<Self, MppiError> {
        let act_len = env.action_space().len();
        let sigma = config.sigma.resolve(act_len)?;
        if config.beta0 + config.beta1 > 1.0 + 1e-12 {
            return Err(MppiError::Config(
                "beta0 + beta1 exceeds 1; validate the config first".into(),
            ));
        }
        let (h, k) = (config.horizon, config.samples);
        let workers = (0..config.workers.min(k))
            .map(|_| CandidateWorker {
                env: env.clone(),
                action: vec![T::zero(); act_len],
            })
            .collect();
        Ok(Self {
            act_lo: env.action_space().lo().iter().map(|v| v.as_f64()).collect(),
            act_hi: env.action_space().hi().iter().map(|v| v.as_f64()).collect(),
            plan: vec![0.0; h * act_len],
            noise: vec![0.0; k * h * act_len],
            returns: vec![0.0; k],
            weights: vec![0.0; k],
            snapshot: vec![T::zero(); env.layout().len()],
            workers,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sigma,
            act_len,
            config,
        })
    }

    pub fn config(&self) -> &MppiConfig {
        &self.config
    }

    /// Nominal plan, `H x m` row-major.
    pub fn plan(&self) -> &[f64] {
        &self.plan
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Perturbations used by the last update, `K x H x m`.
    pub fn perturbations(&self) -> &[f64] {
        &self.noise
    }

    /// Zeroes the plan, e.g. at the start of an episode.
    pub fn reset(&mut self) {
        self.plan.fill(0.0);
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Improves the plan from `env`'s current state. `env` is only read.
    pub fn update(&mut self, env: &E) -> Result<MppiDiagnostics, MppiError> {
        env.get_state_into(&mut self.snapshot)?;
        sample_perturbations(&self.config, &self.sigma, &mut self.rng, &mut self.noise);
        let (h, m) = (self.config.horizon, self.act_len);
        let chunk = self.config.samples.div_ceil(self.workers.len());
        let (plan, noise, snapshot) = (&self.plan, &self.noise, &self.snapshot);
        if self.workers.len() == 1 {
            evaluate(
                &mut self.workers[0],
                snapshot,
                plan,
                noise,
                h,
                m,
                &mut self.returns,
            );
        } else {
            std::thread::scope(|s| {
                for (worker, (rets, eps)) in self.workers.iter_mut().zip(
                    self.returns
                        .chunks_mut(chunk)
                        .zip(noise.chunks(chunk * h * m)),
                ) {
                    s.spawn(move || evaluate(worker, snapshot, plan, eps, h, m, rets));
                }
            });
        }
        let finite = softmax_weights(&self.returns, self.config.temperature, &mut self.weights)?;
        let discarded = self.config.samples - finite;
        if discarded > 0 {
            log::warn!("mppi: discarded {discarded} candidate(s) with non-finite returns");
        }
        for (w, eps) in self.weights.iter().zip(self.noise.chunks_exact(h * m)) {
            if *w == 0.0 {
                continue;
            }
            for (u, e) in self.plan.iter_mut().zip(eps) {
                *u += w * e;
            }
        }
        for (i, u) in self.plan.iter_mut().enumerate() {
            *u = u.clamp(self.act_lo[i % m], self.act_hi[i % m]);
        }
        let finite_returns = self.returns.iter().filter(|r| r.is_finite());
        let mean_return = finite_returns.clone().sum::<f64>() / finite as f64;
        Ok(MppiDiagnostics {
            latency_s: 0.0,
            best_return: finite_returns.fold(f64::NEG_INFINITY, |a, b| a.max(*b)),
            mean_return,
            weight_entropy: -self
                .weights
                .iter()
                .filter(|w| **w > 0.0)
                .map(|w| w * w.ln())
                .sum::<f64>(),
            discarded,
        })
    }

    /// One receding-horizon step: update from `env`'s state, write the first
    /// planned action into `action` and shift the plan.
    pub fn act(&mut self, env: &E, action: &mut [T]) -> Result<MppiDiagnostics, MppiError> {
        let t0 = Instant::now();
        let mut diag = self.update(env)?;
        let m = self.act_len;
        for (a, u) in action.iter_mut().zip(&self.plan[..m]) {
            *a = T::of(*u);
        }
        self.plan.copy_within(m.., 0);
        let h = self.config.horizon;
        if h >= 2 && self.config.tail == TailInit::RepeatLast {
            self.plan.copy_within((h - 2) * m..(h - 1) * m, (h - 1) * m);
        } else {
            self.plan[(h - 1) * m..].fill(0.0);
        }
        diag.latency_s = t0.elapsed().as_secs_f64();
        Ok(diag)
    }
}

/// Rolls candidates `eps` (each `H x m`) out from `snapshot`, writing their
/// returns. Failed rollouts get a NaN return.
fn evaluate<T: Real, E: Environment<T>>(
    worker: &mut CandidateWorker<T, E>,
    snapshot: &[T],
    plan: &[f64],
    eps: &[f64],
    h: usize,
    m: usize,
    returns: &mut [f64],
) {
    for (ret, e) in returns.iter_mut().zip(eps.chunks_exact(h * m)) {
        *ret = match rollout_candidate(worker, snapshot, plan, e, h, m) {
            Ok(r) => r,
            Err(_) => f64::NAN,
        };
    }
}

fn rollout_candidate<T: Real, E: Environment<T>>(
    worker: &mut CandidateWorker<T, E>,
    snapshot: &[T],
    plan: &[f64],
    eps: &[f64],
    h: usize,
    m: usize,
) -> Result<f64, EnvError> {
    worker.env.set_state(snapshot)?;
    let mut total = 0.0;
    for t in 0..h {
        for d in 0..m {
            worker.action[d] = T::of(plan[t * m + d] + eps[t * m + d]);
        }
        let r = worker.env.step(&worker.action)?;
        total += r.reward.as_f64();
        if r.done {
            break;
        }
    }
    Ok(total)
}

/// Outcome of one MPC episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode: usize,
    pub steps: usize,
    pub total_reward: f64,
    pub evals: Vec<f64>,
    pub latencies_s: Vec<f64>,
    pub mean_latency_s: f64,
    pub final_eval: f64,
    /// Final-quarter success, when the task defines a success radius.
    pub success: Option<bool>,
}

/// Runs episode `episode` of a seeded MPC evaluation: randomized reset from
/// the episode's stream, a zeroed plan, then `steps` receding-horizon
/// steps on `env`.
pub fn run_episode<T: Real, E: Environment<T> + Clone>(
    env: &mut E,
    mppi: &mut Mppi<T, E>,
    steps: usize,
    seed: u64,
    episode: usize,
    success_radius: Option<f64>,
) -> Result<EpisodeReport, MppiError> {
    let mut rng = seed::stream(seed::derive(seed, "mpc-episode"), episode as u64);
    env.rand_reset(&mut rng);
    mppi.reset();
    mppi.reseed(seed::derive_indexed(seed, "mppi", episode as u64));
    let mut action = vec![T::zero(); env.action_space().len()];
    let mut evals = Vec::with_capacity(steps);
    let mut latencies = Vec::with_capacity(steps);
    let mut total = 0.0;
    for _ in 0..steps {
        let d = mppi.act(env, &mut action)?;
        let r = env.step(&action)?;
        total += r.reward.as_f64();
        evals.push(r.eval.as_f64());
        latencies.push(d.latency_s);
        if r.done {
            break;
        }
    }
    let success = match success_radius {
        Some(radius) if evals.len() == steps => Some(episode_success(&evals, steps, radius)?),
        Some(_) => Some(false),
        None => None,
    };
    Ok(EpisodeReport {
        episode,
        steps: evals.len(),
        total_reward: total,
        final_eval: evals.last().copied().unwrap_or(f64::NAN),
        mean_latency_s: latencies.iter().sum::<f64>() / latencies.len().max(1) as f64,
        evals,
        latencies_s: latencies,
        success,
    })
}
