use rand::Rng;

use super::{batch_advantages, normalize, NpgConfig, NpgError, TINY};
use crate::neural::{
    conjugate_gradient, value_fit, DiagGaussianPolicy, Mlp, NeuralError, ScoreBatch, Workspace,
};
use crate::sampler::TrajectoryBatch;
use crate::scalar::Real;

/// Matrix-free `F v = (1/N) sum_i g_i (g_i . v) + damping v`, where `g_i` is
/// the score of sample `i`.
pub struct FisherOperator<'p, T: Real> {
    scores: ScoreBatch<'p, T>,
    damping: f64,
    tmp: Vec<f64>,
}

impl<'p, T: Real> FisherOperator<'p, T> {
    pub fn new(
        policy: &'p DiagGaussianPolicy<T>,
        obs: &[T],
        actions: &[T],
        damping: f64,
    ) -> Result<Self, NpgError> {
        let scores = ScoreBatch::new(policy, obs, actions)?;
        if scores.is_empty() {
            return Err(NeuralError::EmptyDataset.into());
        }
        let tmp = vec![0.0; scores.len()];
        Ok(Self {
            scores,
            damping,
            tmp,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.scores.num_params()
    }

    pub fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        let inv_n = 1.0 / self.scores.len() as f64;
        self.scores.jvp(v, &mut self.tmp);
        for t in &mut self.tmp {
            *t *= inv_n;
        }
        out.fill(0.0);
        self.scores.vjp(&self.tmp, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += self.damping * vi;
        }
    }

    /// Mean advantage-weighted score `(1/N) sum_i A_i g_i`.
    pub fn gradient(&mut self, advantages: &[f64]) -> Result<Vec<f64>, NpgError> {
        let n = self.scores.len();
        if advantages.len() != n {
            return Err(NpgError::LengthMismatch {
                what: "advantages",
                expected: n,
                got: advantages.len(),
            });
        }
        let w: Vec<f64> = advantages.iter().map(|a| a / n as f64).collect();
        let mut g = vec![0.0; self.scores.num_params()];
        self.scores.vjp(&w, &mut g);
        Ok(g)
    }
}

/// One-shot Fisher-vector product over a batch.
pub fn fisher_vector_product<T: Real>(
    policy: &DiagGaussianPolicy<T>,
    obs: &[T],
    actions: &[T],
    v: &[f64],
    damping: f64,
) -> Result<Vec<f64>, NpgError> {
    if v.len() != policy.num_params() {
        return Err(NpgError::LengthMismatch {
            what: "vector",
            expected: policy.num_params(),
            got: v.len(),
        });
    }
    let mut f = FisherOperator::new(policy, obs, actions, damping)?;
    let mut out = vec![0.0; v.len()];
    f.apply(v, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalStep {
    /// Parameter change; all zeros when degenerate.
    pub delta: Vec<f64>,
    /// `g . x` with `x` the CG solution of `F x = g`.
    pub gx: f64,
    pub scale: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    /// `g . x <= 0` (including `g = 0`): no update is taken.
    pub degenerate: bool,
}

/// Solves `F x = g` by conjugate gradient and scales `x` to metric length
/// `sqrt(step_size)`.
pub fn natural_step<F>(matvec: F, g: &[f64], config: &NpgConfig) -> Result<NaturalStep, NpgError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let cg = conjugate_gradient(matvec, g, config.cg_iters, config.cg_tol)?;
    let gx: f64 = g.iter().zip(&cg.x).map(|(a, b)| a * b).sum();
    let degenerate = !(gx > 0.0);
    let scale = if degenerate {
        0.0
    } else {
        (config.step_size / (gx + TINY)).sqrt()
    };
    let delta = cg.x.iter().map(|x| scale * x).collect();
    Ok(NaturalStep {
        delta,
        gx,
        scale,
        cg_iterations: cg.iterations,
        cg_residual: cg.residual_norm,
        degenerate,
    })
}

/// Mean `KL(old || new)` of the action distributions over `obs`.
pub fn mean_kl<T: Real>(
    old: &DiagGaussianPolicy<T>,
    new: &DiagGaussianPolicy<T>,
    obs: &[T],
) -> f64 {
    let (d, m) = (old.obs_len(), old.act_len());
    let n = obs.len() / d;
    if n == 0 {
        return 0.0;
    }
    let (mut wo, mut wn) = (Workspace::new(), Workspace::new());
    let mut sum = 0.0;
    for chunk in obs.chunks(1024 * d) {
        let b = chunk.len() / d;
        let mo = old.mean_net().forward(chunk, b, &mut wo);
        let mn = new.mean_net().forward(chunk, b, &mut wn);
        for (i, (a, c)) in mo.iter().zip(mn.iter()).enumerate() {
            let (lo, ln) = (old.logstd()[i % m].as_f64(), new.logstd()[i % m].as_f64());
            let diff = a.as_f64() - c.as_f64();
            sum += ln - lo + ((2.0 * lo).exp() + diff * diff) / (2.0 * (2.0 * ln).exp()) - 0.5;
        }
    }
    sum / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    pub grad_norm: f64,
    pub step: NaturalStep,
    pub kl: f64,
}

/// Applies one natural gradient step to `policy` given per-sample
/// advantages (used as-is).
pub fn policy_step<T: Real>(
    policy: &mut DiagGaussianPolicy<T>,
    obs: &[T],
    actions: &[T],
    advantages: &[f64],
    config: &NpgConfig,
) -> Result<PolicyStep, NpgError> {
    let old = policy.clone();
    let (g, step) = {
        let mut fisher = FisherOperator::new(&old, obs, actions, config.damping)?;
        let g = fisher.gradient(advantages)?;
        let step = natural_step(|v, out| fisher.apply(v, out), &g, config)?;
        (g, step)
    };
    let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut kl = 0.0;
    if !step.degenerate {
        let mut p = old.params_f64();
        for (p, d) in p.iter_mut().zip(&step.delta) {
            *p += d;
        }
        policy.set_params_f64(&p)?;
        kl = mean_kl(&old, policy, obs);
    }
    Ok(PolicyStep {
        grad_norm,
        step,
        kl,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub grad_norm: f64,
    pub gx: f64,
    pub step_norm: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub degenerate: bool,
    pub kl: f64,
    pub value_loss_before: f64,
    pub value_loss_after: f64,
}

/// Full update on a sampled batch: advantages, policy step, then a value
/// refit on this batch's targets.
pub fn npg_step<T: Real, R: Rng + ?Sized>(
    policy: &mut DiagGaussianPolicy<T>,
    value: &mut Mlp<T>,
    batch: &TrajectoryBatch<T>,
    config: &NpgConfig,
    rng: &mut R,
) -> Result<StepReport, NpgError> {
    let mut adv = batch_advantages(batch, value, config.gamma, config.gae_lambda)?;
    if config.normalize_advantages {
        normalize(&mut adv.advantages);
    }
    let ps = policy_step(policy, &batch.obs, &batch.actions, &adv.advantages, config)?;
    let targets: Vec<T> = adv.targets.iter().map(|t| T::of(*t)).collect();
    let fit = value_fit(value, &batch.obs, &targets, &config.value, rng)?;
    Ok(StepReport {
        grad_norm: ps.grad_norm,
        gx: ps.step.gx,
        step_norm: ps.step.delta.iter().map(|v| v * v).sum::<f64>().sqrt(),
        cg_iterations: ps.step.cg_iterations,
        cg_residual: ps.step.cg_residual,
        degenerate: ps.step.degenerate,
        kl: ps.kl,
        value_loss_before: fit.initial_loss,
        value_loss_after: fit.final_loss,
    })
}
