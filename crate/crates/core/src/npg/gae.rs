use super::NpgError;
use crate::neural::{Mlp, Workspace};
use crate::sampler::TrajectoryBatch;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    /// `advantages + V(s_t)`, the value regression targets.
    pub targets: Vec<f64>,
}

/// GAE for one trajectory. `values` holds `V(s_0) .. V(s_{T-1})` followed by
/// the bootstrap value `V(s_T)`, which should be 0 if the trajectory
/// terminated.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<Advantages, NpgError> {
    let mut advantages = vec![0.0; rewards.len()];
    let mut targets = vec![0.0; rewards.len()];
    gae_into(
        rewards,
        values,
        gamma,
        lambda,
        &mut advantages,
        &mut targets,
    )?;
    Ok(Advantages {
        advantages,
        targets,
    })
}

pub fn gae_into(
    rewards: &[f64],
    values: &[f64],
    gamma: f64,
    lambda: f64,
    adv: &mut [f64],
    targets: &mut [f64],
) -> Result<(), NpgError> {
    let n = rewards.len();
    if values.len() != n + 1 {
        return Err(NpgError::LengthMismatch {
            what: "values (one per step plus bootstrap)",
            expected: n + 1,
            got: values.len(),
        });
    }
    for (what, got) in [("advantages", adv.len()), ("targets", targets.len())] {
        if got != n {
            return Err(NpgError::LengthMismatch {
                what,
                expected: n,
                got,
            });
        }
    }
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
        targets[t] = acc + values[t];
    }
    Ok(())
}

/// GAE over every trajectory of `batch` with `value` as the baseline.
/// Trajectories cut at the horizon bootstrap from `V(final_obs)`;
/// terminated ones from 0.
pub fn batch_advantages<T: Real>(
    batch: &TrajectoryBatch<T>,
    value: &Mlp<T>,
    gamma: f64,
    lambda: f64,
) -> Result<Advantages, NpgError> {
    let n = batch.total_steps();
    let d = batch.obs_len;
    if value.input_len() != d || value.output_len() != 1 {
        return Err(NpgError::LengthMismatch {
            what: "value network input",
            expected: d,
            got: value.input_len(),
        });
    }
    let mut ws = Workspace::new();
    let mut v = Vec::with_capacity(n);
    for chunk in batch.obs.chunks(1024 * d) {
        v.extend(
            value
                .forward(chunk, chunk.len() / d, &mut ws)
                .iter()
                .map(|x| x.as_f64()),
        );
    }
    let nt = batch.num_trajectories();
    let boot: Vec<f64> = if nt > 0 {
        value
            .forward(&batch.final_obs, nt, &mut ws)
            .iter()
            .map(|x| x.as_f64())
            .collect()
    } else {
        Vec::new()
    };
    let mut out = Advantages {
        advantages: vec![0.0; n],
        targets: vec![0.0; n],
    };
    let mut vals = Vec::new();
    let mut rews = Vec::new();
    for i in 0..nt {
        let r = batch.range(i);
        vals.clear();
        vals.extend_from_slice(&v[r.clone()]);
        vals.push(if batch.terminated(i) { 0.0 } else { boot[i] });
        rews.clear();
        rews.extend(batch.rewards[r.clone()].iter().map(|x| x.as_f64()));
        gae_into(
            &rews,
            &vals,
            gamma,
            lambda,
            &mut out.advantages[r.clone()],
            &mut out.targets[r],
        )?;
    }
    Ok(out)
}

/// Shifts and scales `x` in place to zero mean and unit variance. A
/// constant input becomes all zeros.
pub fn normalize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for v in x.iter_mut() {
        *v = (*v - mean) * scale;
    }
}
