use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::mlp::{Mlp, Workspace};
use super::NeuralError;
use crate::scalar::Real;

/// Mini-batch Adam regression settings for the value function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueTrainerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for ValueTrainerConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueFitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: usize,
    pub updates: usize,
}

/// Mean squared error of a scalar-output network over a dataset.
pub fn mse<T: Real>(net: &Mlp<T>, obs: &[T], targets: &[T], ws: &mut Workspace<T>) -> f64 {
    let d = net.input_len();
    let n = targets.len();
    if n == 0 {
        return 0.0;
    }
    let chunk = 1024;
    let mut sum = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let y = net.forward(&obs[start * d..end * d], end - start, ws);
        for (p, t) in y.iter().zip(&targets[start..end]) {
            let e = p.as_f64() - t.as_f64();
            sum += e * e;
        }
        start = end;
    }
    sum / n as f64
}

/// Adds the gradient of the mean squared error over the given rows to `grad`.
pub fn mse_grad<T: Real>(
    net: &Mlp<T>,
    obs: &[T],
    targets: &[T],
    ws: &mut Workspace<T>,
    grad: &mut [f64],
) {
    let b = targets.len();
    let y = net.forward(obs, b, ws);
    let scale = 2.0 / b as f64;
    let dout: Vec<T> = y
        .iter()
        .zip(targets)
        .map(|(p, t)| T::of(scale * (p.as_f64() - t.as_f64())))
        .collect();
    net.backward(ws, &dout, Some(grad));
}

/// Fits a scalar-output network to `targets` by mini-batch Adam on the mean
/// squared error. Each call starts from fresh optimizer state.
pub fn value_fit<T: Real, R: Rng + ?Sized>(
    net: &mut Mlp<T>,
    obs: &[T],
    targets: &[T],
    config: &ValueTrainerConfig,
    rng: &mut R,
) -> Result<ValueFitReport, NeuralError> {
    let n = targets.len();
    if n == 0 {
        return Err(NeuralError::EmptyDataset);
    }
    if net.output_len() != 1 {
        return Err(NeuralError::LengthMismatch {
            what: "value network outputs",
            expected: 1,
            got: net.output_len(),
        });
    }
    let d = net.input_len();
    if obs.len() != n * d {
        return Err(NeuralError::LengthMismatch {
            what: "observations",
            expected: n * d,
            got: obs.len(),
        });
    }
    let bs = config.batch_size.max(1);
    let mut ws = Workspace::new();
    let initial_loss = mse(net, obs, targets, &mut ws);
    let mut adam = Adam::new(net.num_params(), config.adam);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; net.num_params()];
    let mut xb = Vec::with_capacity(bs * d);
    let mut yb = Vec::with_capacity(bs);
    let mut updates = 0;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for batch in order.chunks(bs) {
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(&obs[i * d..(i + 1) * d]);
                yb.push(targets[i]);
            }
            grad.fill(0.0);
            mse_grad(net, &xb, &yb, &mut ws, &mut grad);
            adam.step(net.params_mut(), &grad);
            updates += 1;
        }
    }
    let final_loss = mse(net, obs, targets, &mut ws);
    if !final_loss.is_finite() {
        return Err(NeuralError::NonFinite { iteration: updates });
    }
    Ok(ValueFitReport {
        initial_loss,
        final_loss,
        epochs: config.epochs,
        updates,
    })
}
