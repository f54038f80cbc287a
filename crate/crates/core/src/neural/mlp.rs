use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::scalar::{axpy, dot, Real};

/// Weight initialization: `W ~ U(-g / sqrt(fan_in), g / sqrt(fan_in))`,
/// biases zero. `output_gain` applies to the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub hidden_gain: f64,
    pub output_gain: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            hidden_gain: 1.0,
            output_gain: 1.0,
        }
    }
}

impl InitConfig {
    /// Small final layer so a fresh policy outputs near-zero means.
    pub fn policy() -> Self {
        Self {
            hidden_gain: 1.0,
            output_gain: 0.01,
        }
    }
}

/// Fully connected network with `tanh` hidden layers and a linear output.
///
/// Parameters live in one flat vector. Layer `l` maps `n_in = sizes[l]` to
/// `n_out = sizes[l + 1]`; its weights are stored input-major
/// (`W[k * n_out + j]` connects input `k` to output `j`) and are followed by
/// its `n_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
    offsets: Vec<usize>,
}

/// Per-layer activations and backpropagated errors for a batch.
#[derive(Debug, Clone, Default)]
pub struct Workspace<T> {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<T>>,
    /// `deltas[l + 1]` is d(loss)/d(pre-activation) of layer `l`.
    deltas: Vec<Vec<T>>,
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Self {
            batch: 0,
            acts: Vec::new(),
            deltas: Vec::new(),
        }
    }

    fn prepare(&mut self, sizes: &[usize], batch: usize) {
        if self.acts.len() != sizes.len() {
            self.acts = vec![Vec::new(); sizes.len()];
            self.deltas = vec![Vec::new(); sizes.len()];
        }
        for (l, &n) in sizes.iter().enumerate() {
            self.acts[l].resize(batch * n, T::zero());
            self.deltas[l].resize(batch * n, T::zero());
        }
        self.batch = batch;
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Activations entering layer `l` (`l = 0` is the network input).
    pub fn activations(&self, l: usize) -> &[T] {
        &self.acts[l]
    }

    /// Errors at the pre-activation output of layer `l`.
    pub fn deltas(&self, l: usize) -> &[T] {
        &self.deltas[l + 1]
    }

    pub fn output(&self) -> &[T] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

impl<T: Real> Mlp<T> {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        assert!(sizes.iter().all(|&n| n > 0), "layer sizes must be positive");
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut n = 0;
        for w in sizes.windows(2) {
            offsets.push(n);
            n += (w[0] + 1) * w[1];
        }
        offsets.push(n);
        Self {
            sizes: sizes.to_vec(),
            params: vec![T::zero(); n],
            offsets,
        }
    }

    pub fn new<R: Rng + ?Sized>(sizes: &[usize], init: InitConfig, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let last = net.num_layers() - 1;
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let gain = if l == last {
                init.output_gain
            } else {
                init.hidden_gain
            };
            let bound = gain / (n_in as f64).sqrt();
            let off = net.offsets[l];
            if bound > 0.0 {
                let dist = Uniform::new_inclusive(-bound, bound);
                for w in &mut net.params[off..off + n_in * n_out] {
                    *w = T::of(dist.sample(rng));
                }
            }
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn params_f64(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.as_f64()).collect()
    }

    pub fn set_params_f64(&mut self, p: &[f64]) -> Result<(), NeuralError> {
        if p.len() != self.params.len() {
            return Err(NeuralError::LengthMismatch {
                what: "parameters",
                expected: self.params.len(),
                got: p.len(),
            });
        }
        for (d, s) in self.params.iter_mut().zip(p) {
            *d = T::of(*s);
        }
        Ok(())
    }

    /// Offset of layer `l`'s weights in the flat parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    /// Weights (input-major) and biases of layer `l`.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        let (w, rest) = self.params[off..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    /// Forward pass over `batch` row-major inputs; returns the outputs.
    pub fn forward<'w>(&self, x: &[T], batch: usize, ws: &'w mut Workspace<T>) -> &'w [T] {
        debug_assert_eq!(x.len(), batch * self.input_len());
        ws.prepare(&self.sizes, batch);
        ws.acts[0].copy_from_slice(x);
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, bias) = self.layer(l);
            let (lo, hi) = ws.acts.split_at_mut(l + 1);
            let (input, out) = (&lo[l], &mut hi[0]);
            for b in 0..batch {
                let row = &mut out[b * n_out..(b + 1) * n_out];
                row.copy_from_slice(bias);
                for (k, xk) in input[b * n_in..(b + 1) * n_in].iter().enumerate() {
                    if *xk != T::zero() {
                        axpy(*xk, &w[k * n_out..(k + 1) * n_out], row);
                    }
                }
                if l != last {
                    for z in row.iter_mut() {
                        *z = z.tanh();
                    }
                }
            }
        }
        ws.output()
    }

    /// Convenience single-sample forward pass.
    pub fn predict(&self, x: &[T]) -> Vec<T> {
        let mut ws = Workspace::new();
        self.forward(x, 1, &mut ws).to_vec()
    }

    /// Backpropagates output cotangents `dout` (batch x outputs) through the
    /// activations left in `ws` by [`forward`](Self::forward), leaving
    /// per-sample errors in `ws` and, if `grad` is given, adding the batch
    /// sum of parameter gradients to it.
    pub fn backward(&self, ws: &mut Workspace<T>, dout: &[T], mut grad: Option<&mut [f64]>) {
        let batch = ws.batch;
        let nl = self.num_layers();
        ws.deltas[nl].copy_from_slice(dout);
        for l in (0..nl).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, _) = self.layer(l);
            if let Some(g) = grad.as_deref_mut() {
                let off = self.offsets[l];
                let (gw, gb) = g[off..off + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
                let (input, delta) = (&ws.acts[l], &ws.deltas[l + 1]);
                for b in 0..batch {
                    let d = &delta[b * n_out..(b + 1) * n_out];
                    for (k, a) in input[b * n_in..(b + 1) * n_in].iter().enumerate() {
                        if *a == T::zero() {
                            continue;
                        }
                        let a = a.as_f64();
                        for (gj, dj) in gw[k * n_out..(k + 1) * n_out].iter_mut().zip(d) {
                            *gj += a * dj.as_f64();
                        }
                    }
                    for (gj, dj) in gb.iter_mut().zip(d) {
                        *gj += dj.as_f64();
                    }
                }
            }
            if l > 0 {
                let (lo, hi) = ws.deltas.split_at_mut(l + 1);
                let (prev, delta) = (&mut lo[l], &hi[0]);
                let act = &ws.acts[l];
                for b in 0..batch {
                    let d = &delta[b * n_out..(b + 1) * n_out];
                    for k in 0..n_in {
                        let a = act[b * n_in + k];
                        prev[b * n_in + k] =
                            dot(d, &w[k * n_out..(k + 1) * n_out]) * (T::one() - a * a);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn parameter_count_formula() {
        let net = Mlp::<f64>::zeros(&[5, 64, 64, 1]);
        assert_eq!(net.num_params(), 6 * 64 + 65 * 64 + 65);
        let net = Mlp::<f32>::zeros(&[3, 7, 2]);
        assert_eq!(net.num_params(), 4 * 7 + 8 * 2);
    }

    #[test]
    fn forward_matches_hand_computation() {
        let mut net = Mlp::<f64>::zeros(&[2, 2, 1]);
        // W0 (input-major), b0, W1, b1
        net.set_params_f64(&[0.5, -1.0, 0.25, 2.0, 0.1, -0.2, 1.5, -0.5, 0.3])
            .unwrap();
        let x = [1.0, -2.0];
        let h0 = (0.5 * 1.0 + 0.25 * -2.0 + 0.1f64).tanh();
        let h1 = (-1.0 * 1.0 + 2.0 * -2.0 - 0.2f64).tanh();
        let y = 1.5 * h0 - 0.5 * h1 + 0.3;
        assert!((net.predict(&x)[0] - y).abs() < 1e-15);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let net = Mlp::<f64>::new(&[16, 8, 2], InitConfig::policy(), &mut seed::rng(0));
        let (w0, b0) = net.layer(0);
        assert!(w0.iter().all(|w| w.abs() <= 0.25));
        assert!(b0.iter().all(|b| *b == 0.0));
        let (w1, _) = net.layer(1);
        let bound = 0.01 / 8f64.sqrt();
        assert!(w1.iter().all(|w| w.abs() <= bound));
        assert!(w1.iter().any(|w| *w != 0.0));
    }

    #[test]
    fn outputs_are_finite() {
        let net = Mlp::<f64>::new(&[3, 32, 32, 2], InitConfig::default(), &mut seed::rng(1));
        let y = net.predict(&[1e6, -1e6, 3.0]);
        assert!(y.iter().all(|v| v.is_finite()));
    }
}
