use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{InitConfig, Mlp, Workspace};
use super::NeuralError;
use crate::scalar::Real;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Initial per-dimension log standard deviation.
pub const INIT_LOGSTD: f64 = -0.5;

/// Gaussian policy with an MLP mean and a state-independent diagonal
/// log standard deviation.
///
/// The flat parameter vector is the mean network's parameters followed by
/// the `logstd` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussianPolicy<T> {
    mean: Mlp<T>,
    logstd: Vec<T>,
}

impl<T: Real> DiagGaussianPolicy<T> {
    pub fn new<R: Rng + ?Sized>(
        obs_len: usize,
        hidden: &[usize],
        act_len: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_len);
        sizes.extend_from_slice(hidden);
        sizes.push(act_len);
        Self::from_parts(
            Mlp::new(&sizes, InitConfig::policy(), rng),
            vec![T::of(INIT_LOGSTD); act_len],
        )
    }

    pub fn from_parts(mean: Mlp<T>, logstd: Vec<T>) -> Self {
        assert_eq!(
            mean.output_len(),
            logstd.len(),
            "logstd length must match action length"
        );
        Self { mean, logstd }
    }

    pub fn mean_net(&self) -> &Mlp<T> {
        &self.mean
    }

    pub fn logstd(&self) -> &[T] {
        &self.logstd
    }

    pub fn obs_len(&self) -> usize {
        self.mean.input_len()
    }

    pub fn act_len(&self) -> usize {
        self.logstd.len()
    }

    pub fn num_params(&self) -> usize {
        self.mean.num_params() + self.logstd.len()
    }

    /// Index of the first `logstd` entry in the flat parameter vector.
    pub fn logstd_offset(&self) -> usize {
        self.mean.num_params()
    }

    pub fn params_f64(&self) -> Vec<f64> {
        let mut p = self.mean.params_f64();
        p.extend(self.logstd.iter().map(|v| v.as_f64()));
        p
    }

    pub fn set_params_f64(&mut self, p: &[f64]) -> Result<(), NeuralError> {
        if p.len() != self.num_params() {
            return Err(NeuralError::LengthMismatch {
                what: "policy parameters",
                expected: self.num_params(),
                got: p.len(),
            });
        }
        let (m, s) = p.split_at(self.logstd_offset());
        self.mean.set_params_f64(m)?;
        for (d, v) in self.logstd.iter_mut().zip(s) {
            *d = T::of(*v);
        }
        Ok(())
    }

    /// Writes the mean action for `obs` into `out`.
    pub fn mean_into(&self, obs: &[T], ws: &mut Workspace<T>, out: &mut [T]) {
        out.copy_from_slice(self.mean.forward(obs, 1, ws));
    }

    /// Draws `mean(obs) + exp(logstd) * z` with `z ~ N(0, I)` into `out`.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        obs: &[T],
        ws: &mut Workspace<T>,
        rng: &mut R,
        out: &mut [T],
    ) {
        let mu = self.mean.forward(obs, 1, ws);
        for ((o, m), ls) in out.iter_mut().zip(mu).zip(&self.logstd) {
            let z: f64 = rng.sample(StandardNormal);
            *o = *m + ls.exp() * T::of(z);
        }
    }

    pub fn log_prob(&self, obs: &[T], action: &[T], ws: &mut Workspace<T>) -> f64 {
        let mu = self.mean.forward(obs, 1, ws);
        let mut lp = 0.0;
        for ((a, m), ls) in action.iter().zip(mu).zip(&self.logstd) {
            let ls = ls.as_f64();
            let z = (a.as_f64() - m.as_f64()) * (-ls).exp();
            lp += -0.5 * z * z - ls - HALF_LN_2PI;
        }
        lp
    }

    /// Gradient of `log_prob(obs, action)` with respect to every parameter.
    pub fn grad_log_prob(&self, obs: &[T], action: &[T]) -> Vec<f64> {
        let mut ws = Workspace::new();
        let mut g = vec![0.0; self.num_params()];
        let mu = self.mean.forward(obs, 1, &mut ws).to_vec();
        let mut dmu = vec![T::zero(); self.act_len()];
        let off = self.logstd_offset();
        for d in 0..self.act_len() {
            let ls = self.logstd[d].as_f64();
            let diff = action[d].as_f64() - mu[d].as_f64();
            let inv_var = (-2.0 * ls).exp();
            dmu[d] = T::of(diff * inv_var);
            g[off + d] = diff * diff * inv_var - 1.0;
        }
        self.mean.backward(&mut ws, &dmu, Some(&mut g[..off]));
        g
    }
}

/// Per-sample score vectors `g_i = d log pi(a_i | o_i) / d theta` for a batch,
/// kept in factored form so products with the score matrix never build it.
///
/// [`jvp`](Self::jvp) returns `G v` and [`vjp`](Self::vjp) returns `G^T w`,
/// so the empirical Fisher is `F v = vjp(jvp(v)) / N`.
pub struct ScoreBatch<'p, T: Real> {
    policy: &'p DiagGaussianPolicy<T>,
    ws: Workspace<T>,
    n: usize,
    /// `d log pi / d logstd`, row-major `n x act_len`.
    ls_score: Vec<f64>,
    row: Vec<f64>,
}

impl<'p, T: Real> ScoreBatch<'p, T> {
    pub fn new(
        policy: &'p DiagGaussianPolicy<T>,
        obs: &[T],
        actions: &[T],
    ) -> Result<Self, NeuralError> {
        let (dobs, dact) = (policy.obs_len(), policy.act_len());
        let n = actions.len() / dact.max(1);
        if actions.len() != n * dact {
            return Err(NeuralError::LengthMismatch {
                what: "actions",
                expected: n * dact,
                got: actions.len(),
            });
        }
        if obs.len() != n * dobs {
            return Err(NeuralError::LengthMismatch {
                what: "observations",
                expected: n * dobs,
                got: obs.len(),
            });
        }
        let mut ws = Workspace::new();
        let mu = policy.mean.forward(obs, n, &mut ws).to_vec();
        let mut dmu = vec![T::zero(); n * dact];
        let mut ls_score = vec![0.0; n * dact];
        for i in 0..n * dact {
            let ls = policy.logstd[i % dact].as_f64();
            let diff = actions[i].as_f64() - mu[i].as_f64();
            let inv_var = (-2.0 * ls).exp();
            dmu[i] = T::of(diff * inv_var);
            ls_score[i] = diff * diff * inv_var - 1.0;
        }
        policy.mean.backward(&mut ws, &dmu, None);
        let widest = policy.mean.sizes().iter().copied().max().unwrap_or(0);
        Ok(Self {
            policy,
            ws,
            n,
            ls_score,
            row: vec![0.0; widest],
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_params(&self) -> usize {
        self.policy.num_params()
    }

    /// `out[i] = g_i . v`.
    pub fn jvp(&mut self, v: &[f64], out: &mut [f64]) {
        let net = &self.policy.mean;
        let dact = self.policy.act_len();
        out[..self.n].fill(0.0);
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (net.sizes()[l], net.sizes()[l + 1]);
            let off = net.layer_offset(l);
            let (vw, vb) = v[off..off + (n_in + 1) * n_out].split_at(n_in * n_out);
            let (acts, deltas) = (self.ws.activations(l), self.ws.deltas(l));
            let u = &mut self.row[..n_out];
            for (i, o) in out[..self.n].iter_mut().enumerate() {
                u.copy_from_slice(vb);
                for (k, a) in acts[i * n_in..(i + 1) * n_in].iter().enumerate() {
                    let a = a.as_f64();
                    if a != 0.0 {
                        axpy_f64(a, &vw[k * n_out..(k + 1) * n_out], u);
                    }
                }
                *o += deltas[i * n_out..(i + 1) * n_out]
                    .iter()
                    .zip(u.iter())
                    .map(|(d, u)| d.as_f64() * u)
                    .sum::<f64>();
            }
        }
        let vls = &v[self.policy.logstd_offset()..];
        for (i, o) in out[..self.n].iter_mut().enumerate() {
            *o += self.ls_score[i * dact..(i + 1) * dact]
                .iter()
                .zip(vls)
                .map(|(s, v)| s * v)
                .sum::<f64>();
        }
    }

    /// `out += sum_i w_i g_i`.
    pub fn vjp(&mut self, w: &[f64], out: &mut [f64]) {
        let net = &self.policy.mean;
        let dact = self.policy.act_len();
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (net.sizes()[l], net.sizes()[l + 1]);
            let off = net.layer_offset(l);
            let (gw, gb) = out[off..off + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
            let (acts, deltas) = (self.ws.activations(l), self.ws.deltas(l));
            let d = &mut self.row[..n_out];
            for (i, wi) in w[..self.n].iter().enumerate() {
                if *wi == 0.0 {
                    continue;
                }
                for (dj, s) in d.iter_mut().zip(&deltas[i * n_out..(i + 1) * n_out]) {
                    *dj = wi * s.as_f64();
                }
                for (gj, dj) in gb.iter_mut().zip(d.iter()) {
                    *gj += dj;
                }
                for (k, a) in acts[i * n_in..(i + 1) * n_in].iter().enumerate() {
                    let a = a.as_f64();
                    if a != 0.0 {
                        axpy_f64(a, d, &mut gw[k * n_out..(k + 1) * n_out]);
                    }
                }
            }
        }
        let gls = &mut out[self.policy.logstd_offset()..];
        for (i, wi) in w[..self.n].iter().enumerate() {
            for (g, s) in gls.iter_mut().zip(&self.ls_score[i * dact..(i + 1) * dact]) {
                *g += wi * s;
            }
        }
    }
}

#[inline]
fn axpy_f64(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn score_at_the_mean() {
        let p = DiagGaussianPolicy::<f64>::new(3, &[8, 8], 2, &mut seed::rng(4));
        let obs = [0.3, -0.2, 0.9];
        let mu = p.mean_net().predict(&obs);
        let g = p.grad_log_prob(&obs, &mu);
        let off = p.logstd_offset();
        assert!(g[..off].iter().all(|v| v.abs() < 1e-14));
        assert_eq!(&g[off..], &[-1.0, -1.0]);
    }

    #[test]
    fn zero_input_annihilates_first_layer_gradient() {
        let p = DiagGaussianPolicy::<f64>::new(4, &[6], 2, &mut seed::rng(5));
        let obs = [0.0; 4];
        let mu = p.mean_net().predict(&obs);
        assert!(mu.iter().all(|m| *m == 0.0));
        let g = p.grad_log_prob(&obs, &[0.4, -0.1]);
        assert!(g[..4 * 6].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn own_sample_has_finite_log_prob_and_is_seeded() {
        let p = DiagGaussianPolicy::<f32>::new(2, &[4], 3, &mut seed::rng(0));
        let mut ws = Workspace::new();
        let (mut a, mut b) = ([0f32; 3], [0f32; 3]);
        p.sample_into(&[0.1, 0.2], &mut ws, &mut seed::rng(9), &mut a);
        p.sample_into(&[0.1, 0.2], &mut ws, &mut seed::rng(9), &mut b);
        assert_eq!(a, b);
        assert!(p.log_prob(&[0.1, 0.2], &a, &mut ws).is_finite());
    }

    #[test]
    fn score_batch_rows_match_single_gradients() {
        let p = DiagGaussianPolicy::<f64>::new(3, &[5, 4], 2, &mut seed::rng(11));
        let obs = [0.1, 0.5, -0.3, 1.0, -1.0, 0.2];
        let act = [0.2, -0.4, 0.0, 0.7];
        let mut sb = ScoreBatch::new(&p, &obs, &act).unwrap();
        let np = p.num_params();
        for i in 0..2 {
            let mut w = [0.0; 2];
            w[i] = 1.0;
            let mut row = vec![0.0; np];
            sb.vjp(&w, &mut row);
            let g = p.grad_log_prob(&obs[3 * i..3 * i + 3], &act[2 * i..2 * i + 2]);
            for (x, y) in row.iter().zip(&g) {
                assert!((x - y).abs() < 1e-12);
            }
            let mut s = [0.0; 2];
            sb.jvp(&g, &mut s);
            let gg: f64 = g.iter().map(|x| x * x).sum();
            assert!((s[i] - gg).abs() < 1e-10 * gg.max(1.0));
        }
    }
}
