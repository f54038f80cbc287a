//! Parameter checkpoints.
//!
//! A checkpoint is two files sharing a stem:
//!
//! * `<stem>.bin`: the flat parameter vector as consecutive IEEE-754 `f64`
//!   values in little-endian byte order, `8 * num_params` bytes, no header.
//! * `<stem>.json`: a sidecar describing how to interpret the vector.
//!
//! For an MLP, layer `l` occupies `(sizes[l] + 1) * sizes[l + 1]` values:
//! the weights input-major, then the biases. A policy appends its
//! `logstd` entries at `logstd_offset`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::policy::DiagGaussianPolicy;
use super::NeuralError;
use crate::scalar::Real;

pub const FORMAT: &str = "ergon-params";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Mlp,
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub kind: CheckpointKind,
    pub layer_sizes: Vec<usize>,
    pub activation: String,
    pub num_params: usize,
    pub logstd_offset: Option<usize>,
    pub dtype: String,
}

impl CheckpointMeta {
    fn new(
        kind: CheckpointKind,
        sizes: &[usize],
        num_params: usize,
        logstd_offset: Option<usize>,
    ) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            kind,
            layer_sizes: sizes.to_vec(),
            activation: "tanh".into(),
            num_params,
            logstd_offset,
            dtype: "f64-le".into(),
        }
    }

    fn expected_params(&self) -> usize {
        let mlp: usize = self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        match self.kind {
            CheckpointKind::Mlp => mlp,
            CheckpointKind::Policy => mlp + self.layer_sizes.last().copied().unwrap_or(0),
        }
    }
}

pub fn bin_path(stem: &Path) -> PathBuf {
    stem.with_extension("bin")
}

pub fn meta_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

fn io(path: &Path, e: std::io::Error) -> NeuralError {
    NeuralError::Checkpoint(format!("{}: {e}", path.display()))
}

pub fn write_raw(stem: &Path, meta: &CheckpointMeta, params: &[f64]) -> Result<(), NeuralError> {
    let mut bytes = Vec::with_capacity(params.len() * 8);
    for p in params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    let bin = bin_path(stem);
    fs::write(&bin, bytes).map_err(|e| io(&bin, e))?;
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    let side = meta_path(stem);
    fs::write(&side, json).map_err(|e| io(&side, e))
}

pub fn read_raw(stem: &Path) -> Result<(CheckpointMeta, Vec<f64>), NeuralError> {
    let side = meta_path(stem);
    let text = fs::read_to_string(&side).map_err(|e| io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)
        .map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", side.display())))?;
    if meta.format != FORMAT || meta.version != VERSION || meta.dtype != "f64-le" {
        return Err(NeuralError::Checkpoint(format!(
            "{}: unsupported format {} v{} ({})",
            side.display(),
            meta.format,
            meta.version,
            meta.dtype
        )));
    }
    if meta.layer_sizes.len() < 2 || meta.layer_sizes.contains(&0) {
        return Err(NeuralError::Checkpoint(format!(
            "{}: invalid layer sizes",
            side.display()
        )));
    }
    if meta.num_params != meta.expected_params() {
        return Err(NeuralError::Checkpoint(format!(
            "{}: num_params {} does not match layer sizes ({})",
            side.display(),
            meta.num_params,
            meta.expected_params()
        )));
    }
    let bin = bin_path(stem);
    let bytes = fs::read(&bin).map_err(|e| io(&bin, e))?;
    if bytes.len() != meta.num_params * 8 {
        return Err(NeuralError::Checkpoint(format!(
            "{}: expected {} bytes, found {}",
            bin.display(),
            meta.num_params * 8,
            bytes.len()
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((meta, params))
}

impl<T: Real> Mlp<T> {
    pub fn save(&self, stem: &Path) -> Result<(), NeuralError> {
        let meta = CheckpointMeta::new(CheckpointKind::Mlp, self.sizes(), self.num_params(), None);
        write_raw(stem, &meta, &self.params_f64())
    }

    pub fn load(stem: &Path) -> Result<Self, NeuralError> {
        let (meta, params) = read_raw(stem)?;
        if meta.kind != CheckpointKind::Mlp {
            return Err(NeuralError::Checkpoint(format!(
                "{}: not an MLP checkpoint",
                stem.display()
            )));
        }
        let mut net = Self::zeros(&meta.layer_sizes);
        net.set_params_f64(&params)?;
        Ok(net)
    }
}

impl<T: Real> DiagGaussianPolicy<T> {
    pub fn save(&self, stem: &Path) -> Result<(), NeuralError> {
        let meta = CheckpointMeta::new(
            CheckpointKind::Policy,
            self.mean_net().sizes(),
            self.num_params(),
            Some(self.logstd_offset()),
        );
        write_raw(stem, &meta, &self.params_f64())
    }

    pub fn load(stem: &Path) -> Result<Self, NeuralError> {
        let (meta, params) = read_raw(stem)?;
        if meta.kind != CheckpointKind::Policy {
            return Err(NeuralError::Checkpoint(format!(
                "{}: not a policy checkpoint",
                stem.display()
            )));
        }
        let mean = Mlp::zeros(&meta.layer_sizes);
        if meta.logstd_offset != Some(mean.num_params()) {
            return Err(NeuralError::Checkpoint(format!(
                "{}: bad logstd_offset",
                stem.display()
            )));
        }
        let act = mean.output_len();
        let mut policy = Self::from_parts(mean, vec![T::zero(); act]);
        policy.set_params_f64(&params)?;
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn policy_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("policy");
        let p = DiagGaussianPolicy::<f64>::new(5, &[8, 8], 2, &mut seed::rng(3));
        p.save(&stem).unwrap();
        let q = DiagGaussianPolicy::<f64>::load(&stem).unwrap();
        assert_eq!(p, q);
        let bytes = fs::read(bin_path(&stem)).unwrap();
        assert_eq!(bytes.len(), 8 * p.num_params());
        let last = f64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        assert_eq!(last, -0.5);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("v");
        let net = Mlp::<f64>::zeros(&[2, 3, 1]);
        net.save(&stem).unwrap();
        let bin = bin_path(&stem);
        let mut bytes = fs::read(&bin).unwrap();
        bytes.pop();
        fs::write(&bin, bytes).unwrap();
        assert!(matches!(
            Mlp::<f64>::load(&stem),
            Err(NeuralError::Checkpoint(_))
        ));
        assert!(matches!(
            DiagGaussianPolicy::<f64>::load(&stem),
            Err(NeuralError::Checkpoint(_))
        ));
    }
}
