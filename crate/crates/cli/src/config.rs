use std::path::{Path, PathBuf};

use ergon::live::LiveConfig;
use ergon::mppi::MppiConfig;
use ergon::npg::NpgConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Top-level experiment file. Every section is optional; command-line
/// flags override the corresponding fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    /// Model constants overriding the environment defaults.
    pub env_config: Option<Value>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub npg: NpgConfig,
    /// `default`, `sawyer` or `hand`; fields in `mppi` are applied on top.
    pub mppi_preset: Option<String>,
    pub mppi: Option<Value>,
    pub mpc: MpcConfig,
    pub bench: BenchConfig,
    pub serve: ServeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "cartpole".into(),
            env_config: None,
            seed: 0,
            out: None,
            workers: 1,
            npg: NpgConfig::default(),
            mppi_preset: None,
            mppi: None,
            mpc: MpcConfig::default(),
            bench: BenchConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub episodes: usize,
    pub steps: usize,
    /// Defaults to the task's own radius.
    pub success_radius: Option<f64>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            episodes: 40,
            steps: ergon::envs::EPISODE_LEN,
            success_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub workers: Vec<usize>,
    pub seconds: f64,
    pub hmax: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            workers: vec![1, 2, 4],
            seconds: 2.0,
            hmax: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Mppi,
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    pub controller: ControllerKind,
    /// Policy checkpoint (directory or file stem) for `controller: checkpoint`.
    pub checkpoint: Option<PathBuf>,
    pub live: LiveConfig,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8765".into(),
            controller: ControllerKind::Mppi,
            checkpoint: None,
            live: LiveConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// The MPPI settings after applying the preset and overrides, and
    /// normalizing the smoothing coefficients.
    pub fn mppi_config(&self, strict: bool) -> Result<MppiConfig, CliError> {
        let base = match &self.mppi_preset {
            None => MppiConfig::default(),
            Some(name) => MppiConfig::preset(name).ok_or_else(|| CliError::Usage(format!("unknown mppi preset '{name}' (default, sawyer, hand)")))?,
        };
        let mut v = serde_json::to_value(&base).expect("config serializes");
        if let Some(over) = &self.mppi {
            let Value::Object(over) = over else {
                return Err(CliError::Usage("mppi must be a JSON object".into()));
            };
            let obj = v.as_object_mut().expect("config is an object");
            for (k, x) in over {
                obj.insert(k.clone(), x.clone());
            }
        }
        let cfg: MppiConfig = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("mppi: {e}")))?;
        cfg.validated(strict).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// A copy with environment constants filled in, so the file alone
    /// reproduces the run. With `mppi_strict` set the MPPI preset is also
    /// expanded into its resolved fields.
    pub fn snapshot(&self, mppi_strict: Option<bool>) -> Result<Self, CliError> {
        let env = crate::commands::make_env(self)?;
        let mut s = self.clone();
        s.env_config = Some(env.config_json());
        if let Some(strict) = mppi_strict {
            s.mppi = Some(serde_json::to_value(self.mppi_config(strict)?).expect("config serializes"));
            s.mppi_preset = None;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"env": "pendulum", "sed": 1}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"npg": {"gama": 0.9}}"#).is_err());
        let c: ExperimentConfig = serde_json::from_str(r#"{"env": "pendulum", "npg": {"iterations": 3}}"#).unwrap();
        assert_eq!((c.env.as_str(), c.npg.iterations, c.npg.samples), ("pendulum", 3, 10_000));
    }

    #[test]
    fn mppi_preset_with_overrides() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"mppi_preset": "sawyer", "mppi": {"K": 12}}"#).unwrap();
        let m = c.mppi_config(false).unwrap();
        assert_eq!((m.horizon, m.samples, m.temperature), (16, 12, 5.0));
        let bad: ExperimentConfig = serde_json::from_str(r#"{"mppi": {"samples_k": 12}}"#).unwrap();
        assert!(bad.mppi_config(false).is_err());
        assert!(c.mppi_config(true).is_err(), "beta sum above 1 is rejected when strict");
    }

    #[test]
    fn snapshot_round_trips() {
        let c = ExperimentConfig {
            env: "reacher".into(),
            mppi_preset: Some("hand".into()),
            ..Default::default()
        };
        let s = c.snapshot(Some(false)).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.mppi_config(false).unwrap(), c.mppi_config(false).unwrap());
    }
}
