use serde::{Deserialize, Serialize};

/// Inbound client command, one JSON object per line or frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Command {
    /// Adds `impulse[k]` to `qvel[dims[k]]`, each component clamped to the
    /// server's `max_impulse`.
    Perturb {
        dims: Vec<usize>,
        impulse: Vec<f64>,
    },
    /// Moves the task goal.
    SetGoal {
        xy: Vec<f64>,
    },
    Reset,
    Pause,
    Resume,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Perturb { .. } => "perturb",
            Command::SetGoal { .. } => "setgoal",
            Command::Reset => "reset",
            Command::Pause => "pause",
            Command::Resume => "resume",
        }
    }
}

/// Outbound server message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Outbound {
    /// Sent once on connect.
    Hello {
        env: String,
        dt: f64,
        nq: usize,
        nv: usize,
        link_lengths: Vec<f64>,
        max_impulse: f64,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        goal: Option<[f64; 2]>,
    },
    State {
        tick: u64,
        time_s: f64,
        qpos: Vec<f64>,
        qvel: Vec<f64>,
        eval: f64,
        reward: f64,
        latency_s: f64,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        goal: Option<[f64; 2]>,
    },
    /// A command was applied; its effect shows in the state after `tick`.
    Ack {
        command: String,
        tick: u64,
    },
    Error {
        message: String,
    },
}

impl Outbound {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}
