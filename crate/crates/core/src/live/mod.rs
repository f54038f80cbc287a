//! Wall-clock control loop with live viewers.
//!
//! One thread owns the environment and steps it every `dt` under a
//! controller. Viewer clients connect over TCP, receive a `hello` message
//! and then the state stream, and may send perturbation, goal, reset and
//! pause commands, which are applied between control steps. Slow clients
//! only ever get the latest state.

mod control;
mod protocol;
mod server;

use serde::{Deserialize, Serialize};

pub use control::{Idle, LiveController, LiveLoop, PolicyController};
pub use protocol::{Command, Outbound};
pub use server::{serve, LoopStatus, Server};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LiveError {
    #[error("cannot bind {0}: {1}")]
    Bind(String, String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveConfig {
    /// Per-component clamp on perturbation impulses (velocity units).
    pub max_impulse: f64,
    /// Commands waiting for the loop, across all clients.
    pub command_queue: usize,
    /// Acks and errors waiting per client; the oldest is dropped when full.
    pub control_queue: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            max_impulse: 5.0,
            command_queue: 256,
            control_queue: 64,
        }
    }
}
