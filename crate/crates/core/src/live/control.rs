use std::time::Instant;

use super::protocol::{Command, Outbound};
use super::LiveConfig;
use crate::envcore::Environment;
use crate::envs::BuiltinEnv;
use crate::mppi::Mppi;
use crate::neural::{DiagGaussianPolicy, Workspace};

/// Something that picks an action from the live environment's current
/// state.
pub trait LiveController: Send {
    fn act(&mut self, env: &BuiltinEnv<f64>, action: &mut [f64]) -> Result<(), String>;
    /// Called after the environment is reset.
    fn reset(&mut self);
}

impl LiveController for Mppi<f64, BuiltinEnv<f64>> {
    fn act(&mut self, env: &BuiltinEnv<f64>, action: &mut [f64]) -> Result<(), String> {
        Mppi::act(self, env, action)
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    fn reset(&mut self) {
        Mppi::reset(self)
    }
}

/// Mean action of a trained policy.
pub struct PolicyController {
    policy: DiagGaussianPolicy<f64>,
    ws: Workspace<f64>,
    obs: Vec<f64>,
}

impl PolicyController {
    pub fn new(policy: DiagGaussianPolicy<f64>) -> Self {
        let obs = vec![0.0; policy.obs_len()];
        Self {
            policy,
            ws: Workspace::new(),
            obs,
        }
    }
}

impl LiveController for PolicyController {
    fn act(&mut self, env: &BuiltinEnv<f64>, action: &mut [f64]) -> Result<(), String> {
        if env.obs_space().len() != self.policy.obs_len() || action.len() != self.policy.act_len() {
            return Err("policy does not match the environment".into());
        }
        env.get_obs_into(&mut self.obs).map_err(|e| e.to_string())?;
        self.policy.mean_into(&self.obs, &mut self.ws, action);
        Ok(())
    }

    fn reset(&mut self) {}
}

/// Zero action every step.
pub struct Idle;

impl LiveController for Idle {
    fn act(&mut self, _env: &BuiltinEnv<f64>, action: &mut [f64]) -> Result<(), String> {
        action.fill(0.0);
        Ok(())
    }

    fn reset(&mut self) {}
}

/// The control loop without timing or I/O: commands are applied between
/// steps and each step yields the state message to broadcast.
pub struct LiveLoop<C> {
    env: BuiltinEnv<f64>,
    controller: C,
    config: LiveConfig,
    tick: u64,
    paused: bool,
    /// Broadcast the freshly reset state on the next step instead of
    /// stepping.
    show_reset: bool,
    state: Vec<f64>,
    action: Vec<f64>,
}

impl<C: LiveController> LiveLoop<C> {
    pub fn new(env: BuiltinEnv<f64>, controller: C, config: LiveConfig) -> Self {
        let state = vec![0.0; env.layout().len()];
        let action = vec![0.0; env.action_space().len()];
        Self {
            env,
            controller,
            config,
            tick: 0,
            paused: false,
            show_reset: false,
            state,
            action,
        }
    }

    pub fn env(&self) -> &BuiltinEnv<f64> {
        &self.env
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    /// Tick of the last state message (0 before the first).
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn hello(&self) -> Outbound {
        let l = self.env.layout();
        Outbound::Hello {
            env: self.env.name().to_string(),
            dt: self.env.dt(),
            nq: l.nq,
            nv: l.nv,
            link_lengths: self.env.link_lengths(),
            max_impulse: self.config.max_impulse,
            goal: self.env.goal(),
        }
    }

    pub fn apply(&mut self, cmd: &Command) -> Result<(), String> {
        match cmd {
            Command::Perturb { dims, impulse } => self.perturb(dims, impulse),
            Command::SetGoal { xy } => self.set_goal(xy),
            Command::Reset => {
                self.env.reset();
                self.controller.reset();
                self.show_reset = true;
                Ok(())
            }
            Command::Pause => {
                self.paused = true;
                Ok(())
            }
            Command::Resume => {
                self.paused = false;
                Ok(())
            }
        }
    }

    fn perturb(&mut self, dims: &[usize], impulse: &[f64]) -> Result<(), String> {
        let l = self.env.layout();
        if dims.len() != impulse.len() {
            return Err(format!(
                "perturb: {} dims but {} impulse components",
                dims.len(),
                impulse.len()
            ));
        }
        if let Some(d) = dims.iter().find(|d| **d >= l.nv) {
            return Err(format!("perturb: dim {d} out of range (nv = {})", l.nv));
        }
        if impulse.iter().any(|v| !v.is_finite()) {
            return Err("perturb: impulse must be finite".into());
        }
        self.env
            .get_state_into(&mut self.state)
            .map_err(|e| e.to_string())?;
        let m = self.config.max_impulse;
        for (d, v) in dims.iter().zip(impulse) {
            self.state[l.nq + d] += v.clamp(-m, m);
        }
        self.env.set_state(&self.state).map_err(|e| e.to_string())
    }

    fn set_goal(&mut self, xy: &[f64]) -> Result<(), String> {
        let l = self.env.layout();
        if l.ntask != xy.len() || l.ntask == 0 {
            return Err(format!(
                "setgoal: {} takes a goal of length {}, got {}",
                self.env.name(),
                l.ntask,
                xy.len()
            ));
        }
        if xy.iter().any(|v| !v.is_finite()) {
            return Err("setgoal: goal must be finite".into());
        }
        self.env
            .get_state_into(&mut self.state)
            .map_err(|e| e.to_string())?;
        let off = l.time_index() + 1;
        self.state[off..off + xy.len()].copy_from_slice(xy);
        self.env.set_state(&self.state).map_err(|e| e.to_string())
    }

    /// Eval metric of the current state under a zero action.
    fn reset_eval(&mut self) -> Result<f64, crate::envcore::EnvError> {
        let mut obs = vec![0.0; self.env.obs_space().len()];
        self.env.get_obs_into(&mut obs)?;
        self.env.get_state_into(&mut self.state)?;
        self.action.fill(0.0);
        Ok(self.env.eval(&self.state, &self.action, &obs))
    }

    fn message(&mut self, eval: f64, reward: f64, latency_s: f64) -> Outbound {
        self.tick += 1;
        let l = self.env.layout();
        self.env
            .get_state_into(&mut self.state)
            .expect("state buffer sized from layout");
        Outbound::State {
            tick: self.tick,
            time_s: self.env.time(),
            qpos: l.qpos(&self.state).to_vec(),
            qvel: l.qvel(&self.state).to_vec(),
            eval,
            reward,
            latency_s,
            goal: self.env.goal(),
        }
    }

    /// One control step. Returns `None` while paused. A controller or
    /// environment failure pauses the loop and is returned as the error.
    pub fn step(&mut self) -> Result<Option<Outbound>, String> {
        if self.show_reset {
            self.show_reset = false;
            let eval = self.reset_eval().map_err(|e| e.to_string())?;
            return Ok(Some(self.message(eval, 0.0, 0.0)));
        }
        if self.paused {
            return Ok(None);
        }
        if self.env.is_done() {
            self.env.reset();
            self.controller.reset();
        }
        let t0 = Instant::now();
        let r = self.controller.act(&self.env, &mut self.action);
        let latency = t0.elapsed().as_secs_f64();
        let outcome = r.and_then(|_| self.env.step(&self.action).map_err(|e| e.to_string()));
        match outcome {
            Ok(s) => Ok(Some(self.message(s.eval, s.reward, latency))),
            Err(e) => {
                self.paused = true;
                Err(format!("controller failed, loop paused: {e}"))
            }
        }
    }
}
