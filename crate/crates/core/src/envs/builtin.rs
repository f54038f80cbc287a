use rand::RngCore;
use serde_json::Value;

use super::{
    CartPole, CartPoleConfig, ModelEnv, Pendulum, PendulumConfig, PointMass, PointMassConfig,
    Reacher, ReacherConfig,
};
use crate::envcore::{EnvError, Environment, Space, StateLayout, StepResult};
use crate::scalar::Real;

/// Names accepted by [`BuiltinEnv::from_name`].
pub const ENV_NAMES: [&str; 4] = ["cartpole", "pendulum", "pointmass", "reacher"];

/// Any of the builtin environments, selected at runtime by name.
#[derive(Debug, Clone)]
pub enum BuiltinEnv<T: Real> {
    CartPole(ModelEnv<T, CartPole<T>>),
    Pendulum(ModelEnv<T, Pendulum<T>>),
    PointMass(ModelEnv<T, PointMass<T>>),
    Reacher(ModelEnv<T, Reacher<T>>),
}

macro_rules! each {
    ($self:expr, $e:ident => $body:expr) => {
        match $self {
            BuiltinEnv::CartPole($e) => $body,
            BuiltinEnv::Pendulum($e) => $body,
            BuiltinEnv::PointMass($e) => $body,
            BuiltinEnv::Reacher($e) => $body,
        }
    };
}

fn parse<C: serde::de::DeserializeOwned + Default>(
    model: &'static str,
    overrides: Option<&Value>,
) -> Result<C, EnvError> {
    match overrides {
        None | Some(Value::Null) => Ok(C::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| EnvError::InvalidConfig {
            model,
            reason: e.to_string(),
        }),
    }
}

impl<T: Real> BuiltinEnv<T> {
    /// Builds an environment by name. `overrides` is a JSON object of model
    /// constants; missing keys take their defaults and unknown keys are
    /// rejected.
    pub fn from_name(name: &str, overrides: Option<&Value>) -> Result<Self, EnvError> {
        Ok(match name {
            "cartpole" => Self::CartPole(ModelEnv::new(CartPole::new(parse::<CartPoleConfig>(
                "cartpole", overrides,
            )?)?)),
            "pendulum" => Self::Pendulum(ModelEnv::new(Pendulum::new(parse::<PendulumConfig>(
                "pendulum", overrides,
            )?)?)),
            "pointmass" => Self::PointMass(ModelEnv::new(PointMass::new(
                parse::<PointMassConfig>("pointmass", overrides)?,
            )?)),
            "reacher" => Self::Reacher(ModelEnv::new(Reacher::new(parse::<ReacherConfig>(
                "reacher", overrides,
            )?)?)),
            other => return Err(EnvError::UnknownEnv(other.to_string())),
        })
    }

    /// Radius below which the evaluation metric counts as success, for
    /// goal-reaching tasks.
    pub fn success_radius(&self) -> Option<f64> {
        match self {
            Self::PointMass(e) => Some(e.model().success_radius()),
            Self::Reacher(e) => Some(e.model().success_radius()),
            _ => None,
        }
    }

    /// Link lengths of the reaching arm; a single pole for the pendulum
    /// and cart-pole.
    pub fn link_lengths(&self) -> Vec<f64> {
        match self {
            Self::CartPole(e) => vec![e.model().config().pole_length],
            Self::Pendulum(e) => vec![e.model().config().length],
            Self::PointMass(_) => Vec::new(),
            Self::Reacher(e) => e.model().config().link_lengths.clone(),
        }
    }

    /// Planar goal, if the task has one.
    pub fn goal(&self) -> Option<[T; 2]> {
        match self {
            Self::Reacher(e) => Some([e.task()[0], e.task()[1]]),
            Self::PointMass(e) if e.task().len() == 2 => Some([e.task()[0], e.task()[1]]),
            _ => None,
        }
    }

    /// Serialized model constants.
    pub fn config_json(&self) -> Value {
        let v = match self {
            Self::CartPole(e) => serde_json::to_value(e.model().config()),
            Self::Pendulum(e) => serde_json::to_value(e.model().config()),
            Self::PointMass(e) => serde_json::to_value(e.model().config()),
            Self::Reacher(e) => serde_json::to_value(e.model().config()),
        };
        v.expect("configs serialize")
    }
}

impl<T: Real> Environment<T> for BuiltinEnv<T> {
    fn name(&self) -> &'static str {
        each!(self, e => e.name())
    }

    fn layout(&self) -> StateLayout {
        each!(self, e => e.layout())
    }

    fn state_space(&self) -> &Space<T> {
        each!(self, e => e.state_space())
    }

    fn obs_space(&self) -> &Space<T> {
        each!(self, e => e.obs_space())
    }

    fn action_space(&self) -> &Space<T> {
        each!(self, e => e.action_space())
    }

    fn get_state_into(&self, buf: &mut [T]) -> Result<(), EnvError> {
        each!(self, e => e.get_state_into(buf))
    }

    fn set_state(&mut self, s: &[T]) -> Result<(), EnvError> {
        each!(self, e => e.set_state(s))
    }

    fn get_obs_into(&self, buf: &mut [T]) -> Result<(), EnvError> {
        each!(self, e => e.get_obs_into(buf))
    }

    fn reward(&self, s: &[T], a: &[T], o: &[T]) -> T {
        each!(self, e => e.reward(s, a, o))
    }

    fn eval(&self, s: &[T], a: &[T], o: &[T]) -> T {
        each!(self, e => e.eval(s, a, o))
    }

    fn step(&mut self, a: &[T]) -> Result<StepResult<T>, EnvError> {
        each!(self, e => e.step(a))
    }

    fn reset(&mut self) {
        each!(self, e => e.reset())
    }

    fn rand_reset(&mut self, rng: &mut dyn RngCore) {
        each!(self, e => e.rand_reset(rng))
    }

    fn is_done(&self) -> bool {
        each!(self, e => e.is_done())
    }

    fn dt(&self) -> T {
        each!(self, e => e.dt())
    }

    fn time(&self) -> T {
        each!(self, e => e.time())
    }
}
