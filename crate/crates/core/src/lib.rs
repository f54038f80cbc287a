//! Robot-learning toolkit built around a get/set-state environment
//! interface.
//!
//! * [`envcore`]: the [`Environment`](envcore::Environment) trait, spaces and
//!   state layout.
//! * [`envs`]: analytic cart-pole, pendulum, point-mass and N-link reacher.
//! * [`neural`]: MLPs, a diagonal Gaussian policy, Adam, conjugate gradient.
//! * [`sampler`]: deterministic parallel rollouts and throughput benchmarks.
//! * [`mppi`]: model predictive path integral control.
//! * [`npg`]: natural policy gradient training.
//! * [`live`]: a wall-clock control loop serving state to viewers.
//!
//! Numeric types are generic over [`Real`]; the aliases at the crate root
//! fix the scalar to `f64`, and [`f32`](mod@f32) holds single-precision ones.

pub mod envcore;
pub mod envs;
pub mod live;
pub mod mppi;
pub mod neural;
pub mod npg;
pub mod sampler;
pub mod scalar;
pub mod seed;
pub mod stats;

pub use envcore::{EnvError, EnvState, Environment, Space, StateLayout, StepResult};
pub use scalar::Real;

pub type CartPole = envs::ModelEnv<f64, envs::CartPole<f64>>;
pub type Pendulum = envs::ModelEnv<f64, envs::Pendulum<f64>>;
pub type PointMass = envs::ModelEnv<f64, envs::PointMass<f64>>;
pub type Reacher = envs::ModelEnv<f64, envs::Reacher<f64>>;
pub type BuiltinEnv = envs::BuiltinEnv<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type CartPole = crate::envs::ModelEnv<f32, crate::envs::CartPole<f32>>;
    pub type Pendulum = crate::envs::ModelEnv<f32, crate::envs::Pendulum<f32>>;
    pub type PointMass = crate::envs::ModelEnv<f32, crate::envs::PointMass<f32>>;
    pub type Reacher = crate::envs::ModelEnv<f32, crate::envs::Reacher<f32>>;
    pub type BuiltinEnv = crate::envs::BuiltinEnv<f32>;
}
