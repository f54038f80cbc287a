use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::SampleError;
use crate::envcore::Space;
use crate::neural::{DiagGaussianPolicy, Workspace};
use crate::scalar::Real;

/// Maps observations to actions during a rollout.
///
/// One controller is shared read-only by every worker; per-worker mutable
/// buffers live in `Scratch`, created once per worker.
pub trait Controller<T: Real>: Sync {
    type Scratch: Send;

    fn scratch(&self) -> Self::Scratch;

    /// Writes the action for `obs` into `action`, which has the env's
    /// action length.
    fn act(
        &self,
        obs: &[T],
        rng: &mut ChaCha8Rng,
        scratch: &mut Self::Scratch,
        action: &mut [T],
    ) -> Result<(), SampleError>;
}

impl<T: Real, C: Controller<T>> Controller<T> for &C {
    type Scratch = C::Scratch;

    fn scratch(&self) -> Self::Scratch {
        (**self).scratch()
    }

    fn act(
        &self,
        obs: &[T],
        rng: &mut ChaCha8Rng,
        scratch: &mut Self::Scratch,
        action: &mut [T],
    ) -> Result<(), SampleError> {
        (**self).act(obs, rng, scratch, action)
    }
}

/// Always outputs zeros.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroController;

impl<T: Real> Controller<T> for ZeroController {
    type Scratch = ();

    fn scratch(&self) {}

    fn act(
        &self,
        _: &[T],
        _: &mut ChaCha8Rng,
        _: &mut (),
        action: &mut [T],
    ) -> Result<(), SampleError> {
        action.fill(T::zero());
        Ok(())
    }
}

/// Uniformly random actions inside a box.
#[derive(Debug, Clone)]
pub struct RandomController<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> RandomController<T> {
    pub fn new(space: &Space<T>) -> Self {
        Self {
            lo: space.lo().to_vec(),
            hi: space.hi().to_vec(),
        }
    }
}

impl<T: Real> Controller<T> for RandomController<T> {
    type Scratch = ();

    fn scratch(&self) {}

    fn act(
        &self,
        _: &[T],
        rng: &mut ChaCha8Rng,
        _: &mut (),
        action: &mut [T],
    ) -> Result<(), SampleError> {
        for ((a, lo), hi) in action.iter_mut().zip(&self.lo).zip(&self.hi) {
            let u: f64 = rng.gen();
            *a = *lo + (*hi - *lo) * T::of(u);
        }
        Ok(())
    }
}

/// Wraps a plain function `obs -> action`. Allocates per call, so it is
/// meant for tests and scripting rather than the hot path.
pub struct FnController<F>(pub F);

impl<T: Real, F: Fn(&[T]) -> Vec<T> + Sync> Controller<T> for FnController<F> {
    type Scratch = ();

    fn scratch(&self) {}

    fn act(
        &self,
        obs: &[T],
        _: &mut ChaCha8Rng,
        _: &mut (),
        action: &mut [T],
    ) -> Result<(), SampleError> {
        let a = (self.0)(obs);
        if a.len() != action.len() {
            return Err(SampleError::ActionLength {
                expected: action.len(),
                got: a.len(),
            });
        }
        action.copy_from_slice(&a);
        Ok(())
    }
}

/// Samples from the policy's action distribution.
impl<T: Real> Controller<T> for DiagGaussianPolicy<T> {
    type Scratch = Workspace<T>;

    fn scratch(&self) -> Workspace<T> {
        Workspace::new()
    }

    fn act(
        &self,
        obs: &[T],
        rng: &mut ChaCha8Rng,
        ws: &mut Workspace<T>,
        action: &mut [T],
    ) -> Result<(), SampleError> {
        self.sample_into(obs, ws, rng, action);
        Ok(())
    }
}

/// Acts with the policy mean.
#[derive(Debug, Clone, Copy)]
pub struct Deterministic<'p, T>(pub &'p DiagGaussianPolicy<T>);

impl<T: Real> Controller<T> for Deterministic<'_, T> {
    type Scratch = Workspace<T>;

    fn scratch(&self) -> Workspace<T> {
        Workspace::new()
    }

    fn act(
        &self,
        obs: &[T],
        _: &mut ChaCha8Rng,
        ws: &mut Workspace<T>,
        action: &mut [T],
    ) -> Result<(), SampleError> {
        self.0.mean_into(obs, ws, action);
        Ok(())
    }
}
