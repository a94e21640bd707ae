//! Optimization problems driven by Markov-modulated gradients.
//!
//! A [`Problem`] bundles the objective, its exact optimum, the state process
//! `Z_k`, the gradient oracle `g(x, z)`, an optional martingale draw, and
//! analytically certified constants.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, FiniteChain};
use crate::linalg::LinalgError;
use crate::scalar::Scalar;

mod graph;
mod quadratic;
mod subsample;
mod sysid;
mod token;

pub use graph::{metropolis_hastings, Graph, GraphKind};
pub use quadratic::{MarkovQuadratic, QuadraticConfig};
pub use subsample::{
    bminsep_stationary, bminsep_step, bminsep_transition, Subsample, SubsampleConfig, SubsampleState,
};
pub use sysid::{sample_ball, sysid_grad_update, SysId, SysIdConfig};
pub use token::{TokenConfig, TokenRegression};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("constants cannot be certified: {0}")]
    UncertifiedModel(String),
    #[error("stationary covariance is degenerate (smallest eigenvalue {0:e})")]
    DegenerateCovariance(f64),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `μ` (PL), `L` (smoothness), the growth triple `(A, B, C)` and `L_g`
/// (Lipschitz constant of `g(·, z)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants<T> {
    pub mu: T,
    pub l: T,
    pub a: T,
    pub b: T,
    pub c: T,
    pub l_g: T,
}

/// Mixing time used for bound evaluation and how it was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingInfo {
    pub tmix: usize,
    /// `true` only for an exact certificate on a finite chain.
    pub certified: bool,
    pub method: String,
}

pub trait Problem<T: Scalar>: Send + Sync {
    type State: Clone + Debug + Send + Sync;

    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn objective(&self, x: &[T]) -> T;
    fn optimal_value(&self) -> T;

    /// `f(x) − f⋆`; implementations override with a cancellation-free form.
    fn suboptimality(&self, x: &[T]) -> T {
        self.objective(x) - self.optimal_value()
    }

    fn gradient(&self, x: &[T]) -> Vec<T>;
    /// A point attaining `f⋆`.
    fn minimizer(&self) -> Vec<T>;
    fn initial_point(&self) -> Vec<T>;
    fn constants(&self) -> ProblemConstants<T>;
    fn mixing(&self) -> MixingInfo;

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    fn advance<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R) -> Self::State;
    /// A draw from (or, for continuous chains, close to) the stationary law.
    fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    /// `g(x, z)`.
    fn markov_gradient(&self, x: &[T], state: &Self::State) -> Vec<T>;

    /// `M_{k+1}` given the transition `state → next`; `None` when absent.
    fn martingale_noise<R: Rng + ?Sized>(
        &self,
        _x: &[T],
        _state: &Self::State,
        _next: &Self::State,
        _rng: &mut R,
    ) -> Option<Vec<T>> {
        None
    }

    fn finite_chain(&self) -> Option<&FiniteChain<T>> {
        None
    }

    fn state_index(&self, _state: &Self::State) -> Option<usize> {
        None
    }

    fn state_at(&self, _index: usize) -> Option<Self::State> {
        None
    }
}

pub(crate) fn gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(StandardNormal.sample(rng))
}

pub(crate) fn gaussian_vec<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// Certificate for a finite chain, falling back to a flagged window-only
/// estimate when the strict criterion cannot be met.
pub(crate) fn chain_mixing<T: Scalar>(chain: &FiniteChain<T>) -> Result<MixingInfo, ProblemError> {
    use crate::chain::{mixing_certificate, stationary, windowed_mixing_estimate, worst_case_tv};
    match mixing_certificate(chain, None) {
        Ok(cert) => Ok(MixingInfo { tmix: cert.tmix, certified: true, method: "exact matrix powers".into() }),
        Err(ChainError::MixingTimeNotFound { .. }) => {
            let pi = stationary(chain)?;
            let profile = worst_case_tv(chain, &pi, 2048);
            let tmix = windowed_mixing_estimate(&profile).ok_or_else(|| {
                ProblemError::UncertifiedModel("chain does not mix within 2048 steps".into())
            })?;
            Ok(MixingInfo { tmix, certified: false, method: "window-only estimate (first-window bound fails)".into() })
        }
        Err(e) => Err(e.into()),
    }
}
