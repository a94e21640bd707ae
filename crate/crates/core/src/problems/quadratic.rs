//! Separable quadratic `f(x) = ½Σ h_i(x_i − c_i)²` with optional additive
//! Markov offsets and bounded martingale noise. Small enough that every
//! constant is exact; used for deterministic and calibration runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{chain_mixing, gaussian_vec, sample_ball, MixingInfo, Problem, ProblemConstants, ProblemError};
use crate::chain::{stationary, Distribution, FiniteChain};
use crate::linalg::{norm, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    pub curvatures: Vec<f64>,
    /// Minimizer; zeros when absent.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Starting point; all ones when absent.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    /// Size of the random chain driving the offsets; `0` disables them.
    #[serde(default)]
    pub chain_states: usize,
    /// Largest offset norm `max_z ‖o_z‖`.
    #[serde(default)]
    pub offset_scale: f64,
    /// Radius of the uniform-ball martingale noise; `0` disables it.
    #[serde(default)]
    pub martingale_radius: f64,
    #[serde(default)]
    pub instance_seed: u64,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        Self {
            curvatures: vec![1.0],
            center: None,
            start: None,
            chain_states: 0,
            offset_scale: 0.0,
            martingale_radius: 0.0,
            instance_seed: 0,
        }
    }
}

impl QuadraticConfig {
    pub fn build<T: Scalar>(&self) -> Result<MarkovQuadratic<T>, ProblemError> {
        let d = self.curvatures.len();
        let lift = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        let center = self.center.as_deref().map(lift).unwrap_or_else(|| vec![T::zero(); d]);
        let start = self.start.as_deref().map(lift).unwrap_or_else(|| vec![T::one(); d]);
        let mut rng = ChaCha8Rng::seed_from_u64(self.instance_seed);
        let (chain, offsets) = if self.chain_states == 0 || self.offset_scale == 0.0 {
            (FiniteChain::new(Matrix::identity(1))?, Matrix::zeros(1, d))
        } else {
            let n = self.chain_states;
            let rows: Vec<Vec<T>> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| T::lit(v / s)).collect()
                })
                .collect();
            let chain = FiniteChain::from_rows(&rows)?;
            let mut raw = Matrix::zeros(n, d);
            for z in 0..n {
                raw.row_mut(z).copy_from_slice(&gaussian_vec::<T, _>(d, &mut rng));
            }
            (chain, raw)
        };
        MarkovQuadratic::new(lift(&self.curvatures), center, start, chain, offsets, T::lit(self.offset_scale), T::lit(self.martingale_radius))
    }
}

#[derive(Clone, Debug)]
pub struct MarkovQuadratic<T> {
    curvatures: Vec<T>,
    center: Vec<T>,
    start: Vec<T>,
    chain: FiniteChain<T>,
    pi: Distribution<T>,
    offsets: Matrix<T>,
    radius: T,
    constants: ProblemConstants<T>,
    mixing: MixingInfo,
}

impl<T: Scalar> MarkovQuadratic<T> {
    /// `raw_offsets` rows are π-centered and rescaled so the largest has norm
    /// `offset_scale` (left untouched when they are all zero after centering).
    pub fn new(
        curvatures: Vec<T>,
        center: Vec<T>,
        start: Vec<T>,
        chain: FiniteChain<T>,
        raw_offsets: Matrix<T>,
        offset_scale: T,
        martingale_radius: T,
    ) -> Result<Self, ProblemError> {
        let d = curvatures.len();
        if d == 0 || center.len() != d || start.len() != d || raw_offsets.cols() != d || raw_offsets.rows() != chain.n_states() {
            return Err(ProblemError::InvalidConfig("quadratic dimensions disagree".into()));
        }
        if curvatures.iter().any(|&h| !(h > T::zero())) {
            return Err(ProblemError::InvalidConfig("curvatures must be positive".into()));
        }
        if !(martingale_radius >= T::zero()) || !(offset_scale >= T::zero()) {
            return Err(ProblemError::InvalidConfig("noise scales must be nonnegative".into()));
        }
        let pi = stationary(&chain)?;
        let mean = pi.mean_rows(&raw_offsets);
        let mut offsets = Matrix::from_fn(raw_offsets.rows(), d, |z, i| raw_offsets[(z, i)] - mean[i]);
        let largest = (0..offsets.rows()).map(|z| norm(offsets.row(z))).fold(T::zero(), T::max);
        if largest > T::zero() {
            offsets = offsets.scale(offset_scale / largest);
        }
        let offset_max = if largest > T::zero() { offset_scale } else { T::zero() };
        let sources = usize::from(offset_max > T::zero()) + usize::from(martingale_radius > T::zero());
        let k = T::from_count(sources + 1);
        let mu = curvatures.iter().copied().fold(T::infinity(), T::min);
        let l = curvatures.iter().copied().fold(T::zero(), T::max);
        // ‖∇f + o + m‖² ≤ (n+1)(‖∇f‖² + ‖o‖² + ‖m‖²) over the n active sources.
        let constants = ProblemConstants {
            mu,
            l,
            a: k,
            b: T::zero(),
            c: k * (offset_max * offset_max + martingale_radius * martingale_radius),
            l_g: l,
        };
        let mixing = chain_mixing(&chain)?;
        Ok(Self { curvatures, center, start, chain, pi, offsets, radius: martingale_radius, constants, mixing })
    }

    pub fn offsets(&self) -> &Matrix<T> {
        &self.offsets
    }

    pub fn stationary(&self) -> &Distribution<T> {
        &self.pi
    }

    pub fn martingale_radius(&self) -> T {
        self.radius
    }
}

impl<T: Scalar> Problem<T> for MarkovQuadratic<T> {
    type State = usize;

    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.curvatures.len()
    }

    fn objective(&self, x: &[T]) -> T {
        self.suboptimality(x)
    }

    fn optimal_value(&self) -> T {
        T::zero()
    }

    fn suboptimality(&self, x: &[T]) -> T {
        let s: T = (0..x.len()).map(|i| self.curvatures[i] * (x[i] - self.center[i]).powi(2)).sum();
        T::lit(0.5) * s
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        (0..x.len()).map(|i| self.curvatures[i] * (x[i] - self.center[i])).collect()
    }

    fn minimizer(&self) -> Vec<T> {
        self.center.clone()
    }

    fn initial_point(&self) -> Vec<T> {
        self.start.clone()
    }

    fn constants(&self) -> ProblemConstants<T> {
        self.constants
    }

    fn mixing(&self) -> MixingInfo {
        self.mixing.clone()
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.pi.sample(rng)
    }

    fn advance<R: Rng + ?Sized>(&self, state: &usize, rng: &mut R) -> usize {
        self.chain.step(*state, rng)
    }

    fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.pi.sample(rng)
    }

    fn markov_gradient(&self, x: &[T], state: &usize) -> Vec<T> {
        let mut g = self.gradient(x);
        crate::linalg::axpy(&mut g, T::one(), self.offsets.row(*state));
        g
    }

    fn martingale_noise<R: Rng + ?Sized>(&self, x: &[T], _: &usize, _: &usize, rng: &mut R) -> Option<Vec<T>> {
        (self.radius > T::zero()).then(|| sample_ball(x.len(), self.radius, rng))
    }

    fn finite_chain(&self) -> Option<&FiniteChain<T>> {
        Some(&self.chain)
    }

    fn state_index(&self, state: &usize) -> Option<usize> {
        Some(*state)
    }

    fn state_at(&self, index: usize) -> Option<usize> {
        (index < self.chain.n_states()).then_some(index)
    }
}
