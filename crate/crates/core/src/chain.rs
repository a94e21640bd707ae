//! Finite-state Markov chains: validation, stationary laws, total variation,
//! mixing-time certificates, fundamental matrices and path sampling.
//!
//! Total variation is the unnormalized `Σ|p − q|` throughout (range `[0, 2]`).
//! A mixing time `t` certifies `max_z ‖P^k(z,·) − π‖ ≤ 2^{−⌊k/t⌋}` for every
//! `k ≥ 1`: exact matrix powers up to a horizon, then Dobrushin
//! submultiplicativity beyond it.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{rank, Lu, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("chain needs at least one state")]
    Empty,
    #[error("transition matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("row {row} is not a probability vector: {reason}")]
    NotStochastic { row: usize, reason: String },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("stationary distribution is not unique (unit eigenspace has dimension {dimension})")]
    NonUniqueStationary { dimension: usize },
    #[error("stationary solve did not reach the residual tolerance (residual {residual:e})")]
    StationaryResidual { residual: f64 },
    #[error("no mixing time certifies within horizon {horizon}: {reason}")]
    MixingTimeNotFound { horizon: usize, reason: String },
    #[error("I - P + 1πᵀ is singular")]
    SingularSystem,
    #[error("state {0} out of range")]
    InvalidState(usize),
    #[error("chain text format: {0}")]
    Parse(String),
}

/// A row-stochastic transition matrix with optional state labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain<T> {
    transition: Matrix<T>,
    labels: Option<Vec<String>>,
}

impl<T: Scalar> FiniteChain<T> {
    pub fn new(transition: Matrix<T>) -> Result<Self, ChainError> {
        let (rows, cols) = (transition.rows(), transition.cols());
        if rows == 0 {
            return Err(ChainError::Empty);
        }
        if rows != cols {
            return Err(ChainError::NotSquare { rows, cols });
        }
        let tol = T::tol(1e-12);
        for i in 0..rows {
            let row = transition.row(i);
            if let Some(j) = row.iter().position(|&p| !(p >= T::zero() && p <= T::one())) {
                return Err(ChainError::NotStochastic {
                    row: i,
                    reason: format!("entry {j} = {} outside [0, 1]", row[j]),
                });
            }
            let s: T = row.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return Err(ChainError::NotStochastic { row: i, reason: format!("sums to {s}") });
            }
        }
        Ok(Self { transition, labels: None })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, ChainError> {
        let m = Matrix::from_rows(rows).map_err(|_| ChainError::NotStochastic {
            row: 0,
            reason: "rows have unequal lengths".into(),
        })?;
        Self::new(m)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, ChainError> {
        if labels.len() != self.n_states() {
            return Err(ChainError::DimensionMismatch { left: labels.len(), right: self.n_states() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.transition.rows()
    }

    #[inline]
    pub fn transition(&self) -> &Matrix<T> {
        &self.transition
    }

    #[inline]
    pub fn row(&self, z: usize) -> &[T] {
        self.transition.row(z)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Draws the successor of `z`.
    pub fn step<R: Rng + ?Sized>(&self, z: usize, rng: &mut R) -> usize {
        sample_index(self.row(z), rng)
    }

    /// Parses the plain-text format: first line `n`, then `n` whitespace
    /// separated rows. Blank lines and `#` comments are skipped.
    pub fn parse_text(text: &str) -> Result<Self, ChainError> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| ChainError::Parse("missing state count".into()))?
            .parse()
            .map_err(|e| ChainError::Parse(format!("state count: {e}")))?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines.next().ok_or_else(|| ChainError::Parse(format!("missing row {i}")))?;
            let row = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>().map(T::lit))
                .collect::<Result<Vec<T>, _>>()
                .map_err(|e| ChainError::Parse(format!("row {i}: {e}")))?;
            if row.len() != n {
                return Err(ChainError::Parse(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            rows.push(row);
        }
        if lines.next().is_some() {
            return Err(ChainError::Parse("trailing content after the last row".into()));
        }
        Self::from_rows(&rows)
    }

    pub fn to_text(&self) -> String {
        let n = self.n_states();
        let mut out = format!("{n}\n");
        for i in 0..n {
            let row: Vec<String> = self.row(i).iter().map(|p| format!("{}", p.to_f64_lossy())).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

/// Inverse-CDF draw from a probability row. Rounding slack falls on the last
/// state with positive mass.
pub fn sample_index<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u = T::lit(rng.random::<f64>());
    let mut acc = T::zero();
    let mut last = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > T::zero() {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

/// A probability vector over chain states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution<T> {
    weights: Vec<T>,
}

impl<T: Scalar> Distribution<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, ChainError> {
        if weights.is_empty() {
            return Err(ChainError::InvalidDistribution("empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= T::zero())) {
            return Err(ChainError::InvalidDistribution(format!("negative or NaN weight {w}")));
        }
        let s: T = weights.iter().copied().sum();
        if (s - T::one()).abs() > T::tol(1e-12) {
            return Err(ChainError::InvalidDistribution(format!("total mass {s}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![T::one() / T::from_count(n); n] }
    }

    pub fn point_mass(n: usize, state: usize) -> Self {
        let mut weights = vec![T::zero(); n];
        weights[state] = T::one();
        Self { weights }
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.weights, rng)
    }

    /// `πᵀ M` for an `n × d` table.
    pub fn mean_rows(&self, table: &Matrix<T>) -> Vec<T> {
        table.vec_mul(&self.weights)
    }
}

/// Unnormalized total variation `Σ_i |p_i − q_i|`.
pub fn tv_distance<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T, ChainError> {
    if p.len() != q.len() {
        return Err(ChainError::DimensionMismatch { left: p.len(), right: q.len() });
    }
    Ok(l1_distance(p.weights(), q.weights()))
}

#[inline]
pub(crate) fn l1_distance<T: Scalar>(p: &[T], q: &[T]) -> T {
    p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum()
}

/// Unique stationary distribution of `chain`.
///
/// Uniqueness is decided by the rank of `I − P` (relative pivot tolerance
/// 1e-10). The balance equations with one row swapped for `Σπ = 1` are solved
/// by LU; power iteration polishes the result if the residual is off.
pub fn stationary<T: Scalar>(chain: &FiniteChain<T>) -> Result<Distribution<T>, ChainError> {
    let n = chain.n_states();
    if n == 1 {
        return Ok(Distribution { weights: vec![T::one()] });
    }
    let p = chain.transition();
    let i_minus_p = Matrix::identity(n).sub(p);
    let r = rank(&i_minus_p, T::tol(1e-10));
    if r < n - 1 {
        return Err(ChainError::NonUniqueStationary { dimension: n - r });
    }
    let mut system = i_minus_p.transpose().scale(-T::one());
    for v in system.row_mut(n - 1) {
        *v = T::one();
    }
    let mut rhs = vec![T::zero(); n];
    rhs[n - 1] = T::one();
    let mut pi = match Lu::factor(&system) {
        Ok(lu) => lu.solve(&rhs),
        Err(_) => vec![T::one() / T::from_count(n); n],
    };
    normalize_nonneg(&mut pi);

    let tol = T::tol(1e-10);
    let mut res = stationary_residual(p, &pi);
    let mut iters = 0;
    while res > tol && iters < 100_000 {
        pi = p.vec_mul(&pi);
        normalize_nonneg(&mut pi);
        res = stationary_residual(p, &pi);
        iters += 1;
    }
    if res > tol {
        return Err(ChainError::StationaryResidual { residual: res.to_f64_lossy() });
    }
    Ok(Distribution { weights: pi })
}

fn normalize_nonneg<T: Scalar>(v: &mut [T]) {
    for x in v.iter_mut() {
        *x = x.max(T::zero());
    }
    let s: T = v.iter().copied().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// `‖πP − π‖_∞`.
pub fn stationary_residual<T: Scalar>(p: &Matrix<T>, pi: &[T]) -> T {
    let next = p.vec_mul(pi);
    next.iter().zip(pi).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
}

/// `w_k = max_z Σ_j |P^k(z,j) − π_j|` for `k = 0..=horizon`.
pub fn worst_case_tv<T: Scalar>(chain: &FiniteChain<T>, pi: &Distribution<T>, horizon: usize) -> Vec<T> {
    let n = chain.n_states();
    let mut out = Vec::with_capacity(horizon + 1);
    let mut pk = Matrix::identity(n);
    out.push(worst_row_tv(&pk, pi.weights()));
    for _ in 0..horizon {
        pk = pk.matmul(chain.transition());
        out.push(worst_row_tv(&pk, pi.weights()));
    }
    out
}

fn worst_row_tv<T: Scalar>(pk: &Matrix<T>, pi: &[T]) -> T {
    (0..pk.rows()).map(|z| l1_distance(pk.row(z), pi)).fold(T::zero(), T::max)
}

/// Dobrushin coefficient `½ max_{z,z'} ‖M(z,·) − M(z',·)‖₁`.
pub fn dobrushin<T: Scalar>(m: &Matrix<T>) -> T {
    let n = m.rows();
    let mut best = T::zero();
    for a in 0..n {
        for b in a + 1..n {
            best = best.max(l1_distance(m.row(a), m.row(b)));
        }
    }
    best * T::lit(0.5)
}

/// Largest `j` with `w ≤ 2^{-j}`; `None` if `w > 1`, `usize::MAX` if `w` is
/// zero up to accumulated rounding in the matrix powers.
fn halvings<T: Scalar>(w: T) -> Option<usize> {
    if w > T::one() {
        return None;
    }
    if w <= T::tol(1e-13) {
        return Some(usize::MAX);
    }
    let half = T::lit(0.5);
    let mut bound = T::one();
    let mut j = 0;
    while w <= bound * half && bound > T::zero() {
        bound = bound * half;
        j += 1;
    }
    Some(j)
}

/// Smallest `t ∈ [1, H]` with `profile[k] ≤ 2^{−⌊k/t⌋}` for every
/// `1 ≤ k ≤ H = profile.len() − 1`. `profile[0]` is ignored.
pub fn mixing_time_from_profile<T: Scalar>(profile: &[T]) -> Option<usize> {
    let h = profile.len().checked_sub(1)?;
    if h == 0 {
        return None;
    }
    // ⌊k/t⌋ ≤ j_k  ⇔  t ≥ ⌊k/(j_k+1)⌋ + 1.
    let mut t = 1usize;
    for (k, &w) in profile.iter().enumerate().skip(1) {
        let j = halvings(w)?;
        if j == usize::MAX {
            continue;
        }
        t = t.max(k / (j + 1) + 1);
    }
    (t <= h).then_some(t)
}

/// Window-only variant used for uncertified estimates: requires the bound
/// only for `k ≥ t`, i.e. it ignores the first window.
pub fn windowed_mixing_estimate<T: Scalar>(profile: &[T]) -> Option<usize> {
    let h = profile.len().checked_sub(1)?;
    (1..=h).find(|&t| {
        profile.iter().enumerate().skip(t).all(|(k, &w)| {
            let pow = T::lit(0.5).powi((k / t).min(i32::MAX as usize) as i32);
            w <= T::tol(1e-13) || w <= pow
        })
    })
}

/// Evidence behind a mixing time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingCertificate<T> {
    pub tmix: usize,
    pub horizon: usize,
    /// `w_k` for `k = 0..=horizon`.
    pub worst_tv: Vec<T>,
    /// Dobrushin coefficient of `P^tmix`; at most 1/2 for a valid certificate.
    pub dobrushin: T,
}

const MAX_HALF_SEARCH: usize = 1 << 14;

/// Certified mixing time; see [`mixing_certificate`].
pub fn mixing_time<T: Scalar>(chain: &FiniteChain<T>, horizon: Option<usize>) -> Result<usize, ChainError> {
    mixing_certificate(chain, horizon).map(|c| c.tmix)
}

/// Scans exact powers of `P` up to `horizon` (default `max(64, 20·t½)`, with
/// `t½` the first `t` whose normalized worst-case distance is ≤ 1/2) and
/// returns the smallest certifying `t` together with its evidence.
pub fn mixing_certificate<T: Scalar>(
    chain: &FiniteChain<T>,
    horizon: Option<usize>,
) -> Result<MixingCertificate<T>, ChainError> {
    let pi = stationary(chain)?;
    let p = chain.transition();
    let n = chain.n_states();

    let mut powers = vec![Matrix::identity(n)];
    let mut profile = vec![worst_row_tv(&powers[0], pi.weights())];
    let horizon = match horizon {
        Some(h) => h.max(1),
        None => {
            // The normalized distance is w/2, so t½ is the first w_t ≤ 1.
            let mut t_half = None;
            for t in 1..=MAX_HALF_SEARCH {
                let next = powers[t - 1].matmul(p);
                profile.push(worst_row_tv(&next, pi.weights()));
                powers.push(next);
                if profile[t] <= T::one() {
                    t_half = Some(t);
                    break;
                }
            }
            let Some(t_half) = t_half else {
                return Err(ChainError::MixingTimeNotFound {
                    horizon: MAX_HALF_SEARCH,
                    reason: "worst-case distance never drops to half (periodic chain?)".into(),
                });
            };
            64.max(20 * t_half)
        }
    };
    while profile.len() <= horizon {
        let next = powers.last().expect("identity present").matmul(p);
        profile.push(worst_row_tv(&next, pi.weights()));
        powers.push(next);
    }
    profile.truncate(horizon + 1);

    let Some(tmix) = mixing_time_from_profile(&profile) else {
        let reason = match profile.iter().skip(1).position(|&w| w > T::one()) {
            Some(k) => format!("distance at k = {} exceeds 1, no window length can satisfy it", k + 1),
            None => "distance does not halve per window within the horizon".into(),
        };
        return Err(ChainError::MixingTimeNotFound { horizon, reason });
    };
    let dob = dobrushin(&powers[tmix]);
    if dob > T::lit(0.5) {
        // Unreachable in exact arithmetic: δ(P^t) ≤ w_t ≤ 1/2.
        return Err(ChainError::MixingTimeNotFound {
            horizon,
            reason: format!("Dobrushin coefficient of P^{tmix} is {dob} > 1/2"),
        });
    }
    Ok(MixingCertificate { tmix, horizon, worst_tv: profile, dobrushin: dob })
}

/// Cached factorization of `I − P + 1πᵀ`.
#[derive(Clone, Debug)]
pub struct Fundamental<T> {
    pi: Distribution<T>,
    lu: Lu<T>,
}

impl<T: Scalar> Fundamental<T> {
    pub fn new(chain: &FiniteChain<T>) -> Result<Self, ChainError> {
        let pi = stationary(chain)?;
        let n = chain.n_states();
        let m = Matrix::from_fn(n, n, |i, j| {
            let id = if i == j { T::one() } else { T::zero() };
            id - chain.transition()[(i, j)] + pi.weights()[j]
        });
        let lu = Lu::factor(&m).map_err(|_| ChainError::SingularSystem)?;
        Ok(Self { pi, lu })
    }

    pub fn stationary(&self) -> &Distribution<T> {
        &self.pi
    }

    /// `F · rhs`.
    pub fn apply(&self, rhs: &Matrix<T>) -> Matrix<T> {
        self.lu.solve_matrix(rhs)
    }

    pub fn matrix(&self) -> Matrix<T> {
        self.lu.inverse()
    }
}

/// `F = (I − P + 1πᵀ)^{-1}`.
pub fn fundamental_matrix<T: Scalar>(chain: &FiniteChain<T>) -> Result<Matrix<T>, ChainError> {
    Ok(Fundamental::new(chain)?.matrix())
}

/// `length` states `Z_0, …, Z_{length−1}` with `Z_0 ~ start`; a pure function
/// of `seed`.
pub fn sample_path<T: Scalar>(
    chain: &FiniteChain<T>,
    start: &Distribution<T>,
    length: usize,
    seed: u64,
) -> Result<Vec<usize>, ChainError> {
    if start.len() != chain.n_states() {
        return Err(ChainError::DimensionMismatch { left: start.len(), right: chain.n_states() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = Vec::with_capacity(length);
    if length == 0 {
        return Ok(path);
    }
    let mut z = start.sample(&mut rng);
    path.push(z);
    for _ in 1..length {
        z = chain.step(z, &mut rng);
        path.push(z);
    }
    Ok(path)
}
