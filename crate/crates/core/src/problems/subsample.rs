//! Minibatch SGD with b-min-separation: a selected datapoint is blocked for
//! the next `b − 1` steps. Each datapoint runs an independent `b`-state chain:
//! at phase 0 it is selected with probability `ρ` (jumping to `b − 1`),
//! otherwise phases count down deterministically.
//!
//! The minibatch loss is zero when nobody is selected, so the stationary mean
//! of `g` is `(1 − p∅)∇ℒ` with `p∅` the empty-batch probability. The problem
//! therefore optimizes `f = (1 − p∅)ℒ`, whose gradient is exactly that mean;
//! both share the minimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{chain_mixing, gaussian, gaussian_vec, MixingInfo, Problem, ProblemConstants, ProblemError};
use crate::chain::{mixing_time_from_profile, stationary, windowed_mixing_estimate, worst_case_tv, Distribution, FiniteChain};
use crate::linalg::{axpy, dot, least_squares, norm_sq, smallest_nonzero, squared_singular_values, sub, Matrix};
use crate::report::{Report, Tally};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleConfig {
    pub n_points: usize,
    pub dim: usize,
    pub b: usize,
    pub rho: f64,
    /// Target noise; ignored when `realizable`.
    pub noise_std: f64,
    #[serde(default)]
    pub realizable: bool,
    #[serde(default)]
    pub instance_seed: u64,
    /// Enumerate the joint chain when it has at most this many states.
    #[serde(default = "default_max_product_states")]
    pub max_product_states: usize,
}

fn default_max_product_states() -> usize {
    512
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        Self {
            n_points: 30,
            dim: 8,
            b: 4,
            rho: 0.5,
            noise_std: 0.5,
            realizable: false,
            instance_seed: 13,
            max_product_states: default_max_product_states(),
        }
    }
}

impl SubsampleConfig {
    pub fn build<T: Scalar>(&self) -> Result<Subsample<T>, ProblemError> {
        if self.n_points == 0 || self.dim == 0 {
            return Err(ProblemError::InvalidConfig("n_points and dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.instance_seed);
        let w_true: Vec<T> = gaussian_vec(self.dim, &mut rng);
        let a = Matrix::from_fn(self.n_points, self.dim, |_, _| gaussian(&mut rng));
        let noise = if self.realizable { T::zero() } else { T::lit(self.noise_std) };
        let targets = a.mul_vec(&w_true).into_iter().map(|v| v + noise * gaussian::<T, _>(&mut rng)).collect();
        Subsample::new(a, targets, self.b, T::lit(self.rho), self.max_product_states)
    }
}

/// Phases `ζ(i) ∈ {0, …, b−1}` and the current minibatch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleState {
    pub phases: Vec<usize>,
    pub selected: Vec<bool>,
}

impl SubsampleState {
    pub fn batch_size(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }
}

/// One step of the scheme; also returns the newly selected indices.
pub fn bminsep_step<T: Scalar, R: Rng + ?Sized>(
    state: &SubsampleState,
    b: usize,
    rho: T,
    rng: &mut R,
) -> (SubsampleState, Vec<usize>) {
    let n = state.phases.len();
    let mut phases = Vec::with_capacity(n);
    let mut selected = vec![false; n];
    let mut picked = Vec::new();
    let rho = rho.to_f64_lossy();
    for (i, &s) in state.phases.iter().enumerate() {
        if s == 0 {
            if rng.random::<f64>() < rho {
                selected[i] = true;
                picked.push(i);
                phases.push(b - 1);
            } else {
                phases.push(0);
            }
        } else {
            phases.push(s - 1);
        }
    }
    (SubsampleState { phases, selected }, picked)
}

/// `π̃(0) = 1/(1+(b−1)ρ)`, `π̃(s) = ρ/(1+(b−1)ρ)` for `s ≥ 1`.
pub fn bminsep_stationary<T: Scalar>(b: usize, rho: T) -> Distribution<T> {
    let denom = T::one() + T::from_count(b - 1) * rho;
    let mut w = vec![rho / denom; b];
    w[0] = T::one() / denom;
    Distribution::new(w).expect("closed form is a distribution")
}

/// The single-datapoint `b × b` kernel.
pub fn bminsep_transition<T: Scalar>(b: usize, rho: T) -> FiniteChain<T> {
    let mut p = Matrix::zeros(b, b);
    if b == 1 {
        p[(0, 0)] = T::one();
    } else {
        p[(0, 0)] = T::one() - rho;
        p[(0, b - 1)] = rho;
        for s in 1..b {
            p[(s, s - 1)] = T::one();
        }
    }
    FiniteChain::new(p).expect("valid kernel")
}

/// Linear model `φ(w; a) = ⟨w, a⟩` on `N` datapoints under b-min-separation.
#[derive(Clone, Debug)]
pub struct Subsample<T> {
    data: Matrix<T>,
    targets: Vec<T>,
    b: usize,
    rho: T,
    select_prob: T,
    empty_prob: T,
    phase_law: Distribution<T>,
    hessian: Matrix<T>,
    linear_term: Vec<T>,
    w_star: Vec<T>,
    loss_star: T,
    sample_smoothness: T,
    constants: ProblemConstants<T>,
    mixing: MixingInfo,
    product: Option<FiniteChain<T>>,
}

impl<T: Scalar> Subsample<T> {
    pub fn new(data: Matrix<T>, targets: Vec<T>, b: usize, rho: T, max_product_states: usize) -> Result<Self, ProblemError> {
        if b == 0 {
            return Err(ProblemError::InvalidConfig("b must be at least 1".into()));
        }
        if !(rho > T::zero() && rho <= T::one()) {
            return Err(ProblemError::InvalidConfig(format!("rho = {rho} outside (0, 1]")));
        }
        if data.rows() != targets.len() || data.rows() == 0 {
            return Err(ProblemError::InvalidConfig("data and targets disagree".into()));
        }
        let n = data.rows();
        let nf = T::from_count(n);
        let phase_law = bminsep_stationary(b, rho);
        let select_prob = if b == 1 { rho } else { phase_law.weights()[b - 1] };
        let empty_prob = (T::one() - select_prob).powi(n as i32);
        let scale = T::one() - empty_prob;

        let hessian = data.transpose().matmul(&data).scale(T::one() / nf);
        let linear_term: Vec<T> = data.vec_mul(&targets).into_iter().map(|v| v / nf).collect();
        let w_star = least_squares(&data, &targets, T::tol(1e-12))?;
        let loss_star = norm_sq(&sub(&data.mul_vec(&w_star), &targets)) / (T::lit(2.0) * nf);
        let spectrum = squared_singular_values(&data)?;
        let kernel_min = smallest_nonzero(&spectrum, T::tol(1e-10))
            .ok_or_else(|| ProblemError::UncertifiedModel("data matrix is zero".into()))?;
        let kernel_max = *spectrum.last().expect("nonempty");
        let sample_smoothness = (0..n).map(|i| norm_sq(data.row(i))).fold(T::zero(), T::max);
        // ‖∇ℒ̃(w;ζ)‖² ≤ 2·L_s·N·ℒ(w) for any nonempty batch, and ℒ = ℒ⋆ + Δ/(1 − p∅).
        let b_abc = T::lit(2.0) * sample_smoothness * nf / scale;
        let constants = ProblemConstants {
            mu: scale * kernel_min / nf,
            l: scale * kernel_max / nf,
            a: T::zero(),
            b: b_abc,
            c: b_abc * scale * loss_star,
            l_g: sample_smoothness,
        };

        let product = if b >= 2 && (b as f64).powi(n as i32) <= max_product_states as f64 {
            Some(product_chain(n, b, rho)?)
        } else {
            None
        };
        let mixing = match &product {
            Some(chain) => chain_mixing(chain)?,
            None => product_bound_mixing(n, b, rho)?,
        };
        Ok(Self {
            data,
            targets,
            b,
            rho,
            select_prob,
            empty_prob,
            phase_law,
            hessian,
            linear_term,
            w_star,
            loss_star,
            sample_smoothness,
            constants,
            mixing,
            product,
        })
    }

    pub fn n_points(&self) -> usize {
        self.data.rows()
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn data(&self) -> (&Matrix<T>, &[T]) {
        (&self.data, &self.targets)
    }

    /// Stationary per-step selection probability of one datapoint.
    pub fn selection_probability(&self) -> T {
        self.select_prob
    }

    /// `p∅ = (1 − π̃(b−1))^N`.
    pub fn empty_batch_probability(&self) -> T {
        self.empty_prob
    }

    pub fn phase_law(&self) -> &Distribution<T> {
        &self.phase_law
    }

    /// Per-sample smoothness `max_i ‖a_i‖²`.
    pub fn sample_smoothness(&self) -> T {
        self.sample_smoothness
    }

    /// `ℒ(w) = ‖Aw − b‖²/(2N)`.
    pub fn full_loss(&self, w: &[T]) -> T {
        norm_sq(&sub(&self.data.mul_vec(w), &self.targets)) / (T::lit(2.0) * T::from_count(self.n_points()))
    }

    pub fn full_gradient(&self, w: &[T]) -> Vec<T> {
        sub(&self.hessian.mul_vec(w), &self.linear_term)
    }

    /// Minibatch loss; zero for an empty batch.
    pub fn minibatch_loss(&self, w: &[T], state: &SubsampleState) -> T {
        let t = state.batch_size();
        if t == 0 {
            return T::zero();
        }
        let sum: T = (0..self.n_points())
            .filter(|&j| state.selected[j])
            .map(|j| {
                let r = dot(self.data.row(j), w) - self.targets[j];
                r * r
            })
            .sum();
        T::lit(0.5) * sum / T::from_count(t)
    }

    /// Gradient of the minibatch loss; zero for an empty batch.
    pub fn minibatch_gradient(&self, w: &[T], state: &SubsampleState) -> Vec<T> {
        let mut g = vec![T::zero(); w.len()];
        let mut t = 0usize;
        for j in 0..self.n_points() {
            if state.selected[j] {
                let row = self.data.row(j);
                axpy(&mut g, dot(row, w) - self.targets[j], row);
                t += 1;
            }
        }
        if t > 0 {
            let inv = T::one() / T::from_count(t);
            for v in &mut g {
                *v *= inv;
            }
        }
        g
    }

    /// The enumerated joint chain, when small enough.
    pub fn product_chain(&self) -> Option<&FiniteChain<T>> {
        self.product.as_ref()
    }

    /// `E_π[g(w, ζ)]` by exact enumeration of the joint chain.
    pub fn stationary_gradient_mean(&self, w: &[T]) -> Option<Result<Vec<T>, ProblemError>> {
        let chain = self.product.as_ref()?;
        Some((|| {
            let pi = stationary(chain)?;
            let mut mean = vec![T::zero(); w.len()];
            for (idx, &p) in pi.weights().iter().enumerate() {
                let state = self.state_at(idx).expect("index in range");
                axpy(&mut mean, p, &self.minibatch_gradient(w, &state));
            }
            Ok(mean)
        })())
    }

    /// Window invariant on a sampled path, per-phase frequencies against the
    /// closed-form law (thinned, 4 binomial standard errors), and the
    /// minibatch growth bound `‖∇ℒ̃‖² ≤ 2·L_s·N/|B|·ℒ(w)`.
    pub fn verify_dynamics<R: Rng + ?Sized>(&self, steps: usize, samples: usize, rng: &mut R) -> Report {
        let n = self.n_points();
        let b = self.b;
        let mut window = Tally::new("bminsep_window", 0.0);
        let mut last: Vec<Option<usize>> = vec![None; n];
        let thin = 10 * (b + (1.0 / self.rho.to_f64_lossy()).ceil() as usize);
        let mut counts = vec![0usize; b];
        let mut observations = 0usize;
        let mut state = self.sample_stationary(rng);
        for t in 0..steps {
            for i in 0..n {
                if state.selected[i] {
                    if let Some(prev) = last[i] {
                        // Gap between selections must be at least b.
                        window.observe(T::from_count(b), T::from_count(t - prev));
                    }
                    last[i] = Some(t);
                }
            }
            if t % thin == 0 {
                for &s in &state.phases {
                    counts[s] += 1;
                }
                observations += n;
            }
            state = self.advance(&state, rng);
        }
        if window.evaluations() == 0 {
            window.observe(T::zero(), T::zero());
        }
        let mut freq = Tally::new("bminsep_stationary_frequencies", 0.0);
        let obs = observations as f64;
        for (s, &c) in counts.iter().enumerate() {
            let p = self.phase_law.weights()[s].to_f64_lossy();
            let se = (p * (1.0 - p) / obs).sqrt();
            freq.observe((c as f64 / obs - p).abs(), 4.0 * se + 1e-15);
        }
        let mut growth = Tally::new("subsample_minibatch_growth", 1e-9);
        let nf = T::from_count(n);
        for _ in 0..samples {
            let w: Vec<T> = self.w_star.iter().map(|&v| v + T::lit(2.0) * gaussian::<T, _>(rng)).collect();
            let st = self.sample_stationary(rng);
            let t = st.batch_size();
            if t == 0 {
                continue;
            }
            let lhs = norm_sq(&self.minibatch_gradient(&w, &st));
            growth.observe(lhs, T::lit(2.0) * self.sample_smoothness * nf / T::from_count(t) * self.full_loss(&w));
        }
        Report { checks: vec![window.finish(), freq.finish(), growth.finish()] }
    }

    fn decode(&self, mut idx: usize) -> SubsampleState {
        let b = self.b;
        let mut phases = Vec::with_capacity(self.n_points());
        for _ in 0..self.n_points() {
            phases.push(idx % b);
            idx /= b;
        }
        let selected = phases.iter().map(|&s| s == b - 1).collect();
        SubsampleState { phases, selected }
    }
}

fn product_chain<T: Scalar>(n: usize, b: usize, rho: T) -> Result<FiniteChain<T>, ProblemError> {
    let single = bminsep_transition(b, rho);
    let size = b.pow(n as u32);
    let digits = |mut idx: usize| {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(idx % b);
            idx /= b;
        }
        out
    };
    let decoded: Vec<Vec<usize>> = (0..size).map(digits).collect();
    let p = Matrix::from_fn(size, size, |s, t| {
        decoded[s]
            .iter()
            .zip(&decoded[t])
            .fold(T::one(), |acc, (&x, &y)| acc * single.transition()[(x, y)])
    });
    Ok(FiniteChain::new(p)?)
}

/// For independent coordinates `‖⊗μ_i − ⊗ν_i‖ ≤ Σ‖μ_i − ν_i‖`, so
/// `min(2, N·w_k)` bounds the joint worst-case distance.
fn product_bound_mixing<T: Scalar>(n: usize, b: usize, rho: T) -> Result<MixingInfo, ProblemError> {
    if b == 1 {
        return Ok(MixingInfo { tmix: 1, certified: true, method: "independent selections".into() });
    }
    let single = bminsep_transition(b, rho);
    let pi = stationary(&single)?;
    let profile: Vec<T> = worst_case_tv(&single, &pi, 4096)
        .into_iter()
        .map(|w| (w * T::from_count(n)).min(T::lit(2.0)))
        .collect();
    if let Some(tmix) = mixing_time_from_profile(&profile) {
        return Ok(MixingInfo { tmix, certified: true, method: "product bound N·w_k".into() });
    }
    let tmix = windowed_mixing_estimate(&profile)
        .ok_or_else(|| ProblemError::UncertifiedModel("selection chain does not mix within 4096 steps".into()))?;
    Ok(MixingInfo { tmix, certified: false, method: "product bound N·w_k, window-only estimate".into() })
}

impl<T: Scalar> Problem<T> for Subsample<T> {
    type State = SubsampleState;

    fn name(&self) -> &'static str {
        "subsample"
    }

    fn dim(&self) -> usize {
        self.data.cols()
    }

    fn objective(&self, w: &[T]) -> T {
        (T::one() - self.empty_prob) * self.full_loss(w)
    }

    fn optimal_value(&self) -> T {
        (T::one() - self.empty_prob) * self.loss_star
    }

    fn suboptimality(&self, w: &[T]) -> T {
        let e = sub(w, &self.w_star);
        (T::one() - self.empty_prob) * T::lit(0.5) * dot(&e, &self.hessian.mul_vec(&e))
    }

    fn gradient(&self, w: &[T]) -> Vec<T> {
        let s = T::one() - self.empty_prob;
        self.full_gradient(w).into_iter().map(|v| s * v).collect()
    }

    fn minimizer(&self) -> Vec<T> {
        self.w_star.clone()
    }

    fn initial_point(&self) -> Vec<T> {
        vec![T::zero(); self.dim()]
    }

    fn constants(&self) -> ProblemConstants<T> {
        self.constants
    }

    fn mixing(&self) -> MixingInfo {
        self.mixing.clone()
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> SubsampleState {
        self.sample_stationary(rng)
    }

    fn advance<R: Rng + ?Sized>(&self, state: &SubsampleState, rng: &mut R) -> SubsampleState {
        bminsep_step(state, self.b, self.rho, rng).0
    }

    fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> SubsampleState {
        let n = self.n_points();
        let phases: Vec<usize> = (0..n).map(|_| self.phase_law.sample(rng)).collect();
        let selected = if self.b == 1 {
            let rho = self.rho.to_f64_lossy();
            (0..n).map(|_| rng.random::<f64>() < rho).collect()
        } else {
            phases.iter().map(|&s| s == self.b - 1).collect()
        };
        SubsampleState { phases, selected }
    }

    fn markov_gradient(&self, w: &[T], state: &SubsampleState) -> Vec<T> {
        self.minibatch_gradient(w, state)
    }

    fn finite_chain(&self) -> Option<&FiniteChain<T>> {
        self.product.as_ref()
    }

    fn state_index(&self, state: &SubsampleState) -> Option<usize> {
        self.product.as_ref()?;
        Some(state.phases.iter().rev().fold(0, |acc, &s| acc * self.b + s))
    }

    fn state_at(&self, index: usize) -> Option<SubsampleState> {
        let chain = self.product.as_ref()?;
        (index < chain.n_states()).then(|| self.decode(index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_closed_forms() {
        assert_eq!(bminsep_stationary::<f64>(1, 0.3).weights(), &[1.0]);
        let w = bminsep_stationary::<f64>(2, 1.0);
        assert!((w.weights()[0] - 0.5).abs() < 1e-15);
        let w = bminsep_stationary::<f64>(4, 0.5);
        for (a, b) in w.weights().iter().zip([0.4, 0.2, 0.2, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rho_one_alternates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = SubsampleState { phases: vec![0], selected: vec![false] };
        let mut picks = Vec::new();
        for _ in 0..6 {
            let (next, sel) = bminsep_step(&st, 2, 1.0f64, &mut rng);
            picks.push(!sel.is_empty());
            st = next;
        }
        assert_eq!(picks, vec![true, false, true, false, true, false]);
    }

    #[test]
    fn empty_batch_gives_zero_gradient() {
        let p: Subsample<f64> = SubsampleConfig { n_points: 3, dim: 2, b: 2, ..Default::default() }.build().unwrap();
        let st = SubsampleState { phases: vec![0; 3], selected: vec![false; 3] };
        assert!(p.minibatch_gradient(&[1.0, -1.0], &st).iter().all(|&g| g == 0.0));
        assert_eq!(p.minibatch_loss(&[1.0, -1.0], &st), 0.0);
    }

    #[test]
    fn full_batch_is_full_gradient() {
        let p: Subsample<f64> = SubsampleConfig { n_points: 5, dim: 3, b: 2, ..Default::default() }.build().unwrap();
        let st = SubsampleState { phases: vec![1; 5], selected: vec![true; 5] };
        let w = [0.2, 0.1, -0.4];
        for (a, b) in p.minibatch_gradient(&w, &st).iter().zip(p.full_gradient(&w)) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn product_chain_index_round_trip() {
        let p: Subsample<f64> = SubsampleConfig { n_points: 3, dim: 2, b: 2, ..Default::default() }.build().unwrap();
        let chain = p.product_chain().unwrap();
        assert_eq!(chain.n_states(), 8);
        for idx in 0..8 {
            let st = p.state_at(idx).unwrap();
            assert_eq!(p.state_index(&st), Some(idx));
        }
    }

    #[test]
    fn stationary_mean_is_scaled_gradient() {
        let p: Subsample<f64> = SubsampleConfig { n_points: 3, dim: 2, b: 2, ..Default::default() }.build().unwrap();
        let w = [0.7, -0.2];
        let mean = p.stationary_gradient_mean(&w).unwrap().unwrap();
        for (a, b) in mean.iter().zip(p.gradient(&w)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
