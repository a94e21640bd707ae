//! The SGD iteration `x_{k+1} = x_k − α_k G_k` with `α_k = a/(k+K0)` and
//! `G_k = g(x_k, Z_k) + M_{k+1}`, plus the step-size product machinery
//! `ζ_{m,n} = Π_{j=m}^{n} (1 − μα_j)`.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{axpy, max_abs, norm, norm_sq};
use crate::poisson::{decompose_step, NoiseDecomposition, PoissonError, PoissonSolver};
use crate::problems::Problem;
use crate::report::{Report, Tally};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("a = {a} is below 2/μ = {required}")]
    StepTooSmall { a: f64, required: f64 },
    #[error("iterate left the representable range at step {k}")]
    NonFinite { k: usize },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
}

/// `α_k = a/(k+K0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule<T> {
    a: T,
    k0: T,
}

impl<T: Scalar> StepSchedule<T> {
    pub fn new(a: T, k0: T) -> Result<Self, EngineError> {
        if !(a > T::zero() && a.is_finite()) {
            return Err(EngineError::InvalidSchedule(format!("a = {a} must be positive")));
        }
        if !(k0 > T::zero() && k0.is_finite()) {
            return Err(EngineError::InvalidSchedule(format!("K0 = {k0} must be positive")));
        }
        Ok(Self { a, k0 })
    }

    #[inline]
    pub fn a(&self) -> T {
        self.a
    }

    #[inline]
    pub fn k0(&self) -> T {
        self.k0
    }

    #[inline]
    pub fn stepsize(&self, k: usize) -> T {
        self.a / (T::from_count(k) + self.k0)
    }

    /// Errors unless `a ≥ 2/μ`.
    pub fn check_pl(&self, mu: T) -> Result<(), EngineError> {
        let required = T::lit(2.0) / mu;
        if self.a < required * (T::one() - T::epsilon() * T::lit(8.0)) {
            return Err(EngineError::StepTooSmall { a: self.a.to_f64_lossy(), required: required.to_f64_lossy() });
        }
        Ok(())
    }

    /// `ζ_{m,n}`; 1 for `n < m`.
    pub fn zeta(&self, mu: T, m: i64, n: i64) -> T {
        if n < m {
            return T::one();
        }
        debug_assert!(m >= 0);
        (m..=n).fold(T::one(), |acc, j| acc * (T::one() - mu * self.stepsize(j as usize)))
    }
}

/// Generator for one trial: a seeded ChaCha8 stream selected by `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// What the observer sees at step `k`. Step fields are `None` at `k = horizon`.
#[derive(Debug)]
pub struct StepView<'a, T> {
    pub k: usize,
    pub x: &'a [T],
    pub delta: T,
    pub grad: &'a [T],
    pub grad_norm_sq: T,
    pub state_index: Option<usize>,
    pub stochastic_grad: Option<&'a [T]>,
    pub noise: Option<&'a NoiseDecomposition<T>>,
}

/// Runs `horizon` steps, calling `observe` at every `k = 0..=horizon`.
///
/// Per step the generator is consumed in a fixed order: successor state,
/// then the martingale draw. With `record_noise` and a finite chain one
/// Poisson solve per step supplies `(M̃_{k+1}, d_k)`.
pub fn run_observed<P, T, F>(
    problem: &P,
    schedule: &StepSchedule<T>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
    record_noise: bool,
    mut observe: F,
) -> Result<(), EngineError>
where
    T: Scalar,
    P: Problem<T>,
    F: FnMut(&StepView<'_, T>),
{
    schedule.check_pl(problem.constants().mu)?;
    let solver = match (record_noise, problem.finite_chain()) {
        (true, Some(chain)) => Some(PoissonSolver::new(chain)?),
        _ => None,
    };
    let mut x = problem.initial_point();
    let mut state = problem.initial_state(rng);
    for k in 0..=horizon {
        let delta = problem.suboptimality(&x);
        let grad = problem.gradient(&x);
        if !delta.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(EngineError::NonFinite { k });
        }
        let grad_norm_sq = norm_sq(&grad);
        let state_index = problem.state_index(&state);
        if k == horizon {
            observe(&StepView {
                k,
                x: &x,
                delta,
                grad: &grad,
                grad_norm_sq,
                state_index,
                stochastic_grad: None,
                noise: None,
            });
            break;
        }
        let next = problem.advance(&state, rng);
        let mut g = problem.markov_gradient(&x, &state);
        let mart = problem.martingale_noise(&x, &state, &next, rng);
        if let Some(m) = &mart {
            axpy(&mut g, T::one(), m);
        }
        let noise = match &solver {
            Some(solver) => {
                let sol = solver.solve_at(&x, &|y, z| {
                    problem.markov_gradient(y, &problem.state_at(z).expect("finite chain state"))
                })?;
                let (zk, zk1) = (
                    state_index.expect("finite chain state index"),
                    problem.state_index(&next).expect("finite chain state index"),
                );
                let mut dec = decompose_step(&sol, zk, zk1);
                if let Some(m) = &mart {
                    dec.raw_mart.clone_from(m);
                }
                Some(dec)
            }
            None => None,
        };
        observe(&StepView {
            k,
            x: &x,
            delta,
            grad: &grad,
            grad_norm_sq,
            state_index,
            stochastic_grad: Some(&g),
            noise: noise.as_ref(),
        });
        axpy(&mut x, -schedule.stepsize(k), &g);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::NonFinite { k: k + 1 });
        }
        state = next;
    }
    Ok(())
}

/// Full record of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub iterates: Vec<Vec<T>>,
    pub suboptimality: Vec<T>,
    pub grad_norm_sq: Vec<T>,
    /// `G_k` for `k < horizon`.
    pub stochastic_grads: Vec<Vec<T>>,
    pub gradients: Vec<Vec<T>>,
    pub states: Option<Vec<usize>>,
    pub noise_records: Option<Vec<NoiseDecomposition<T>>>,
    pub seed: u64,
    pub trial: u64,
}

impl<T: Scalar> Trajectory<T> {
    pub fn horizon(&self) -> usize {
        self.suboptimality.len().saturating_sub(1)
    }

    /// CSV rows `trial,k,delta,grad_norm_sq[,markov_mart_norm,correction_norm,raw_mart_norm]`
    /// with 17 significant digits. Writes the header when `header` is set.
    pub fn write_csv<W: Write>(&self, out: &mut W, header: bool) -> io::Result<()> {
        let noise = self.noise_records.as_ref();
        if header {
            write!(out, "trial,k,delta,grad_norm_sq")?;
            if noise.is_some() {
                write!(out, ",markov_mart_norm,correction_norm,raw_mart_norm")?;
            }
            writeln!(out)?;
        }
        for k in 0..self.suboptimality.len() {
            write!(
                out,
                "{},{},{:.16e},{:.16e}",
                self.trial,
                k,
                self.suboptimality[k].to_f64_lossy(),
                self.grad_norm_sq[k].to_f64_lossy()
            )?;
            if let Some(recs) = noise {
                match recs.get(k) {
                    Some(r) => write!(
                        out,
                        ",{:.16e},{:.16e},{:.16e}",
                        norm(&r.markov_mart).to_f64_lossy(),
                        norm(&r.correction).to_f64_lossy(),
                        norm(&r.raw_mart).to_f64_lossy()
                    )?,
                    None => write!(out, ",nan,nan,nan")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Runs trial `trial` of `seed` and keeps everything.
pub fn run_trial<P: Problem<T>, T: Scalar>(
    problem: &P,
    schedule: &StepSchedule<T>,
    horizon: usize,
    seed: u64,
    trial: u64,
    record_noise: bool,
) -> Result<Trajectory<T>, EngineError> {
    let mut traj = Trajectory {
        iterates: Vec::with_capacity(horizon + 1),
        suboptimality: Vec::with_capacity(horizon + 1),
        grad_norm_sq: Vec::with_capacity(horizon + 1),
        stochastic_grads: Vec::with_capacity(horizon),
        gradients: Vec::with_capacity(horizon + 1),
        states: problem.finite_chain().map(|_| Vec::with_capacity(horizon + 1)),
        noise_records: (record_noise && problem.finite_chain().is_some()).then(|| Vec::with_capacity(horizon)),
        seed,
        trial,
    };
    let mut rng = trial_rng(seed, trial);
    run_observed(problem, schedule, horizon, &mut rng, record_noise, |v| {
        traj.iterates.push(v.x.to_vec());
        traj.suboptimality.push(v.delta);
        traj.grad_norm_sq.push(v.grad_norm_sq);
        traj.gradients.push(v.grad.to_vec());
        if let (Some(states), Some(z)) = (traj.states.as_mut(), v.state_index) {
            states.push(z);
        }
        if let Some(g) = v.stochastic_grad {
            traj.stochastic_grads.push(g.to_vec());
        }
        if let (Some(recs), Some(n)) = (traj.noise_records.as_mut(), v.noise) {
            recs.push(n.clone());
        }
    })?;
    Ok(traj)
}

/// `run_trial` with trial index 0.
pub fn run<P: Problem<T>, T: Scalar>(
    problem: &P,
    schedule: &StepSchedule<T>,
    horizon: usize,
    seed: u64,
    record_noise: bool,
) -> Result<Trajectory<T>, EngineError> {
    run_trial(problem, schedule, horizon, seed, 0, record_noise)
}

/// Per-iterate PL, gradient-growth and ABC inequalities, nonnegativity of
/// `Δ_k`, and (when recorded) reassembly `G_k = ∇f + (M̃ − d) + M`.
pub fn verify_trajectory<P: Problem<T>, T: Scalar>(problem: &P, traj: &Trajectory<T>) -> Report {
    let c = problem.constants();
    let two = T::lit(2.0);
    let mut nonneg = Tally::new("suboptimality_nonnegative", 0.0);
    let mut smooth = Tally::new("lemma_g2", 1e-9);
    let mut pl = Tally::new("pl", 1e-9);
    let mut abc = Tally::new("abc_step", 1e-9);
    for (k, &delta) in traj.suboptimality.iter().enumerate() {
        nonneg.observe(-T::lit(1e-12), delta);
        let gsq = traj.grad_norm_sq[k];
        smooth.observe(gsq, two * c.l * delta);
        pl.observe(two * c.mu * delta, gsq);
        if let Some(g) = traj.stochastic_grads.get(k) {
            abc.observe(norm_sq(g), c.a * gsq + c.b * delta + c.c);
        }
    }
    let mut report = Report { checks: vec![nonneg.finish(), smooth.finish(), pl.finish(), abc.finish()] };
    if let Some(recs) = &traj.noise_records {
        let mut reassembly = Tally::new("noise_reassembly", 1e-10);
        for (k, r) in recs.iter().enumerate() {
            let g = &traj.stochastic_grads[k];
            let grad = &traj.gradients[k];
            let resid: Vec<T> = (0..g.len())
                .map(|j| g[j] - grad[j] - (r.markov_mart[j] - r.correction[j] + r.raw_mart[j]))
                .collect();
            let scale = T::one().max(max_abs(g));
            reassembly.observe(max_abs(&resid) / scale, T::zero());
        }
        report.push(reassembly.finish());
    }
    report
}

/// Checks the step-size product bounds on random and exhaustive grids:
/// `ζ_{m,n} ≤ ((m+K0)/(n+K0+1))^{μa}`, the `e((m+K0−1)/(n+K0+1))^{μa}` form
/// for `m ≥ 1`, `Σ α_ℓ ζ_{ℓ+1,k−1} ≤ (e−1)/μ`,
/// `Σ α_ℓ² ζ_{ℓ+1,k−1} ≤ ea²/((μa−1)(k+K0))` and the difference bound
/// `α_{ℓ+1}ζ_{ℓ+2,k−1} − α_ℓζ_{ℓ+1,k−1} ≤ 2(μa−1)/a · α_{ℓ+1}²ζ_{ℓ+2,k−1}`.
pub fn verify_zeta_bounds<T: Scalar, R: Rng + ?Sized>(
    schedule: &StepSchedule<T>,
    mu: T,
    trials: usize,
    max_index: usize,
    rng: &mut R,
) -> Result<Report, EngineError> {
    let (a, k0) = (schedule.a(), schedule.k0());
    let mua = mu * a;
    if k0 < mua || mua <= T::one() {
        return Err(EngineError::HypothesisViolated(format!("need K0 ≥ μa > 1, got K0 = {k0}, μa = {mua}")));
    }
    let e = T::E();
    let mut f1 = Tally::new("lemma_f1", 1e-12);
    let mut f1e = Tally::new("lemma_f1_shifted", 1e-12);
    let mut f2a = Tally::new("lemma_f2a", 1e-12);
    let mut f2b = Tally::new("lemma_f2b", 1e-12);
    let mut f2c = Tally::new("lemma_f2c", 1e-12);

    let check_pair = |m: usize, n: usize, f1: &mut Tally, f1e: &mut Tally| {
        let z = schedule.zeta(mu, m as i64, n as i64);
        let (mf, nf) = (T::from_count(m), T::from_count(n));
        f1.observe(z, ((mf + k0) / (nf + k0 + T::one())).powf(mua));
        if m >= 1 {
            f1e.observe(z, e * ((mf + k0 - T::one()) / (nf + k0 + T::one())).powf(mua));
        }
    };
    let small = max_index.min(200);
    for n in 0..=small {
        for m in 0..=n {
            check_pair(m, n, &mut f1, &mut f1e);
        }
    }
    for _ in 0..trials {
        let n = rng.random_range(0..=max_index);
        let m = rng.random_range(0..=n);
        check_pair(m, n, &mut f1, &mut f1e);
    }

    // Running sums: S_{k+1} = (1 − μα_k)S_k + α_k, likewise for α².
    let (mut s1, mut s2) = (T::zero(), T::zero());
    for k in 1..=max_index {
        let alpha = schedule.stepsize(k - 1);
        let shrink = T::one() - mu * alpha;
        s1 = shrink * s1 + alpha;
        s2 = shrink * s2 + alpha * alpha;
        f2a.observe(s1, (e - T::one()) / mu);
        f2b.observe(s2, e * a * a / ((mua - T::one()) * (T::from_count(k) + k0)));
    }
    for _ in 0..trials.max(1) {
        let k = rng.random_range(2..=max_index.max(2));
        let l = rng.random_range(0..=k - 2);
        let (al, al1) = (schedule.stepsize(l), schedule.stepsize(l + 1));
        let z1 = schedule.zeta(mu, l as i64 + 1, k as i64 - 1);
        let z2 = schedule.zeta(mu, l as i64 + 2, k as i64 - 1);
        f2c.observe(al1 * z2 - al * z1, T::lit(2.0) * (mua - T::one()) / a * al1 * al1 * z2);
    }
    Ok(Report { checks: vec![f1.finish(), f1e.finish(), f2a.finish(), f2b.finish(), f2c.finish()] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepsize_examples() {
        let s = StepSchedule::new(2.0, 8.0).unwrap();
        assert_eq!(s.stepsize(0), 0.25);
        assert_eq!(s.stepsize(2), 0.2);
        assert!(StepSchedule::new(0.0, 1.0).is_err());
        assert!(StepSchedule::new(1.0, -1.0).is_err());
    }

    #[test]
    fn zeta_examples() {
        let s = StepSchedule::<f64>::new(2.0, 4.0).unwrap();
        assert!((s.zeta(1.0, 0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(s.zeta(1.0, 5, 4), 1.0);
        // μα_0 = 1 makes the first factor vanish.
        let s = StepSchedule::new(2.0, 2.0).unwrap();
        assert_eq!(s.zeta(1.0, 0, 3), 0.0);
    }

    #[test]
    fn pl_step_requirement() {
        let s = StepSchedule::new(2.0, 4.0).unwrap();
        assert!(s.check_pl(1.0).is_ok());
        assert!(matches!(s.check_pl(0.5), Err(EngineError::StepTooSmall { .. })));
    }

    #[test]
    fn zeta_hypotheses_enforced() {
        let mut rng = trial_rng(1, 0);
        let s = StepSchedule::new(2.0, 1.0).unwrap();
        assert!(verify_zeta_bounds(&s, 1.0, 10, 50, &mut rng).is_err());
        let s = StepSchedule::new(0.5, 4.0).unwrap();
        assert!(verify_zeta_bounds(&s, 1.0, 10, 50, &mut rng).is_err());
    }

    #[test]
    fn trial_streams_differ() {
        let a: u64 = trial_rng(7, 0).random();
        let b: u64 = trial_rng(7, 1).random();
        let c: u64 = trial_rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
