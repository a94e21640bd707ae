//! Closed-form constants of the convergence bounds and the bound curves built
//! from them.
//!
//! Notation: `u = 2AL + B`, `t = t_mix`, `e` is Euler's number. The helper
//! constants `𝔪1..𝔪4` are not given explicitly in the source statements; the
//! forms used here come from completing the Cauchy–Schwarz chains:
//!
//! * `⟨∇f, V⟩ ≤ 2t√d·√(2LΔ(uΔ + C)) ≤ 2t√d(√(2Lu)Δ + C√(L/(2u)))`, so
//!   `𝔪1 = 2√(2u/L)` and `𝔪2 = 2C√(L/(2u))`;
//! * the one-step drift `2t√d(L_g√(2LΔ') + L√(uΔ + C))√(uΔ + C)` is at most
//!   `t(L + L_g)√d(𝔪3·L·max(Δ, Δ') + 𝔪4)` with
//!   `𝔪3 = 2·max(√(2u/L), u/L)` and `𝔪4 = 2C·max(√(L/(2u)), 1)`;
//! * with `u = 0` and `C > 0`, `√(2LΔC) ≤ LΔ/2 + C` gives
//!   `𝔪1 = 𝔪3 = 1`, `𝔪2 = 𝔪4 = 2C`.

use std::f64::consts::E;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::norm_sq;
use crate::problems::{gaussian_vec, MixingInfo, Problem, ProblemConstants};
use crate::report::{Report, Tally};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("degenerate constants: {0}")]
    DegenerateConstants(String),
    #[error("K0 = {k0} is below the required {required}")]
    InfeasibleK0 { k0: f64, required: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Everything the bounds depend on except `K0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs<T> {
    pub mu: T,
    pub l: T,
    pub a_abc: T,
    pub b_abc: T,
    pub c_abc: T,
    pub l_g: T,
    pub tmix: T,
    pub d: T,
    /// Stepsize numerator `a`.
    pub a: T,
    pub delta: T,
    /// `Δ0 = f(x0) − f⋆`.
    pub delta0: T,
}

impl<T: Scalar> TheoryInputs<T> {
    pub fn from_constants(c: &ProblemConstants<T>, mixing: &MixingInfo, dim: usize, a: T, delta: T, delta0: T) -> Self {
        Self {
            mu: c.mu,
            l: c.l,
            a_abc: c.a,
            b_abc: c.b,
            c_abc: c.c,
            l_g: c.l_g,
            tmix: T::from_count(mixing.tmix),
            d: T::from_count(dim),
            a,
            delta,
            delta0,
        }
    }

    pub fn from_problem<P: Problem<T>>(problem: &P, a: T, delta: T) -> Self {
        let x0 = problem.initial_point();
        Self::from_constants(&problem.constants(), &problem.mixing(), problem.dim(), a, delta, problem.suboptimality(&x0))
    }

    fn validate(&self) -> Result<(), TheoryError> {
        let fields = [
            ("mu", self.mu),
            ("L", self.l),
            ("A", self.a_abc),
            ("B", self.b_abc),
            ("C", self.c_abc),
            ("L_g", self.l_g),
            ("tmix", self.tmix),
            ("d", self.d),
            ("a", self.a),
            ("Delta0", self.delta0),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < T::zero() {
                return Err(TheoryError::DegenerateConstants(format!("{name} = {v}")));
            }
        }
        if !(self.mu > T::zero()) || !(self.a > T::zero()) {
            return Err(TheoryError::InvalidInput("mu and a must be positive".into()));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(TheoryError::InvalidInput(format!("delta = {} outside (0,1)", self.delta)));
        }
        Ok(())
    }

    /// `u = 2AL + B`.
    pub fn growth(&self) -> T {
        T::lit(2.0) * self.a_abc * self.l + self.b_abc
    }

    fn mu_a(&self) -> T {
        self.mu * self.a
    }

    fn e() -> T {
        T::lit(E)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MConstants<T> {
    pub m1: T,
    pub m2: T,
    pub m3: T,
    pub m4: T,
}

pub fn m_constants<T: Scalar>(inp: &TheoryInputs<T>) -> Result<MConstants<T>, TheoryError> {
    inp.validate()?;
    let (u, l, c) = (inp.growth(), inp.l, inp.c_abc);
    let two = T::lit(2.0);
    if u > T::zero() {
        if !(l > T::zero()) {
            return Err(TheoryError::DegenerateConstants("L = 0 with 2AL + B > 0".into()));
        }
        let r = (two * u / l).sqrt();
        let s = (l / (two * u)).sqrt();
        Ok(MConstants { m1: two * r, m2: two * c * s, m3: two * r.max(u / l), m4: two * c * s.max(T::one()) })
    } else if c > T::zero() {
        Ok(MConstants { m1: T::one(), m2: two * c, m3: T::one(), m4: two * c })
    } else {
        Ok(MConstants { m1: T::zero(), m2: T::zero(), m3: T::zero(), m4: T::zero() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DConstants<T> {
    pub m: MConstants<T>,
    pub d1: T,
    pub d2: T,
}

/// `D1`, `D2` of the Markov-residue bound. Requires `μa > 1`.
pub fn d_constants<T: Scalar>(inp: &TheoryInputs<T>) -> Result<DConstants<T>, TheoryError> {
    let m = m_constants(inp)?;
    let mu_a = inp.mu_a();
    if !(mu_a > T::one()) {
        return Err(TheoryError::HypothesisViolated(format!("mu·a = {mu_a} must exceed 1")));
    }
    let (a, t, l, sd) = (inp.a, inp.tmix, inp.l, inp.d.sqrt());
    let e = TheoryInputs::<T>::e();
    let tail = e * a * a * t * (inp.l + inp.l_g) * sd / (mu_a - T::one());
    let d1 = T::lit(2.0) * a * m.m1 * t * l * sd * inp.delta0 + T::lit(10.0) * a * m.m2 * t * sd + m.m4 * tail;
    let d2 = T::lit(8.0) * a * m.m1 * t * l * sd + m.m3 * tail * l;
    Ok(DConstants { m, d1, d2 })
}

/// `K̄0 = K0 / log(2/δ)`, the smallest admissible value.
pub fn kbar0<T: Scalar>(k0: T, delta: T) -> T {
    k0 / (T::lit(2.0) / delta).ln()
}

/// `log(K0)‾ = log(2K0/δ) / log(2/δ)`, the smallest admissible value.
pub fn log_kbar0<T: Scalar>(k0: T, delta: T) -> T {
    (T::lit(2.0) * k0 / delta).ln() / (T::lit(2.0) / delta).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaConstants<T> {
    pub nu1: T,
    pub nu2: T,
    pub gamma1: T,
    pub gamma2: T,
    pub kbar0: T,
    pub log_kbar0: T,
}

/// `ν1`, `ν2` (independent of `K0`).
pub fn nu_constants<T: Scalar>(inp: &TheoryInputs<T>, dc: &DConstants<T>) -> Result<(T, T), TheoryError> {
    inp.validate()?;
    let two_mu_a = T::lit(2.0) * inp.mu_a();
    if !(two_mu_a > T::lit(3.0)) {
        return Err(TheoryError::HypothesisViolated(format!("2·mu·a = {two_mu_a} must exceed 3")));
    }
    let e = TheoryInputs::<T>::e();
    let (a, l, c, u) = (inp.a, inp.l, inp.c_abc, inp.growth());
    let ae2 = (a * e) * (a * e);
    let mix = inp.tmix * inp.tmix * inp.d + T::one();
    let ratio = if u == T::zero() {
        // Multiplied by u = 0 below; the quotient is never needed.
        T::zero()
    } else if dc.d2 > T::zero() {
        T::lit(2.0) * inp.delta0 + dc.d1 / dc.d2 + e * a * a * c * l / dc.d2
    } else {
        return Err(TheoryError::DegenerateConstants("D2 = 0 with 2AL + B > 0".into()));
    };
    let nu1 = T::lit(32.0) * ae2 * l * mix * (u / (two_mu_a - T::lit(3.0)) * ratio + c / (two_mu_a - T::lit(2.0)));
    let nu2 = T::lit(64.0) * ae2 * l * mix * u / (two_mu_a - T::lit(3.0));
    Ok((nu1, nu2))
}

/// `ν1, ν2, Γ1, Γ2` at a given `K0`.
pub fn gamma_constants<T: Scalar>(inp: &TheoryInputs<T>, dc: &DConstants<T>, k0: T) -> Result<GammaConstants<T>, TheoryError> {
    let (nu1, nu2) = nu_constants(inp, dc)?;
    if !(k0 > T::zero()) {
        return Err(TheoryError::InvalidInput(format!("K0 = {k0} must be positive")));
    }
    let e = TheoryInputs::<T>::e();
    let gamma1 = e * inp.a * inp.a * inp.c_abc * inp.l + T::lit(2.0) * (dc.d1 + dc.d2 * inp.delta0);
    let kb = kbar0(k0, inp.delta);
    let lb = log_kbar0(k0, inp.delta);
    let gamma2 = T::lit(4.0) * nu1 * (T::one() + T::lit(3.0) * lb)
        + T::lit(2.0) * (nu1 * (kb * inp.delta0 + T::lit(2.0) * gamma1)).sqrt();
    Ok(GammaConstants { nu1, nu2, gamma1, gamma2, kbar0: kb, log_kbar0: lb })
}

/// `c1 log(2c1/δ)` with `c1 = 12C log(12C) + 6C`; solves
/// `K ≥ C log(2K/δ)(1 + log(2K/δ)/log(2/δ))` for `C ≥ 1`.
pub fn lemma_g4_solution<T: Scalar>(c: T, delta: T) -> T {
    let c1 = T::lit(12.0) * c * (T::lit(12.0) * c).ln() + T::lit(6.0) * c;
    c1 * (T::lit(2.0) * c1 / delta).ln()
}

/// Whether `K ≥ C log(2K/δ)(1 + log(2K/δ)/log(2/δ))`.
pub fn lemma_g4_holds<T: Scalar>(k: T, c: T, delta: T) -> bool {
    let lk = (T::lit(2.0) * k / delta).ln();
    k >= c * lk * (T::one() + lk / (T::lit(2.0) / delta).ln())
}

/// The four terms of the high-probability `K0` requirement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct K0Terms<T> {
    pub smoothness: T,
    pub pl: T,
    pub markov: T,
    pub concentration: T,
}

impl<T: Scalar> K0Terms<T> {
    pub fn max(&self) -> T {
        self.smoothness.max(self.pl).max(self.markov).max(self.concentration)
    }
}

/// `max{(aL/2)(2A + B/μ), μa, 2D2, c1 log(2c1/δ)}` where `c1` is the
/// [`lemma_g4_solution`] constant at `C' = max(4ν2, 1)`; for `C' = 4ν2` this is exactly
/// `24ν2(2 log(48ν2) + 1) log(48ν2(2 log(48ν2) + 1)/δ)`. The clamp keeps the
/// solver inside its `C ≥ 1` domain; the term is `0` when `ν2 = 0`.
pub fn k0_terms<T: Scalar>(inp: &TheoryInputs<T>, dc: &DConstants<T>, nu2: T) -> K0Terms<T> {
    let concentration = if nu2 > T::zero() {
        lemma_g4_solution((T::lit(4.0) * nu2).max(T::one()), inp.delta)
    } else {
        T::zero()
    };
    K0Terms {
        smoothness: inp.a * inp.l / T::lit(2.0) * (T::lit(2.0) * inp.a_abc + inp.b_abc / inp.mu),
        pl: inp.mu_a(),
        markov: T::lit(2.0) * dc.d2,
        concentration,
    }
}

pub fn k0_lower_bound<T: Scalar>(inp: &TheoryInputs<T>) -> Result<T, TheoryError> {
    let dc = d_constants(inp)?;
    let (_, nu2) = nu_constants(inp, &dc)?;
    Ok(k0_terms(inp, &dc, nu2).max())
}

/// `max{aL(2A + B/μ), μa, 2D2}`, the hypothesis of the expected bound.
pub fn expected_k0_lower_bound<T: Scalar>(inp: &TheoryInputs<T>, dc: &DConstants<T>) -> T {
    (inp.a * inp.l * (T::lit(2.0) * inp.a_abc + inp.b_abc / inp.mu)).max(inp.mu_a()).max(T::lit(2.0) * dc.d2)
}

/// `Λ(k, δ) = K0Δ0 + Γ1 + Γ2 log(2K0/δ) + Γ2 log(2k/δ)`.
pub fn lambda<T: Scalar>(delta0: T, k0: T, gamma1: T, gamma2: T, delta: T, k: usize) -> T {
    let two = T::lit(2.0);
    k0 * delta0 + gamma1 + gamma2 * (two * k0 / delta).ln() + gamma2 * (two * T::from_count(k) / delta).ln()
}

/// Constants of the martingale-only bound (no Markov component).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleOnlyConstants<T> {
    pub nu1_hat: T,
    pub nu2_hat: T,
    pub gamma1_hat: T,
    pub gamma2_hat: T,
    pub k0_required: T,
}

pub fn martingale_only_constants<T: Scalar>(inp: &TheoryInputs<T>, k0: T) -> Result<MartingaleOnlyConstants<T>, TheoryError> {
    inp.validate()?;
    let two_mu_a = T::lit(2.0) * inp.mu_a();
    if !(two_mu_a > T::lit(3.0)) {
        return Err(TheoryError::HypothesisViolated(format!("2·mu·a = {two_mu_a} must exceed 3")));
    }
    let e = TheoryInputs::<T>::e();
    let (a, l, c) = (inp.a, inp.l, inp.c_abc);
    let ae2 = (a * e) * (a * e);
    let eacl = e * a * a * c * l;
    let w = T::lit(2.0) * l * (inp.a_abc + T::one()) + inp.b_abc;
    let nu1_hat = T::lit(8.0) * l * ae2 * (w / (two_mu_a - T::lit(3.0)) * inp.delta0 + c / (inp.mu_a() - T::one()))
        + eacl / T::lit(16.0);
    let nu2_hat = T::lit(8.0) * l * ae2 * w / (two_mu_a - T::lit(3.0));
    let gamma1_hat = eacl / T::lit(2.0);
    let head = if nu1_hat > T::zero() {
        T::lit(12.0) * nu1_hat * (T::one() + (T::lit(8.0) * nu1_hat).ln())
    } else {
        T::zero()
    };
    let gamma2_hat = head + T::lit(2.0) * (nu1_hat * (kbar0(k0, inp.delta) * inp.delta0 + eacl)).sqrt();
    let conc = if nu2_hat > T::zero() {
        T::lit(8.0) * nu2_hat * (T::lit(16.0) * nu2_hat / inp.delta).ln()
    } else {
        T::zero()
    };
    let k0_required = (a * l / T::lit(2.0) * (T::lit(2.0) * inp.a_abc + inp.b_abc / inp.mu)).max(inp.mu_a()).max(conc);
    Ok(MartingaleOnlyConstants { nu1_hat, nu2_hat, gamma1_hat, gamma2_hat, k0_required })
}

/// How `K0` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum K0Choice<T> {
    /// The high-probability requirement.
    Auto,
    /// The (weaker) expected-bound requirement.
    AutoExpected,
    Value(T),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub a_at_least_two_over_mu: bool,
    pub mu_a_above_one: bool,
    pub two_mu_a_above_three: bool,
    pub k0_feasible_high_probability: bool,
    pub k0_feasible_expected: bool,
    pub mixing_certified: bool,
}

/// Snapshot of every derived constant at one `(inputs, K0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants<T> {
    pub inputs: TheoryInputs<T>,
    pub k0: T,
    pub m: MConstants<T>,
    pub d1: T,
    pub d2: T,
    pub nu1: T,
    pub nu2: T,
    pub gamma1: T,
    pub gamma2: T,
    pub kbar0: T,
    pub log_kbar0: T,
    pub k0_terms: K0Terms<T>,
    pub k0_required: T,
    pub k0_required_expected: T,
    pub martingale_only: MartingaleOnlyConstants<T>,
    pub hypotheses: Hypotheses,
}

impl<T: Scalar> TheoryConstants<T> {
    pub fn compute(inputs: TheoryInputs<T>, k0: K0Choice<T>, mixing_certified: bool) -> Result<Self, TheoryError> {
        let dc = d_constants(&inputs)?;
        let (_, nu2) = nu_constants(&inputs, &dc)?;
        let terms = k0_terms(&inputs, &dc, nu2);
        let k0_required = terms.max();
        let k0_required_expected = expected_k0_lower_bound(&inputs, &dc);
        let k0 = match k0 {
            K0Choice::Auto => k0_required,
            K0Choice::AutoExpected => k0_required_expected,
            K0Choice::Value(v) => v,
        };
        let g = gamma_constants(&inputs, &dc, k0)?;
        let martingale_only = martingale_only_constants(&inputs, k0)?;
        let mu_a = inputs.mu * inputs.a;
        let hypotheses = Hypotheses {
            a_at_least_two_over_mu: mu_a >= T::lit(2.0) * (T::one() - T::epsilon()),
            mu_a_above_one: mu_a > T::one(),
            two_mu_a_above_three: T::lit(2.0) * mu_a > T::lit(3.0),
            k0_feasible_high_probability: k0 >= k0_required,
            k0_feasible_expected: k0 >= k0_required_expected,
            mixing_certified,
        };
        Ok(Self {
            inputs,
            k0,
            m: dc.m,
            d1: dc.d1,
            d2: dc.d2,
            nu1: g.nu1,
            nu2: g.nu2,
            gamma1: g.gamma1,
            gamma2: g.gamma2,
            kbar0: g.kbar0,
            log_kbar0: g.log_kbar0,
            k0_terms: terms,
            k0_required,
            k0_required_expected,
            martingale_only,
            hypotheses,
        })
    }

    fn require_hp(&self) -> Result<(), TheoryError> {
        if self.hypotheses.k0_feasible_high_probability {
            Ok(())
        } else {
            Err(TheoryError::InfeasibleK0 { k0: self.k0.to_f64_lossy(), required: self.k0_required.to_f64_lossy() })
        }
    }

    /// `Λ(k, δ)` at this snapshot's `K0`.
    pub fn lambda(&self, k: usize) -> T {
        lambda(self.inputs.delta0, self.k0, self.gamma1, self.gamma2, self.inputs.delta, k)
    }

    /// `Λ(k, δ)/(k + K0)` for `k ≥ 1`.
    pub fn hp_envelope(&self, k: usize) -> Result<T, TheoryError> {
        self.require_hp()?;
        if k == 0 {
            return Err(TheoryError::InvalidInput("the envelope is stated for k ≥ 1".into()));
        }
        Ok(self.lambda(k) / (T::from_count(k) + self.k0))
    }

    /// Threshold of the good event `E_k`: `Δ0` at `k = 0`, the envelope after.
    pub fn good_event_bound(&self, k: usize) -> Result<T, TheoryError> {
        if k == 0 {
            self.require_hp()?;
            Ok(self.inputs.delta0)
        } else {
            self.hp_envelope(k)
        }
    }

    /// `(Δ0(K0 + 2D2) + ea²CL + 2D1)/(k + K0)`.
    pub fn expected_bound(&self, k: usize) -> Result<T, TheoryError> {
        if !self.hypotheses.k0_feasible_expected {
            return Err(TheoryError::InfeasibleK0 {
                k0: self.k0.to_f64_lossy(),
                required: self.k0_required_expected.to_f64_lossy(),
            });
        }
        let i = &self.inputs;
        let num = i.delta0 * (self.k0 + T::lit(2.0) * self.d2)
            + T::lit(E) * i.a * i.a * i.c_abc * i.l
            + T::lit(2.0) * self.d1;
        Ok(num / (T::from_count(k) + self.k0))
    }

    /// Martingale-only envelope `(Δ0K0 + Γ̂1 + Γ̂2 log(2k/δ))/(k + K0)`, `k ≥ 1`.
    pub fn martingale_only_envelope(&self, k: usize) -> Result<T, TheoryError> {
        let mo = &self.martingale_only;
        if self.k0 < mo.k0_required {
            return Err(TheoryError::InfeasibleK0 { k0: self.k0.to_f64_lossy(), required: mo.k0_required.to_f64_lossy() });
        }
        if k == 0 {
            return Err(TheoryError::InvalidInput("the envelope is stated for k ≥ 1".into()));
        }
        let kk = T::from_count(k);
        let num = self.inputs.delta0 * self.k0 + mo.gamma1_hat + mo.gamma2_hat * (T::lit(2.0) * kk / self.inputs.delta).ln();
        Ok(num / (kk + self.k0))
    }
}

/// Samples `x` uniformly in the ball of radius `radius` around the minimizer
/// and checks both growth conditions with the problem's certified constants:
/// `‖g(x,z)‖² ≤ A‖∇f‖² + BΔ + C` and `‖g(x,z) + M‖² ≤ A‖∇f‖² + BΔ + C`.
/// Finite chains are checked at every state; others at stationary draws.
pub fn abc_verify<T, P, R>(problem: &P, samples: usize, radius: T, rng: &mut R) -> Report
where
    T: Scalar,
    P: Problem<T>,
    R: Rng + ?Sized,
{
    let c = problem.constants();
    let d = problem.dim();
    let center = problem.minimizer();
    let mut markov = Tally::new("abc_markov_gradient", 1e-9);
    let mut noisy = Tally::new("abc_noisy_gradient", 1e-9);
    let n_states = problem.finite_chain().map(|ch| ch.n_states());
    for _ in 0..samples {
        let dir: Vec<T> = gaussian_vec(d, rng);
        let scale = radius * T::lit(rng.random::<f64>().powf(1.0 / d as f64)) / crate::linalg::norm(&dir).max(T::min_positive_value());
        let x: Vec<T> = center.iter().zip(&dir).map(|(&c0, &v)| c0 + scale * v).collect();
        let grad = problem.gradient(&x);
        let rhs = c.a * norm_sq(&grad) + c.b * problem.suboptimality(&x) + c.c;
        let states: Vec<P::State> = match n_states {
            Some(n) => (0..n).filter_map(|i| problem.state_at(i)).collect(),
            None => vec![problem.sample_stationary(rng)],
        };
        for z in states {
            let g = problem.markov_gradient(&x, &z);
            markov.observe(norm_sq(&g), rhs);
            let next = problem.advance(&z, rng);
            let total = match problem.martingale_noise(&x, &z, &next, rng) {
                Some(m) => crate::linalg::add(&g, &m),
                None => g,
            };
            noisy.observe(norm_sq(&total), rhs);
        }
    }
    Report { checks: vec![markov.finish(), noisy.finish()] }
}

/// PL and the smoothness corollary `‖∇f‖² ≤ 2LΔ` at random points.
pub fn pl_verify<T, P, R>(problem: &P, samples: usize, radius: T, rng: &mut R) -> Report
where
    T: Scalar,
    P: Problem<T>,
    R: Rng + ?Sized,
{
    let c = problem.constants();
    let d = problem.dim();
    let center = problem.minimizer();
    let mut pl = Tally::new("pl_inequality", 1e-9);
    let mut smooth = Tally::new("smoothness_gradient_bound", 1e-9);
    for _ in 0..samples {
        let dir: Vec<T> = gaussian_vec(d, rng);
        let x: Vec<T> = center.iter().zip(&dir).map(|(&c0, &v)| c0 + radius * v).collect();
        let g2 = norm_sq(&problem.gradient(&x));
        let delta = problem.suboptimality(&x);
        pl.observe(T::lit(2.0) * c.mu * delta, g2);
        smooth.observe(g2, T::lit(2.0) * c.l * delta);
    }
    Report { checks: vec![pl.finish(), smooth.finish()] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn worked() -> TheoryInputs<f64> {
        TheoryInputs {
            mu: 1.0,
            l: 1.0,
            a_abc: 1.0,
            b_abc: 1.0,
            c_abc: 1.0,
            l_g: 1.0,
            tmix: 2.0,
            d: 2.0,
            a: 3.0,
            delta: 0.1,
            delta0: 1.0,
        }
    }

    /// `(c1 + c2 log(y/δ))/(y + c3) ≤ (c1 + c2 log(c3/δ))/c3`.
    fn log_ratio_dominated(c1: f64, c2: f64, c3: f64, delta: f64, y: f64) -> bool {
        let lhs = (c1 + c2 * (y / delta).ln()) / (y + c3);
        let rhs = (c1 + c2 * (c3 / delta).ln()) / c3;
        lhs <= rhs * (1.0 + 1e-12)
    }

    #[test]
    fn noiseless_reduces_to_pl_term() {
        let inp = TheoryInputs { a_abc: 0.0, b_abc: 0.0, c_abc: 0.0, ..worked() };
        let dc = d_constants(&inp).unwrap();
        assert_eq!((dc.d1, dc.d2), (0.0, 0.0));
        assert_eq!(k0_lower_bound(&inp).unwrap(), 3.0);
        let g = gamma_constants(&inp, &dc, 10.0).unwrap();
        assert_eq!((g.nu1, g.nu2, g.gamma1, g.gamma2), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn c_zero_drops_second_d1_term() {
        let inp = TheoryInputs { c_abc: 0.0, ..worked() };
        let dc = d_constants(&inp).unwrap();
        assert_eq!(dc.m.m2, 0.0);
        assert_eq!(dc.m.m4, 0.0);
        let expect = 2.0 * inp.a * dc.m.m1 * inp.tmix * inp.l * inp.d.sqrt() * inp.delta0;
        assert!((dc.d1 - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn zero_noise_gamma_structure() {
        let inp = TheoryInputs { c_abc: 0.0, delta0: 0.0, ..worked() };
        let dc = DConstants { m: m_constants(&inp).unwrap(), d1: 0.0, d2: 1.0 };
        let g = gamma_constants(&inp, &dc, 50.0).unwrap();
        assert_eq!(g.gamma1, 0.0);
        assert!((g.gamma2 - 4.0 * g.nu1 * (1.0 + 3.0 * g.log_kbar0)).abs() <= 1e-12 * g.gamma2);
    }

    #[test]
    fn hypotheses_enforced() {
        let inp = TheoryInputs { a: 1.2, ..worked() };
        assert!(matches!(nu_constants(&inp, &d_constants(&inp).unwrap()), Err(TheoryError::HypothesisViolated(_))));
        let inp = TheoryInputs { a: 0.9, ..worked() };
        assert!(matches!(d_constants(&inp), Err(TheoryError::HypothesisViolated(_))));
    }

    #[test]
    fn envelope_refuses_infeasible_k0() {
        let tc = TheoryConstants::compute(worked(), K0Choice::Value(10.0), true).unwrap();
        assert!(matches!(tc.hp_envelope(5), Err(TheoryError::InfeasibleK0 { .. })));
        let tc = TheoryConstants::compute(worked(), K0Choice::Auto, true).unwrap();
        assert!(tc.hp_envelope(5).is_ok());
        assert_eq!(tc.good_event_bound(0).unwrap(), 1.0);
    }

    #[test]
    fn k0_terms_each_dominated() {
        let inp = worked();
        let dc = d_constants(&inp).unwrap();
        let (_, nu2) = nu_constants(&inp, &dc).unwrap();
        let t = k0_terms(&inp, &dc, nu2);
        let k = t.max();
        for v in [t.smoothness, t.pl, t.markov, t.concentration] {
            assert!(v <= k);
        }
        assert!(lemma_g4_holds(t.concentration, 4.0 * nu2, inp.delta));
        let halved = k0_terms(&TheoryInputs { delta: 0.05, ..inp }, &dc, nu2);
        assert!(halved.concentration > t.concentration);
    }

    #[test]
    fn kbar_admissibility() {
        for (k0, delta) in [(10.0, 0.5), (1e4, 0.01), (3.0, 0.9)] {
            let l2 = (2.0f64 / delta).ln();
            assert!(kbar0(k0, delta) >= k0 / l2 * (1.0 - 1e-15));
            assert!(log_kbar0(k0, delta) >= (2.0 * k0 / delta).ln() / l2 * (1.0 - 1e-15));
        }
    }

    proptest! {
        #[test]
        fn envelope_numerator_nondecreasing(k in 1usize..100_000, step in 1usize..1000) {
            let tc = TheoryConstants::compute(worked(), K0Choice::Auto, true).unwrap();
            let a = tc.hp_envelope(k).unwrap() * (k as f64 + tc.k0);
            let b = tc.hp_envelope(k + step).unwrap() * ((k + step) as f64 + tc.k0);
            prop_assert!(b >= a);
            prop_assert!(tc.expected_bound(k + step).unwrap() < tc.expected_bound(k).unwrap());
        }

        #[test]
        fn envelope_peak_bounded_by_start(k in 1usize..1_000_000) {
            let tc = TheoryConstants::compute(worked(), K0Choice::Auto, true).unwrap();
            // Γ2 log(2k/δ) over k + K0 never exceeds its value at k = K0 − shift.
            let c1 = tc.k0 * tc.inputs.delta0 + tc.gamma1 + tc.gamma2 * (2.0 * tc.k0 / tc.inputs.delta).ln()
                + tc.gamma2 * 2f64.ln();
            prop_assert!(log_ratio_dominated(c1, tc.gamma2, tc.k0, tc.inputs.delta, k as f64));
            let bound = (c1 + tc.gamma2 * (tc.k0 / tc.inputs.delta).ln()) / tc.k0;
            prop_assert!(tc.hp_envelope(k).unwrap() <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn nu_affine_in_mixing_factor(t in 1.0f64..20.0, d in 1.0f64..50.0) {
            let base = TheoryInputs { tmix: t, d, ..worked() };
            let dc = d_constants(&worked()).unwrap();
            let (n1a, n2a) = nu_constants(&base, &dc).unwrap();
            let (n1b, n2b) = nu_constants(&TheoryInputs { tmix: 2.0 * t, ..base }, &dc).unwrap();
            let ratio = (4.0 * t * t * d + 1.0) / (t * t * d + 1.0);
            prop_assert!((n1b / n1a - ratio).abs() < 1e-12 * ratio);
            prop_assert!((n2b / n2a - ratio).abs() < 1e-12 * ratio);
        }
    }
}
