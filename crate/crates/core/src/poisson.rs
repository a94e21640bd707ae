//! Poisson-equation solutions `V(x,·)` for finite chains and the induced split
//! of Markov noise into a martingale increment and a telescoping correction.
//!
//! With `F = (I − P + 1πᵀ)^{-1}`, `V = F(G − 1∇fᵀ)` solves
//! `(I − P)V = G − 1∇fᵀ` and is π-centered.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, FiniteChain, Fundamental};
use crate::linalg::{norm, norm_sq, sub, Matrix};
use crate::report::{Report, Tally};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoissonError {
    #[error("gradient is not the stationary mean of g (max deviation {gap:e})")]
    NotCentered { gap: f64 },
    #[error("g table is {rows}x{cols}, expected {states} rows and {dim} columns")]
    Shape { rows: usize, cols: usize, states: usize, dim: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Reusable factorization for repeated solves on one chain.
#[derive(Clone, Debug)]
pub struct PoissonSolver<'c, T> {
    chain: &'c FiniteChain<T>,
    fundamental: Fundamental<T>,
}

impl<'c, T: Scalar> PoissonSolver<'c, T> {
    pub fn new(chain: &'c FiniteChain<T>) -> Result<Self, PoissonError> {
        Ok(Self { chain, fundamental: Fundamental::new(chain)? })
    }

    pub fn chain(&self) -> &'c FiniteChain<T> {
        self.chain
    }

    pub fn stationary(&self) -> &[T] {
        self.fundamental.stationary().weights()
    }

    /// Solves for `V` given the table `G` (row `z` = `g(x,z)`) and `∇f(x)`.
    pub fn solve(&self, g_at_x: &Matrix<T>, grad_f: &[T]) -> Result<PoissonSolution<'c, T>, PoissonError> {
        let n = self.chain.n_states();
        if g_at_x.rows() != n || g_at_x.cols() != grad_f.len() {
            return Err(PoissonError::Shape {
                rows: g_at_x.rows(),
                cols: g_at_x.cols(),
                states: n,
                dim: grad_f.len(),
            });
        }
        let pi = self.stationary();
        let mean = g_at_x.vec_mul(pi);
        let gap = mean.iter().zip(grad_f).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        let scale = T::one().max(crate::linalg::max_abs(grad_f));
        if gap > T::tol(1e-8) * scale {
            return Err(PoissonError::NotCentered { gap: gap.to_f64_lossy() });
        }
        let centered = Matrix::from_fn(n, grad_f.len(), |z, j| g_at_x[(z, j)] - grad_f[j]);
        let values = self.fundamental.apply(&centered);
        Ok(PoissonSolution {
            values,
            anchor: None,
            g_table: g_at_x.clone(),
            grad_f: grad_f.to_vec(),
            pi: pi.to_vec(),
            chain: self.chain,
        })
    }

    /// Convenience: tabulates `g(x,·)`, takes `∇f(x) = πᵀG`, and solves.
    pub fn solve_at(
        &self,
        x: &[T],
        g_map: &dyn Fn(&[T], usize) -> Vec<T>,
    ) -> Result<PoissonSolution<'c, T>, PoissonError> {
        let table = gradient_table(self.chain.n_states(), x, g_map);
        let grad = table.vec_mul(self.stationary());
        Ok(self.solve(&table, &grad)?.with_anchor(x.to_vec()))
    }
}

fn gradient_table<T: Scalar>(n: usize, x: &[T], g_map: &dyn Fn(&[T], usize) -> Vec<T>) -> Matrix<T> {
    let rows: Vec<Vec<T>> = (0..n).map(|z| g_map(x, z)).collect();
    Matrix::from_rows(&rows).expect("g_map returns vectors of one length")
}

/// `V(x,·)` as an `n × d` table.
#[derive(Clone, Debug)]
pub struct PoissonSolution<'c, T> {
    values: Matrix<T>,
    anchor: Option<Vec<T>>,
    g_table: Matrix<T>,
    grad_f: Vec<T>,
    pi: Vec<T>,
    chain: &'c FiniteChain<T>,
}

/// One-shot solve; see [`PoissonSolver`] to reuse the factorization.
pub fn solve_poisson<'c, T: Scalar>(
    chain: &'c FiniteChain<T>,
    g_at_x: &Matrix<T>,
    grad_f: &[T],
) -> Result<PoissonSolution<'c, T>, PoissonError> {
    PoissonSolver::new(chain)?.solve(g_at_x, grad_f)
}

impl<'c, T: Scalar> PoissonSolution<'c, T> {
    pub fn with_anchor(mut self, x: Vec<T>) -> Self {
        self.anchor = Some(x);
        self
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn value(&self, z: usize) -> &[T] {
        self.values.row(z)
    }

    pub fn anchor(&self) -> Option<&[T]> {
        self.anchor.as_deref()
    }

    pub fn chain(&self) -> &'c FiniteChain<T> {
        self.chain
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// `∫V(x,z') p(dz'|z)`.
    pub fn conditional_mean(&self, z: usize) -> Vec<T> {
        self.values.vec_mul(self.chain.row(z))
    }

    /// `max_z ‖(V − PV)(z) − (g(x,z) − ∇f(x))‖`.
    pub fn residual(&self) -> T {
        (0..self.chain.n_states())
            .map(|z| {
                let pv = self.conditional_mean(z);
                let r: Vec<T> = (0..self.dim())
                    .map(|j| self.values[(z, j)] - pv[j] - (self.g_table[(z, j)] - self.grad_f[j]))
                    .collect();
                norm(&r)
            })
            .fold(T::zero(), T::max)
    }

    /// `‖πᵀV‖`.
    pub fn centering(&self) -> T {
        norm(&self.values.vec_mul(&self.pi))
    }

    pub fn max_value_norm(&self) -> T {
        (0..self.values.rows()).map(|z| norm(self.value(z))).fold(T::zero(), T::max)
    }

    pub fn max_g_norm(&self) -> T {
        (0..self.g_table.rows()).map(|z| norm(self.g_table.row(z))).fold(T::zero(), T::max)
    }
}

/// Per-step noise pieces: `M̃_{k+1}`, `d_k` and the exogenous `M_{k+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDecomposition<T> {
    pub markov_mart: Vec<T>,
    pub correction: Vec<T>,
    pub raw_mart: Vec<T>,
}

/// `M̃ = V(z_{k+1}) − P(z_k,·)V`, `d = V(z_{k+1}) − V(z_k)`; `raw_mart` is zero.
pub fn decompose_step<T: Scalar>(sol: &PoissonSolution<'_, T>, z_k: usize, z_k1: usize) -> NoiseDecomposition<T> {
    let next = sol.value(z_k1);
    let markov_mart = sub(next, &sol.conditional_mean(z_k));
    let correction = sub(next, sol.value(z_k));
    NoiseDecomposition { markov_mart, correction, raw_mart: vec![T::zero(); sol.dim()] }
}

/// Growth constants entering the bounds on `V`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub l: T,
}

/// Checks, at the anchor of `sol`:
/// `‖V(z)‖ ≤ 2t√d·max‖g‖`, `‖V(z)‖² ≤ 4t²d(uΔ + C)` and, over every
/// positive-probability transition, `‖M̃‖² ≤ 16t²d(uΔ + C)`, `u = 2AL + B`.
pub fn verify_v_bounds<T: Scalar>(
    sol: &PoissonSolution<'_, T>,
    tmix: usize,
    constants: GrowthConstants<T>,
    delta_x: T,
) -> Report {
    let t = T::from_count(tmix);
    let d = T::from_count(sol.dim());
    let u = T::lit(2.0) * constants.a * constants.l + constants.b;
    let growth = u * delta_x.max(T::zero()) + constants.c;
    let sup_v = sol.max_value_norm();

    let mut sup_form = Tally::new("lemma_c1_sup", 1e-9);
    sup_form.observe(sup_v, T::lit(2.0) * t * d.sqrt() * sol.max_g_norm());
    let mut growth_form = Tally::new("lemma_c1_growth", 1e-9);
    growth_form.observe(sup_v * sup_v, T::lit(4.0) * t * t * d * growth);

    let mut mart = Tally::new("corollary_c2", 1e-9);
    let n = sol.chain().n_states();
    let rhs = T::lit(16.0) * t * t * d * growth;
    for z in 0..n {
        let mean = sol.conditional_mean(z);
        for (z1, &p) in sol.chain().row(z).iter().enumerate() {
            if p > T::zero() {
                mart.observe(norm_sq(&sub(sol.value(z1), &mean)), rhs);
            }
        }
    }
    Report { checks: vec![sup_form.finish(), growth_form.finish(), mart.finish()] }
}

/// `max_z ‖V(x1,z) − V(x2,z)‖ ≤ 2t·L_g·√d·‖x1 − x2‖`.
pub fn verify_v_lipschitz<T: Scalar>(
    chain: &FiniteChain<T>,
    g_map: &dyn Fn(&[T], usize) -> Vec<T>,
    x1: &[T],
    x2: &[T],
    tmix: usize,
    lg: T,
) -> Result<Report, PoissonError> {
    let solver = PoissonSolver::new(chain)?;
    let v1 = solver.solve_at(x1, g_map)?;
    let v2 = solver.solve_at(x2, g_map)?;
    let gap = (0..chain.n_states()).map(|z| norm(&sub(v1.value(z), v2.value(z)))).fold(T::zero(), T::max);
    let d = T::from_count(x1.len());
    let rhs = T::lit(2.0) * T::from_count(tmix) * lg * d.sqrt() * norm(&sub(x1, x2));
    let mut tally = Tally::new("lemma_c3_lipschitz", 1e-9);
    tally.observe(gap, rhs);
    Ok(Report { checks: vec![tally.finish()] })
}
