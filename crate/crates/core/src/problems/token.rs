//! Least squares split across the nodes of a graph, optimized by a token
//! that random-walks between nodes and applies the local gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{chain_mixing, gaussian, gaussian_vec, Graph, GraphKind, MixingInfo, Problem, ProblemConstants, ProblemError};
use crate::chain::{stationary, Distribution, FiniteChain};
use crate::linalg::{dot, least_squares, norm_sq, smallest_nonzero, squared_singular_values, sub, Matrix};
use crate::problems::metropolis_hastings;
use crate::report::{Report, Tally};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenConfig {
    pub nodes: usize,
    pub dim: usize,
    pub rows_per_node: usize,
    /// Per-node row counts; overrides `rows_per_node` when present.
    #[serde(default)]
    pub row_counts: Option<Vec<usize>>,
    /// Standard deviation of the additive target noise (non-zero makes the
    /// problem non-realizable, so gradient noise persists at the optimum).
    pub noise_std: f64,
    pub graph: GraphKind,
    #[serde(default = "default_edge_prob")]
    pub edge_prob: f64,
    #[serde(default = "default_laziness")]
    pub laziness: f64,
    #[serde(default)]
    pub instance_seed: u64,
}

fn default_edge_prob() -> f64 {
    0.5
}

fn default_laziness() -> f64 {
    1e-3
}

impl Default for TokenConfig {
    fn default() -> Self {
        Self {
            nodes: 8,
            dim: 10,
            rows_per_node: 20,
            row_counts: None,
            noise_std: 0.5,
            graph: GraphKind::Complete,
            edge_prob: default_edge_prob(),
            laziness: default_laziness(),
            instance_seed: 11,
        }
    }
}

impl TokenConfig {
    /// Gaussian design, targets `Aθ_true + σε`, all from `instance_seed`.
    pub fn build<T: Scalar>(&self) -> Result<TokenRegression<T>, ProblemError> {
        if self.nodes == 0 || self.dim == 0 {
            return Err(ProblemError::InvalidConfig("nodes and dim must be positive".into()));
        }
        let counts = match &self.row_counts {
            Some(c) if c.len() != self.nodes => {
                return Err(ProblemError::InvalidConfig(format!("{} row counts for {} nodes", c.len(), self.nodes)))
            }
            Some(c) => c.clone(),
            None => vec![self.rows_per_node; self.nodes],
        };
        if counts.iter().any(|&c| c == 0) {
            return Err(ProblemError::InvalidConfig("every node needs at least one row".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.instance_seed);
        let theta_true: Vec<T> = gaussian_vec(self.dim, &mut rng);
        let noise = T::lit(self.noise_std);
        let mut blocks = Vec::with_capacity(self.nodes);
        let mut targets = Vec::with_capacity(self.nodes);
        for &rows in &counts {
            let a = Matrix::from_fn(rows, self.dim, |_, _| gaussian(&mut rng));
            let b = a.mul_vec(&theta_true).into_iter().map(|v| v + noise * gaussian::<T, _>(&mut rng)).collect();
            blocks.push(a);
            targets.push(b);
        }
        let graph = Graph::build(self.graph, self.nodes, self.edge_prob, &mut rng);
        TokenRegression::new(blocks, targets, graph, T::lit(self.laziness))
    }
}

/// Node `i` holds `(A^(i), b^(i))` with `N_i` rows; the global loss is
/// `ℒ(θ) = ‖Aθ − b‖²/(2N) = Σ q_i ℒ̃(θ; i)` with `q_i = N_i/N`.
#[derive(Clone, Debug)]
pub struct TokenRegression<T> {
    blocks: Vec<Matrix<T>>,
    targets: Vec<Vec<T>>,
    stacked: Matrix<T>,
    stacked_targets: Vec<T>,
    weights: Distribution<T>,
    graph: Graph,
    chain: FiniteChain<T>,
    hessian: Matrix<T>,
    linear_term: Vec<T>,
    theta_star: Vec<T>,
    loss_star: T,
    block_sigma_max_sq: Vec<T>,
    constants: ProblemConstants<T>,
    mixing: MixingInfo,
}

impl<T: Scalar> TokenRegression<T> {
    /// Assembles the problem and synthesizes the Metropolis–Hastings kernel
    /// with stationary law `q`.
    pub fn new(blocks: Vec<Matrix<T>>, targets: Vec<Vec<T>>, graph: Graph, laziness: T) -> Result<Self, ProblemError> {
        let m = blocks.len();
        if m == 0 || targets.len() != m || graph.n_nodes() != m {
            return Err(ProblemError::InvalidConfig("blocks, targets and graph disagree in size".into()));
        }
        let d = blocks[0].cols();
        for (a, b) in blocks.iter().zip(&targets) {
            if a.cols() != d || a.rows() != b.len() || a.rows() == 0 {
                return Err(ProblemError::InvalidConfig("inconsistent block shapes".into()));
            }
        }
        let counts: Vec<usize> = blocks.iter().map(Matrix::rows).collect();
        let n: usize = counts.iter().sum();
        let nf = T::from_count(n);
        let weights = Distribution::new(counts.iter().map(|&c| T::from_count(c) / nf).collect())?;
        let chain = metropolis_hastings(&graph, &weights, laziness)?;

        let stacked = Matrix::from_vec(n, d, blocks.iter().flat_map(|a| a.as_slice().iter().copied()).collect())?;
        let stacked_targets: Vec<T> = targets.concat();
        let hessian = stacked.transpose().matmul(&stacked).scale(T::one() / nf);
        let linear_term: Vec<T> = stacked.vec_mul(&stacked_targets).into_iter().map(|v| v / nf).collect();
        let theta_star = least_squares(&stacked, &stacked_targets, T::tol(1e-12))?;
        let resid = sub(&stacked.mul_vec(&theta_star), &stacked_targets);
        let loss_star = norm_sq(&resid) / (T::lit(2.0) * nf);

        let spectrum = squared_singular_values(&stacked)?;
        let sigma_min_sq = smallest_nonzero(&spectrum, T::tol(1e-10))
            .ok_or_else(|| ProblemError::UncertifiedModel("design matrix is zero".into()))?;
        let sigma_max_sq = *spectrum.last().expect("nonempty spectrum");
        let block_sigma_max_sq = blocks
            .iter()
            .map(|a| squared_singular_values(a).map(|s| *s.last().expect("nonempty")))
            .collect::<Result<Vec<T>, _>>()?;
        let two = T::lit(2.0);
        let b_abc = blocks
            .iter()
            .zip(&block_sigma_max_sq)
            .map(|(a, &s)| {
                let ni = T::from_count(a.rows());
                two * nf * s / (ni * ni)
            })
            .fold(T::zero(), T::max);
        let l_g = blocks
            .iter()
            .zip(&block_sigma_max_sq)
            .map(|(a, &s)| s / T::from_count(a.rows()))
            .fold(T::zero(), T::max);
        let constants = ProblemConstants {
            mu: sigma_min_sq / nf,
            l: sigma_max_sq / nf,
            a: T::zero(),
            b: b_abc,
            c: b_abc * loss_star,
            l_g,
        };
        let mixing = chain_mixing(&chain)?;
        Ok(Self {
            blocks,
            targets,
            stacked,
            stacked_targets,
            weights,
            graph,
            chain,
            hessian,
            linear_term,
            theta_star,
            loss_star,
            block_sigma_max_sq,
            constants,
            mixing,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_rows(&self) -> usize {
        self.stacked.rows()
    }

    pub fn weights(&self) -> &Distribution<T> {
        &self.weights
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn chain(&self) -> &FiniteChain<T> {
        &self.chain
    }

    pub fn block(&self, i: usize) -> (&Matrix<T>, &[T]) {
        (&self.blocks[i], &self.targets[i])
    }

    pub fn stacked(&self) -> (&Matrix<T>, &[T]) {
        (&self.stacked, &self.stacked_targets)
    }

    /// `σ²_max(A^(i))` per node.
    pub fn block_sigma_max_sq(&self) -> &[T] {
        &self.block_sigma_max_sq
    }

    /// `ℒ̃(θ; i) = ‖A^(i)θ − b^(i)‖²/(2N_i)`.
    pub fn node_loss(&self, theta: &[T], i: usize) -> T {
        let (a, b) = self.block(i);
        norm_sq(&sub(&a.mul_vec(theta), b)) / (T::lit(2.0) * T::from_count(a.rows()))
    }

    /// `∇ℒ̃(θ; i) = A^(i)ᵀ(A^(i)θ − b^(i))/N_i`.
    pub fn node_gradient(&self, theta: &[T], i: usize) -> Vec<T> {
        let (a, b) = self.block(i);
        let ni = T::from_count(a.rows());
        a.vec_mul(&sub(&a.mul_vec(theta), b)).into_iter().map(|v| v / ni).collect()
    }

    /// `Aᵀ(Aθ − b)/N` evaluated from the stacked data.
    pub fn gradient_direct(&self, theta: &[T]) -> Vec<T> {
        let nf = T::from_count(self.n_rows());
        self.stacked
            .vec_mul(&sub(&self.stacked.mul_vec(theta), &self.stacked_targets))
            .into_iter()
            .map(|v| v / nf)
            .collect()
    }

    /// Loss decomposition, stationary-mean gradient identity, kernel law and
    /// reversibility, and the per-node gradient growth bound, at `samples`
    /// random points.
    pub fn verify_identities<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<Report, ProblemError> {
        let q = self.weights.weights();
        let mut loss_id = Tally::new("token_loss_decomposition", 1e-10);
        let mut grad_id = Tally::new("token_stationary_mean_gradient", 1e-10);
        let mut growth = Tally::new("token_node_gradient_growth", 1e-9);
        let two_n = T::lit(2.0) * T::from_count(self.n_rows());
        for _ in 0..samples {
            let theta: Vec<T> = self
                .theta_star
                .iter()
                .map(|&t| t + T::lit(3.0) * gaussian::<T, _>(rng))
                .collect();
            let global = self.objective(&theta);
            let mixed: T = (0..self.n_nodes()).map(|i| q[i] * self.node_loss(&theta, i)).sum();
            loss_id.observe((global - mixed).abs(), T::zero());
            let mut mean = vec![T::zero(); self.dim()];
            for i in 0..self.n_nodes() {
                let gi = self.node_gradient(&theta, i);
                crate::linalg::axpy(&mut mean, q[i], &gi);
                let ni = T::from_count(self.blocks[i].rows());
                growth.observe(norm_sq(&gi), two_n * self.block_sigma_max_sq[i] / (ni * ni) * global);
            }
            let direct = self.gradient_direct(&theta);
            let scale = T::one().max(crate::linalg::max_abs(&direct));
            grad_id.observe(crate::linalg::max_abs(&sub(&mean, &direct)) / scale, T::zero());
        }
        let pi = stationary(&self.chain)?;
        let mut law = Tally::new("token_kernel_stationary_law", 1e-10);
        for (a, b) in pi.weights().iter().zip(q) {
            law.observe((*a - *b).abs(), T::zero());
        }
        let mut balance = Tally::new("token_kernel_detailed_balance", 1e-12);
        let p = self.chain.transition();
        for i in 0..self.n_nodes() {
            for j in 0..self.n_nodes() {
                balance.observe((q[i] * p[(i, j)] - q[j] * p[(j, i)]).abs(), T::zero());
            }
        }
        Ok(Report { checks: vec![loss_id.finish(), grad_id.finish(), growth.finish(), law.finish(), balance.finish()] })
    }
}

impl<T: Scalar> Problem<T> for TokenRegression<T> {
    type State = usize;

    fn name(&self) -> &'static str {
        "token"
    }

    fn dim(&self) -> usize {
        self.stacked.cols()
    }

    fn objective(&self, theta: &[T]) -> T {
        norm_sq(&sub(&self.stacked.mul_vec(theta), &self.stacked_targets)) / (T::lit(2.0) * T::from_count(self.n_rows()))
    }

    fn optimal_value(&self) -> T {
        self.loss_star
    }

    /// `½(θ − θ⋆)ᵀ(AᵀA/N)(θ − θ⋆)`, exact because `Aᵀ(Aθ⋆ − b) = 0`.
    fn suboptimality(&self, theta: &[T]) -> T {
        let e = sub(theta, &self.theta_star);
        T::lit(0.5) * dot(&e, &self.hessian.mul_vec(&e))
    }

    fn gradient(&self, theta: &[T]) -> Vec<T> {
        sub(&self.hessian.mul_vec(theta), &self.linear_term)
    }

    fn minimizer(&self) -> Vec<T> {
        self.theta_star.clone()
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

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.weights.sample(rng)
    }

    fn advance<R: Rng + ?Sized>(&self, state: &usize, rng: &mut R) -> usize {
        self.chain.step(*state, rng)
    }

    fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.weights.sample(rng)
    }

    fn markov_gradient(&self, theta: &[T], node: &usize) -> Vec<T> {
        self.node_gradient(theta, *node)
    }

    fn finite_chain(&self) -> Option<&FiniteChain<T>> {
        Some(&self.chain)
    }

    fn state_index(&self, node: &usize) -> Option<usize> {
        Some(*node)
    }

    fn state_at(&self, index: usize) -> Option<usize> {
        (index < self.n_nodes()).then_some(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_design_constants() {
        // A = I (d = N = 4) split into two nodes of two rows.
        let i4 = Matrix::<f64>::identity(4);
        let blocks = vec![
            Matrix::from_rows(&[i4.row(0).to_vec(), i4.row(1).to_vec()]).unwrap(),
            Matrix::from_rows(&[i4.row(2).to_vec(), i4.row(3).to_vec()]).unwrap(),
        ];
        let targets = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let p = TokenRegression::new(blocks, targets, Graph::from_edges(2, &[(0, 1)]), 1e-3).unwrap();
        let c = p.constants();
        assert!((c.l - 0.25).abs() < 1e-14);
        assert!((c.mu - 0.25).abs() < 1e-14);
        assert!(p.optimal_value().abs() < 1e-14);
        assert!(p.node_gradient(&[1.0, 2.0, 0.0, 0.0], 0).iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn single_node_matches_global_gradient() {
        let cfg = TokenConfig { nodes: 1, dim: 3, rows_per_node: 6, ..TokenConfig::default() };
        let p: TokenRegression<f64> = cfg.build().unwrap();
        let theta = [0.3, -1.0, 2.0];
        let local = p.node_gradient(&theta, 0);
        let global = p.gradient(&theta);
        for (a, b) in local.iter().zip(&global) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn desk_instance_identities() {
        let p: TokenRegression<f64> = TokenConfig::default().build().unwrap();
        let rep = p.verify_identities(200, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(rep.passed(), "{rep:#?}");
        assert!(p.mixing().certified);
    }
}
