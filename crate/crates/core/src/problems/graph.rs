//! Communication graphs and Metropolis–Hastings kernels on them.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ProblemError;
use crate::chain::{Distribution, FiniteChain};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Complete,
    Path,
    Ring,
    Star,
    ErdosRenyi,
}

/// Simple undirected graph without self-loops.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// `edge_prob` is used only by `ErdosRenyi`.
    pub fn build<R: Rng + ?Sized>(kind: GraphKind, n: usize, edge_prob: f64, rng: &mut R) -> Self {
        let mut edges = Vec::new();
        match kind {
            GraphKind::Complete => {
                for i in 0..n {
                    for j in i + 1..n {
                        edges.push((i, j));
                    }
                }
            }
            GraphKind::Path => edges.extend((1..n).map(|i| (i - 1, i))),
            GraphKind::Ring => {
                edges.extend((1..n).map(|i| (i - 1, i)));
                if n > 2 {
                    edges.push((n - 1, 0));
                }
            }
            GraphKind::Star => edges.extend((1..n).map(|i| (0, i))),
            GraphKind::ErdosRenyi => {
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < edge_prob {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i != j && !adjacency[i].contains(&j) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }
        Self { adjacency }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Metropolis–Hastings walk with uniform-neighbour proposals and acceptance
/// `min(1, π_j deg_i / (π_i deg_j))`, mixed with `laziness · I`.
/// Reversible with respect to `target`.
pub fn metropolis_hastings<T: Scalar>(
    graph: &Graph,
    target: &Distribution<T>,
    laziness: T,
) -> Result<FiniteChain<T>, ProblemError> {
    let n = graph.n_nodes();
    if target.len() != n {
        return Err(ProblemError::InvalidConfig(format!("target has {} states for {n} nodes", target.len())));
    }
    if target.weights().iter().any(|&w| w <= T::zero()) {
        return Err(ProblemError::InvalidConfig("target must be strictly positive".into()));
    }
    if !(laziness >= T::zero() && laziness < T::one()) {
        return Err(ProblemError::InvalidConfig(format!("laziness {laziness} outside [0, 1)")));
    }
    if !graph.is_connected() {
        return Err(ProblemError::DisconnectedGraph);
    }
    let pi = target.weights();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        let di = T::from_count(graph.degree(i));
        let mut moved = T::zero();
        for &j in graph.neighbors(i) {
            let dj = T::from_count(graph.degree(j));
            let accept = T::one().min(pi[j] * di / (pi[i] * dj));
            let pij = (T::one() - laziness) * accept / di;
            p[(i, j)] = pij;
            moved += pij;
        }
        p[(i, i)] = T::one() - moved;
    }
    Ok(FiniteChain::new(p)?)
}
