use plsgd_core::chain::{mixing_time, stationary, FiniteChain};
use plsgd_core::linalg::{norm, Matrix};
use plsgd_core::poisson::{decompose_step, solve_poisson, verify_v_bounds, verify_v_lipschitz, GrowthConstants, PoissonError};
use plsgd_core::problems::{Problem, QuadraticConfig};
use proptest::prelude::*;

/// `λQ + (1−λ)1νᵀ`, `Q` a sparse random kernel.
fn mixture(n: usize, lambda: f64, raw: &[f64], nu: &[f64]) -> FiniteChain<f64> {
    let s: f64 = nu.iter().sum();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let q: Vec<f64> = (0..n).map(|j| 1e-3 + if raw[i * n + j] < 0.7 { 0.0 } else { raw[i * n + j] }).collect();
            let qs: f64 = q.iter().sum();
            (0..n).map(|j| lambda * q[j] / qs + (1.0 - lambda) * nu[j] / s).collect()
        })
        .collect();
    FiniteChain::from_rows(&rows).unwrap()
}

fn arb_problem(max_n: usize) -> impl Strategy<Value = (FiniteChain<f64>, Matrix<f64>)> {
    (2..=max_n, 1usize..5, 0.05f64..0.9).prop_flat_map(|(n, d, lambda)| {
        (
            prop::collection::vec(0.0f64..1.0, n * n),
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(-3.0f64..3.0, n * d),
        )
            .prop_map(move |(raw, nu, g)| (mixture(n, lambda, &raw, &nu), Matrix::from_vec(n, d, g).unwrap()))
    })
}

/// `Σ_{j<N} (P^j G − 1ḡᵀ)`.
fn truncated_series(chain: &FiniteChain<f64>, g: &Matrix<f64>, gbar: &[f64], terms: usize) -> Matrix<f64> {
    let (n, d) = (g.rows(), g.cols());
    let centered = Matrix::from_fn(n, d, |z, j| g[(z, j)] - gbar[j]);
    let mut term = centered.clone();
    let mut acc = Matrix::zeros(n, d);
    for _ in 0..terms {
        acc = acc.add(&term);
        term = chain.transition().matmul(&term);
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fundamental_solution_matches_series((chain, g) in arb_problem(30)) {
        let pi = stationary(&chain).unwrap();
        let gbar = pi.mean_rows(&g);
        let sol = solve_poisson(&chain, &g, &gbar).unwrap();
        prop_assert!(sol.residual() <= 1e-10);
        prop_assert!(sol.centering() <= 1e-10);
        let series = truncated_series(&chain, &g, &gbar, 200);
        prop_assert!(sol.values().sub(&series).max_abs() <= 1e-8);
    }

    /// `M̃ − d = g(z) − ∇f` on every transition, and `M̃` is conditionally centered.
    #[test]
    fn decomposition_identities((chain, g) in arb_problem(12)) {
        let pi = stationary(&chain).unwrap();
        let gbar = pi.mean_rows(&g);
        let sol = solve_poisson(&chain, &g, &gbar).unwrap();
        let n = chain.n_states();
        for z in 0..n {
            let mut mean = vec![0.0; g.cols()];
            for z1 in 0..n {
                let dec = decompose_step(&sol, z, z1);
                for j in 0..g.cols() {
                    let lhs = dec.markov_mart[j] - dec.correction[j];
                    prop_assert!((lhs - (g[(z, j)] - gbar[j])).abs() <= 1e-10);
                    mean[j] += chain.row(z)[z1] * dec.markov_mart[j];
                }
            }
            prop_assert!(norm(&mean) <= 1e-10);
        }
    }
}

#[test]
fn uncentered_gradient_is_rejected() {
    let chain = FiniteChain::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
    let g = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
    assert!(matches!(solve_poisson(&chain, &g, &[0.3]), Err(PoissonError::NotCentered { .. })));
}

/// Solution-size and Lipschitz bounds on a quadratic with chain-driven offsets.
#[test]
fn solution_bounds_on_quadratic_instance() {
    let cfg = QuadraticConfig {
        curvatures: vec![1.0, 0.5, 2.0],
        chain_states: 6,
        offset_scale: 1.5,
        ..QuadraticConfig::default()
    };
    let p = cfg.build::<f64>().unwrap();
    let chain = p.finite_chain().unwrap();
    let tmix = mixing_time(chain, None).unwrap();
    let c = p.constants();
    let growth = GrowthConstants { a: c.a, b: c.b, c: c.c, l: c.l };
    let g_map = |x: &[f64], z: usize| p.markov_gradient(x, &z);
    let solver = plsgd_core::PoissonSolver::new(chain).unwrap();
    for x in [vec![0.0; 3], vec![1.0, -2.0, 0.5], vec![10.0, 3.0, -7.0]] {
        let sol = solver.solve_at(&x, &g_map).unwrap();
        let report = verify_v_bounds(&sol, tmix, growth, p.suboptimality(&x));
        assert!(report.passed(), "{report:?}");
    }
    let report = verify_v_lipschitz(chain, &g_map, &[1.0, 2.0, 3.0], &[-1.0, 0.0, 4.0], tmix, c.l_g).unwrap();
    assert!(report.passed(), "{report:?}");
}
