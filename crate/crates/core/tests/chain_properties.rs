use plsgd_core::chain::{
    fundamental_matrix, mixing_certificate, sample_path, stationary, stationary_residual, tv_distance,
    worst_case_tv, ChainError, Distribution, FiniteChain,
};
use plsgd_core::linalg::Matrix;
use proptest::prelude::*;

/// Row-normalized matrix with entries `floor + w`; strictly positive, so the
/// chain is irreducible and aperiodic.
fn chain_from(n: usize, raw: &[f64], floor: f64) -> FiniteChain<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let r: Vec<f64> = (0..n).map(|j| floor + raw[i * n + j]).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect();
    FiniteChain::from_rows(&rows).unwrap()
}

fn arb_chain(max_n: usize) -> impl Strategy<Value = FiniteChain<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        (prop::collection::vec(0.0f64..1.0, n * n), 0.0f64..0.2).prop_map(move |(raw, floor)| {
            // Sparsify so mixing times are not all 1.
            let raw: Vec<f64> = raw.iter().map(|&v| if v < 0.6 { 0.0 } else { v }).collect();
            chain_from(n, &raw, floor + 1e-3)
        })
    })
}

/// `λQ + (1−λ)1νᵀ` with `λ ≤ 1/2`: worst-case distance at most `2λ^k`, so a
/// certificate exists, with `t` growing as `λ → 1/2`.
fn arb_certifiable_chain(max_n: usize) -> impl Strategy<Value = FiniteChain<f64>> {
    (2..=max_n, 0.05f64..0.5).prop_flat_map(|(n, lambda)| {
        (prop::collection::vec(0.0f64..1.0, n * n), prop::collection::vec(0.01f64..1.0, n)).prop_map(
            move |(raw, nu)| {
                let q = chain_from(n, &raw.iter().map(|&v| if v < 0.7 { 0.0 } else { v }).collect::<Vec<_>>(), 1e-3);
                let s: f64 = nu.iter().sum();
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|i| (0..n).map(|j| lambda * q.row(i)[j] + (1.0 - lambda) * nu[j] / s).collect())
                    .collect();
                FiniteChain::from_rows(&rows).unwrap()
            },
        )
    })
}

fn arb_dist(n: usize) -> impl Strategy<Value = Distribution<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        Distribution::new(w.into_iter().map(|v| v / s).collect()).unwrap()
    })
}

fn mat_pow(p: &Matrix<f64>, k: usize) -> Matrix<f64> {
    (0..k).fold(Matrix::identity(p.rows()), |acc, _| acc.matmul(p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tv_is_a_metric((p, q, r) in (2usize..8).prop_flat_map(|n| (arb_dist(n), arb_dist(n), arb_dist(n)))) {
        let pq = tv_distance(&p, &q).unwrap();
        prop_assert!(pq >= 0.0 && pq <= 2.0 + 1e-12);
        prop_assert_eq!(pq, tv_distance(&q, &p).unwrap());
        prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        let triangle = tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap();
        prop_assert!(pq <= triangle + 1e-12);
    }

    /// `‖Σ_z (p(z) − q(z)) u(z)‖ ≤ TV(p, q)·√d·max_z ‖u(z)‖_∞`.
    #[test]
    fn tv_controls_vector_means(
        (p, q, u) in (2usize..8, 1usize..5).prop_flat_map(|(n, d)| {
            (arb_dist(n), arb_dist(n), prop::collection::vec(-5.0f64..5.0, n * d).prop_map(move |v| (d, v)))
        })
    ) {
        let (d, u) = u;
        let n = p.len();
        let diff: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|z| (p.weights()[z] - q.weights()[z]) * u[z * d + j]).sum())
            .collect();
        let lhs = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(lhs <= tv_distance(&p, &q).unwrap() * (d as f64).sqrt() * sup + 1e-12);
    }

    #[test]
    fn stationary_is_a_fixed_point(chain in arb_chain(12)) {
        let pi = stationary(&chain).unwrap();
        prop_assert!(pi.weights().iter().all(|&w| w >= 0.0));
        prop_assert!((pi.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(stationary_residual(chain.transition(), pi.weights()) < 1e-12);
    }

    /// `Z = (I − P + 1πᵀ)^{-1}` satisfies `Z(I − P + 1πᵀ) = I` and `πᵀZ = πᵀ`.
    #[test]
    fn fundamental_matrix_inverts(chain in arb_chain(10)) {
        let n = chain.n_states();
        let pi = stationary(&chain).unwrap();
        let z = fundamental_matrix(&chain).unwrap();
        let m = Matrix::from_fn(n, n, |i, j| {
            f64::from(u8::from(i == j)) - chain.transition()[(i, j)] + pi.weights()[j]
        });
        let prod = z.matmul(&m).sub(&Matrix::identity(n));
        prop_assert!(prod.max_abs() < 1e-10);
        let pz = z.vec_mul(pi.weights());
        for (a, b) in pz.iter().zip(pi.weights()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    /// The certified `t` satisfies `max_z Σ|P^k(z,·) − π| ≤ 2^{−⌊k/t⌋}` for
    /// every `1 ≤ k ≤ 10t`, checked on independently computed powers.
    #[test]
    fn certified_mixing_time_holds(chain in arb_certifiable_chain(10)) {
        let cert = mixing_certificate(&chain, None).unwrap();
        let t = cert.tmix;
        prop_assert!(t >= 1);
        let pi = stationary(&chain).unwrap();
        let p = chain.transition();
        let mut pk = Matrix::identity(chain.n_states());
        for k in 1..=10 * t {
            pk = pk.matmul(p);
            let worst = (0..chain.n_states())
                .map(|z| pk.row(z).iter().zip(pi.weights()).map(|(a, b)| (a - b).abs()).sum::<f64>())
                .fold(0.0f64, f64::max);
            let rhs = 0.5f64.powi((k / t) as i32);
            prop_assert!(worst <= rhs * (1.0 + 1e-9) + 1e-13, "k = {}, t = {}: {} > {}", k, t, worst, rhs);
        }
        // Minimality: t − 1 fails somewhere (or t = 1).
        if t > 1 {
            let s = t - 1;
            let profile = worst_case_tv(&chain, &pi, 10 * t);
            let ok = (1..=10 * t).all(|k| profile[k] <= 0.5f64.powi((k / s) as i32) * (1.0 + 1e-9) + 1e-13);
            prop_assert!(!ok);
        }
    }

    /// Failure to certify means the strict inequality is unattainable for
    /// every window length up to the horizon.
    #[test]
    fn refused_certificates_are_justified(chain in arb_chain(8)) {
        if let Err(ChainError::MixingTimeNotFound { horizon, .. }) = mixing_certificate(&chain, None) {
            let pi = stationary(&chain).unwrap();
            let profile = worst_case_tv(&chain, &pi, horizon);
            for t in 1..=horizon {
                let ok = (1..=horizon).all(|k| profile[k] <= 0.5f64.powi((k / t) as i32) || profile[k] <= 1e-13);
                prop_assert!(!ok, "t = {} works", t);
            }
        }
    }
}

#[test]
fn worst_case_profile_matches_direct_powers() {
    let chain = chain_from(5, &[0.3, 0.0, 0.9, 0.1, 0.0, 0.0, 0.5, 0.0, 0.7, 0.2, 0.6, 0.0, 0.0, 0.4, 0.8, 0.1, 0.2, 0.3, 0.0, 0.0, 0.0, 0.9, 0.0, 0.5, 0.1], 0.01);
    let pi = stationary(&chain).unwrap();
    let profile = worst_case_tv(&chain, &pi, 30);
    for (k, &w) in profile.iter().enumerate() {
        let pk = mat_pow(chain.transition(), k);
        let direct = (0..5)
            .map(|z| pk.row(z).iter().zip(pi.weights()).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        assert!((w - direct).abs() < 1e-13, "k = {k}");
    }
}

#[test]
fn two_cycle_has_no_mixing_time() {
    let chain = FiniteChain::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    assert!(matches!(mixing_certificate(&chain, None), Err(ChainError::MixingTimeNotFound { .. })));
}

#[test]
fn reducible_chain_has_no_unique_stationary_law() {
    let chain = FiniteChain::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5], vec![0.0, 0.5, 0.5]]).unwrap();
    assert!(matches!(stationary(&chain), Err(ChainError::NonUniqueStationary { .. })));
}

/// Occupation frequencies of a long stationary path sit within 4 batch-means
/// standard errors of `π`.
#[test]
fn sample_path_frequencies() {
    let chain = chain_from(4, &[0.2, 0.9, 0.0, 0.1, 0.5, 0.0, 0.5, 0.3, 0.0, 0.7, 0.2, 0.6, 0.4, 0.0, 0.8, 0.1], 0.05);
    let pi = stationary(&chain).unwrap();
    let (batches, len) = (50, 4000);
    let path = sample_path(&chain, &pi, batches * len, 7).unwrap();
    for z in 0..4 {
        let means: Vec<f64> = path
            .chunks(len)
            .map(|c| c.iter().filter(|&&s| s == z).count() as f64 / len as f64)
            .collect();
        let m = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        assert!((m - pi.weights()[z]).abs() <= 4.0 * se, "state {z}: {m} vs {}", pi.weights()[z]);
    }
    assert_eq!(path, sample_path(&chain, &pi, batches * len, 7).unwrap());
}

#[test]
fn text_round_trip() {
    let chain = chain_from(3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], 0.0);
    let back = FiniteChain::<f64>::parse_text(&chain.to_text()).unwrap();
    assert_eq!(back.transition(), chain.transition());
}
