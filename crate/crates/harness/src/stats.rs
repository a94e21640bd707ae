//! Log-log rate fits, nearest-rank quantiles and the summary grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fewest trajectories for which an empirical quantile is reported.
pub const MIN_QUANTILE_TRIALS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("value at k = {k} is {value}, not positive")]
    NonPositiveValues { k: usize, value: f64 },
    #[error("{points} points with k ≥ {k_min}; at least 2 needed")]
    TooFewPoints { points: usize, k_min: usize },
    #[error("{trials} trajectories; at least {MIN_QUANTILE_TRIALS} needed")]
    TooFewTrials { trials: usize },
    #[error("quantile level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("trajectories have different lengths")]
    RaggedInput,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
    pub k_min: usize,
}

/// OLS of `log(value)` on `log(k)` over the pairs with `k ≥ max(k_min, 1)`.
pub fn fit_rate(ks: &[usize], values: &[f64], k_min: usize) -> Result<RateFit, StatsError> {
    assert_eq!(ks.len(), values.len(), "ks and values differ in length");
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&k, &v) in ks.iter().zip(values) {
        if k < k_min.max(1) {
            continue;
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(StatsError::NonPositiveValues { k, value: v });
        }
        xs.push((k as f64).ln());
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooFewPoints { points: n, k_min });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    // A constant sequence is fitted exactly by the zero slope.
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit { slope, intercept, r2, points: n, k_min })
}

/// [`fit_rate`] on a dense curve indexed by `k`.
pub fn fit_rate_dense(curve: &[f64], k_min: usize) -> Result<RateFit, StatsError> {
    let ks: Vec<usize> = (0..curve.len()).collect();
    fit_rate(&ks, curve, k_min)
}

/// Order statistic of rank `⌈q·n⌉` (nearest rank). Reorders `values`.
pub fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

/// Per-`k` nearest-rank quantile across trajectories.
pub fn quantile_curve(trajectories: &[Vec<f64>], q: f64) -> Result<Vec<f64>, StatsError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(StatsError::InvalidLevel(q));
    }
    if trajectories.len() < MIN_QUANTILE_TRIALS {
        return Err(StatsError::TooFewTrials { trials: trajectories.len() });
    }
    let len = trajectories[0].len();
    if trajectories.iter().any(|t| t.len() != len) {
        return Err(StatsError::RaggedInput);
    }
    let mut column = vec![0.0; trajectories.len()];
    Ok((0..len)
        .map(|k| {
            for (c, t) in column.iter_mut().zip(trajectories) {
                *c = t[k];
            }
            nearest_rank(&mut column, q)
        })
        .collect())
}

/// `0..=min(10, horizon)`, then `per_decade` log-spaced points, then `horizon`.
pub fn log_grid(horizon: usize, per_decade: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (0..=horizon.min(10)).collect();
    let step = 10f64.powf(1.0 / per_decade.max(1) as f64);
    let mut x = 10.0f64;
    loop {
        x *= step;
        let k = x.round() as usize;
        if k >= horizon {
            break;
        }
        if k > *grid.last().expect("non-empty") {
            grid.push(k);
        }
    }
    if *grid.last().expect("non-empty") != horizon {
        grid.push(horizon);
    }
    grid
}

/// Mean and standard error from running sums over `n` samples.
pub fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law() {
        let curve: Vec<f64> = (0..2000).map(|k| 3.0 / k.max(1) as f64).collect();
        let fit = fit_rate_dense(&curve, 10).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn constant_sequence_has_zero_slope() {
        let fit = fit_rate_dense(&[2.5; 50], 1).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    /// `c/k + c'/k²` over `k ≥ 100`: the local slope is `−1 − (c'/c)/(k + c'/c)`,
    /// between −1 and `−1 − 0.02/1.02` when `c'/c ≤ 2`.
    #[test]
    fn second_order_perturbation() {
        let curve: Vec<f64> = (0..100_001).map(|k| 4.0 / k.max(1) as f64 + 8.0 / (k.max(1) as f64).powi(2)).collect();
        let fit = fit_rate_dense(&curve, 100).unwrap();
        assert!(fit.slope > -1.02 && fit.slope < -0.98, "{}", fit.slope);
    }

    #[test]
    fn non_positive_values_rejected() {
        let mut curve = vec![1.0; 20];
        curve[15] = 0.0;
        assert_eq!(fit_rate_dense(&curve, 1), Err(StatsError::NonPositiveValues { k: 15, value: 0.0 }));
        // Values below k_min are ignored.
        assert!(fit_rate_dense(&curve, 16).is_ok());
        assert!(matches!(fit_rate_dense(&curve, 19), Err(StatsError::TooFewPoints { .. })));
    }

    #[test]
    fn quantile_of_identical_curves() {
        let curve: Vec<f64> = (0..30).map(|k| k as f64 * 0.5).collect();
        let trajs = vec![curve.clone(); 25];
        assert_eq!(quantile_curve(&trajs, 0.75).unwrap(), curve);
        assert_eq!(quantile_curve(&trajs, 0.0), Err(StatsError::InvalidLevel(0.0)));
        assert_eq!(quantile_curve(&trajs[..5], 0.5), Err(StatsError::TooFewTrials { trials: 5 }));
    }

    #[test]
    fn quantile_matches_sorting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trajs: Vec<Vec<f64>> =
            (0..200).map(|_| (0..50).map(|k| (1.0 + rng.random::<f64>()) / (k + 1) as f64).collect()).collect();
        for q in [0.5, 0.75, 0.9] {
            let curve = quantile_curve(&trajs, q).unwrap();
            for k in [0, 7, 19, 33, 49] {
                let mut col: Vec<f64> = trajs.iter().map(|t| t[k]).collect();
                col.sort_by(f64::total_cmp);
                let rank = (q * 200.0f64).ceil() as usize;
                assert_eq!(curve[k], col[rank - 1]);
            }
        }
    }

    #[test]
    fn grid_shape() {
        let g = log_grid(100_000, 20);
        assert_eq!(&g[..11], &(0..=10).collect::<Vec<_>>()[..]);
        assert_eq!(*g.last().unwrap(), 100_000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.len() < 11 + 20 * 4 + 2);
        assert_eq!(log_grid(10, 5), (0..=10).collect::<Vec<_>>());
        assert_eq!(*log_grid(15, 5).last().unwrap(), 15);
    }

    proptest! {
        #[test]
        fn fit_recovers_power(c in 0.01f64..100.0, p in -3.0f64..1.0) {
            let ks: Vec<usize> = (1..400).collect();
            let v: Vec<f64> = ks.iter().map(|&k| c * (k as f64).powf(p)).collect();
            let fit = fit_rate(&ks, &v, 1).unwrap();
            prop_assert!((fit.slope - p).abs() < 1e-9);
            prop_assert!(fit.r2 > 1.0 - 1e-9);
        }

        #[test]
        fn nearest_rank_bounds(mut v in prop::collection::vec(-10.0f64..10.0, 1..60), q in 0.01f64..0.99) {
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let x = nearest_rank(&mut v, q);
            let below = sorted.iter().filter(|&&s| s <= x).count() as f64;
            prop_assert!(below / sorted.len() as f64 >= q);
            let strictly = sorted.iter().filter(|&&s| s < x).count() as f64;
            prop_assert!(strictly / (sorted.len() as f64) < q);
        }
    }
}
