//! Uniform-in-time envelope audit and mean-curve domination.

use plsgd_core::{TheoryConstants, TheoryError};
use serde::{Deserialize, Serialize};

use crate::stats::mean_and_se;

/// `E_k` thresholds for `k = 0..=horizon`, multiplied by `scale`.
pub fn envelope_thresholds(constants: &TheoryConstants<f64>, horizon: usize, scale: f64) -> Result<Vec<f64>, TheoryError> {
    (0..=horizon).map(|k| constants.good_event_bound(k).map(|b| b * scale)).collect()
}

/// First `k` with `Δ_k` above its threshold.
pub fn first_violation(deltas: &[f64], thresholds: &[f64]) -> Option<usize> {
    deltas.iter().zip(thresholds).position(|(d, t)| d > t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub trials: usize,
    pub violations: usize,
    pub fraction: f64,
    /// `δ + 2√(δ(1−δ)/trials)`.
    pub allowed: f64,
    pub delta: f64,
    pub scale: f64,
    /// Per trial, the first violating `k`.
    pub first_violation: Vec<Option<usize>>,
    pub passed: bool,
}

impl EnvelopeReport {
    pub fn from_first_violations(first_violation: Vec<Option<usize>>, delta: f64, scale: f64) -> Self {
        let trials = first_violation.len();
        let violations = first_violation.iter().filter(|v| v.is_some()).count();
        let fraction = violations as f64 / trials.max(1) as f64;
        let allowed = delta + 2.0 * (delta * (1.0 - delta) / trials.max(1) as f64).sqrt();
        Self { trials, violations, fraction, allowed, delta, scale, first_violation, passed: fraction <= allowed }
    }
}

/// Fraction of trajectories leaving the envelope at any `k`.
pub fn envelope_audit(trajectories: &[Vec<f64>], constants: &TheoryConstants<f64>, scale: f64) -> Result<EnvelopeReport, TheoryError> {
    let horizon = trajectories.iter().map(|t| t.len()).max().unwrap_or(1).saturating_sub(1);
    let thresholds = envelope_thresholds(constants, horizon, scale)?;
    let firsts = trajectories.iter().map(|t| first_violation(t, &thresholds)).collect();
    Ok(EnvelopeReport::from_first_violations(firsts, constants.inputs.delta, scale))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest `(mean + 3·SE)/bound` and where it occurs.
    pub worst_ratio: f64,
    pub worst_k: usize,
    pub passed: bool,
}

/// `mean_k + 3·SE_k ≤ expected_bound(k)` for every `k ≥ 1`, from per-`k`
/// running sums over `n` trials.
pub fn domination_audit(
    sums: &[f64],
    sums_sq: &[f64],
    n: usize,
    constants: &TheoryConstants<f64>,
) -> Result<DominationReport, TheoryError> {
    let mut report = DominationReport { checked: 0, violations: 0, worst_ratio: 0.0, worst_k: 0, passed: true };
    for k in 1..sums.len() {
        let (mean, se) = mean_and_se(sums[k], sums_sq[k], n);
        let bound = constants.expected_bound(k)?;
        let ratio = (mean + 3.0 * se) / bound;
        report.checked += 1;
        if ratio > 1.0 {
            report.violations += 1;
        }
        if ratio > report.worst_ratio {
            report.worst_ratio = ratio;
            report.worst_k = k;
        }
    }
    report.passed = report.violations == 0;
    Ok(report)
}

/// One line of the audit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}
