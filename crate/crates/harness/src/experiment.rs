//! Seeded Monte Carlo over independent trials.
//!
//! Trial `i` draws from ChaCha8 stream `i` of the configured seed, so results
//! do not depend on scheduling. Trials run in parallel chunks and are folded
//! into the accumulators strictly in trial order, which keeps every float sum
//! (and therefore every emitted byte) independent of the thread count.

use std::io::Write;

use plsgd_core::engine::{run_observed, run_trial, trial_rng, StepSchedule};
use plsgd_core::problems::Problem;
use plsgd_core::theory::{K0Choice, TheoryConstants, TheoryInputs};
use plsgd_core::EngineError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{domination_audit, envelope_thresholds, first_violation, AuditOutcome, DominationReport, EnvelopeReport};
use crate::config::{ExperimentConfig, K0Spec, StepSpec};
use crate::instance::{Instance, ProblemSnapshot};
use crate::stats::{fit_rate, log_grid, nearest_rank, RateFit, MIN_QUANTILE_TRIALS};
use crate::{with_problem, HarnessError};

const CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean_delta: f64,
    /// Empirical `(1−δ)`-quantile; absent below the minimum trial count.
    pub q_delta: Option<f64>,
    /// `Λ(k,δ)/(k+K0)`; absent at `k = 0` or when `K0` is infeasible.
    pub hp_envelope: Option<f64>,
    pub expected_bound: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSnapshot {
    pub a: f64,
    pub k0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergedTrial {
    pub trial: u64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub problem: ProblemSnapshot,
    pub constants: TheoryConstants<f64>,
    pub schedule: ScheduleSnapshot,
    pub trials_completed: usize,
    pub diverged: Vec<DivergedTrial>,
    pub curve: Vec<CurvePoint>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub envelope: Option<EnvelopeReport>,
    pub domination: Option<DominationReport>,
    pub audits: Vec<AuditOutcome>,
    pub passed: bool,
}

/// Stepsize numerator and bound constants for `cfg` on `inst`.
pub fn theory_for(inst: &Instance, cfg: &ExperimentConfig) -> Result<(ProblemSnapshot, TheoryConstants<f64>), HarnessError> {
    let snap = inst.snapshot();
    let a = match cfg.schedule.a {
        StepSpec::Auto => 2.0 / snap.constants.mu,
        StepSpec::Value(a) => a,
    };
    let inputs = with_problem!(inst, p => TheoryInputs::from_problem(p, a, cfg.delta));
    let choice = match cfg.schedule.k0 {
        K0Spec::Auto => K0Choice::Auto,
        K0Spec::AutoExpected => K0Choice::AutoExpected,
        K0Spec::Value(v) => K0Choice::Value(v),
    };
    let constants = TheoryConstants::compute(inputs, choice, snap.mixing.certified)?;
    Ok((snap, constants))
}

struct TrialOut {
    deltas: Vec<f64>,
    csv: Option<Vec<u8>>,
}

fn run_one<P: Problem<f64>>(
    p: &P,
    schedule: &StepSchedule<f64>,
    cfg: &ExperimentConfig,
    trial: u64,
    keep_rows: bool,
) -> Result<TrialOut, EngineError> {
    if keep_rows {
        let traj = run_trial(p, schedule, cfg.horizon, cfg.seed, trial, cfg.record_noise)?;
        let mut csv = Vec::new();
        traj.write_csv(&mut csv, false).expect("writing to memory");
        return Ok(TrialOut { deltas: traj.suboptimality, csv: Some(csv) });
    }
    let mut deltas = Vec::with_capacity(cfg.horizon + 1);
    let mut rng = trial_rng(cfg.seed, trial);
    run_observed(p, schedule, cfg.horizon, &mut rng, false, |v| deltas.push(v.delta))?;
    Ok(TrialOut { deltas, csv: None })
}

/// [`run_experiment_with`] without a trajectory sink.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentSummary, HarnessError> {
    run_experiment_with(cfg, threads, None)
}

/// Runs every trial on a pool of `threads` workers (0 = all cores) and
/// aggregates. Per-trial rows go to `trajectories` when given.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    threads: usize,
    mut trajectories: Option<&mut dyn Write>,
) -> Result<ExperimentSummary, HarnessError> {
    cfg.validate()?;
    let inst = Instance::build(&cfg.problem)?;
    let (snap, constants) = theory_for(&inst, cfg)?;
    let schedule = StepSchedule::new(constants.inputs.a, constants.k0)?;
    schedule.check_pl(snap.constants.mu)?;

    let h = cfg.horizon;
    let grid = log_grid(h, cfg.grid_per_decade);
    let thresholds = if constants.hypotheses.k0_feasible_high_probability {
        Some(envelope_thresholds(&constants, h, cfg.audits.envelope_scale)?)
    } else {
        None
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;

    let keep_rows = trajectories.is_some();
    if let Some(w) = trajectories.as_deref_mut() {
        let noise = cfg.record_noise && inst.finite_chain().is_some();
        let header = if noise {
            "trial,k,delta,grad_norm_sq,markov_mart_norm,correction_norm,raw_mart_norm"
        } else {
            "trial,k,delta,grad_norm_sq"
        };
        writeln!(w, "{header}").map_err(|e| HarnessError::io("trajectories", e))?;
    }

    let mut sums = vec![0.0; h + 1];
    let mut sums_sq = vec![0.0; h + 1];
    let mut at_grid: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.trials); grid.len()];
    let mut firsts = Vec::with_capacity(cfg.trials);
    let mut diverged = Vec::new();
    let mut first_failure = None;

    let trials = cfg.trials as u64;
    let mut start = 0u64;
    while start < trials {
        let end = (start + CHUNK as u64).min(trials);
        let outs: Vec<(u64, Result<TrialOut, EngineError>)> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|t| (t, with_problem!(&inst, p => run_one(p, &schedule, cfg, t, keep_rows))))
                .collect()
        });
        for (trial, out) in outs {
            let out = match out {
                Ok(o) => o,
                Err(EngineError::NonFinite { k }) => {
                    diverged.push(DivergedTrial { trial, k });
                    first_failure.get_or_insert(trial);
                    continue;
                }
                Err(source) => return Err(HarnessError::TrialFailed { trial, source }),
            };
            for (k, &d) in out.deltas.iter().enumerate() {
                sums[k] += d;
                sums_sq[k] += d * d;
            }
            for (slot, &k) in at_grid.iter_mut().zip(&grid) {
                slot.push(out.deltas[k]);
            }
            if let Some(thr) = &thresholds {
                firsts.push(first_violation(&out.deltas, thr));
            }
            if let (Some(w), Some(csv)) = (trajectories.as_deref_mut(), out.csv) {
                w.write_all(&csv).map_err(|e| HarnessError::io("trajectories", e))?;
            }
        }
        start = end;
    }
    // More than 1% divergent trials invalidates the run.
    if diverged.len() * 100 > cfg.trials {
        return Err(HarnessError::TooManyDiverged {
            failed: diverged.len(),
            trials: cfg.trials,
            first: first_failure.expect("at least one failure"),
        });
    }
    let n = cfg.trials - diverged.len();

    let q = 1.0 - cfg.delta;
    let curve: Vec<CurvePoint> = grid
        .iter()
        .zip(at_grid.iter_mut())
        .map(|(&k, vals)| CurvePoint {
            k,
            mean_delta: sums[k] / n as f64,
            q_delta: (n >= MIN_QUANTILE_TRIALS).then(|| nearest_rank(vals, q)),
            hp_envelope: constants.hp_envelope(k).ok(),
            expected_bound: constants.expected_bound(k).ok(),
        })
        .collect();

    let k_min = default_k_min(cfg, constants.k0);
    let ks: Vec<usize> = curve.iter().map(|c| c.k).collect();
    let means: Vec<f64> = curve.iter().map(|c| c.mean_delta).collect();
    let (fit, fit_error) = match fit_rate(&ks, &means, k_min) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let envelope = thresholds.map(|_| EnvelopeReport::from_first_violations(firsts, cfg.delta, cfg.audits.envelope_scale));
    let domination = if constants.hypotheses.k0_feasible_expected {
        Some(domination_audit(&sums, &sums_sq, n, &constants)?)
    } else {
        None
    };

    let audits = audit_outcomes(cfg, &constants, fit.as_ref(), fit_error.as_deref(), envelope.as_ref(), domination.as_ref());
    let passed = audits.iter().all(|a| a.passed);
    Ok(ExperimentSummary {
        config: cfg.clone(),
        problem: snap,
        schedule: ScheduleSnapshot { a: constants.inputs.a, k0: constants.k0 },
        constants,
        trials_completed: n,
        diverged,
        curve,
        fit,
        fit_error,
        envelope,
        domination,
        audits,
        passed,
    })
}

/// `max(100, ⌈5·K0⌉)` unless configured.
pub fn default_k_min(cfg: &ExperimentConfig, k0: f64) -> usize {
    cfg.audits.rate_k_min.unwrap_or_else(|| {
        let five = (5.0 * k0).ceil();
        if five >= usize::MAX as f64 {
            usize::MAX
        } else {
            100usize.max(five as usize)
        }
    })
}

fn audit_outcomes(
    cfg: &ExperimentConfig,
    constants: &TheoryConstants<f64>,
    fit: Option<&RateFit>,
    fit_error: Option<&str>,
    envelope: Option<&EnvelopeReport>,
    domination: Option<&DominationReport>,
) -> Vec<AuditOutcome> {
    let a = &cfg.audits;
    let mut out = Vec::new();
    if a.rate {
        out.push(match fit {
            Some(f) => AuditOutcome {
                name: "rate".into(),
                passed: f.slope >= a.slope_min && f.slope <= a.slope_max && f.r2 >= a.r2_min,
                detail: format!(
                    "slope {:.4} in [{}, {}], R² {:.4} ≥ {} over {} points with k ≥ {}",
                    f.slope, a.slope_min, a.slope_max, f.r2, a.r2_min, f.points, f.k_min
                ),
            },
            None => AuditOutcome {
                name: "rate".into(),
                passed: false,
                detail: format!("no fit: {}", fit_error.unwrap_or("unknown")),
            },
        });
    }
    if a.envelope {
        out.push(match envelope {
            Some(e) => AuditOutcome {
                name: "envelope".into(),
                passed: e.passed,
                detail: format!(
                    "{}/{} trajectories leave the envelope (fraction {:.4}, allowed {:.4}, scale {})",
                    e.violations, e.trials, e.fraction, e.allowed, e.scale
                ),
            },
            None => AuditOutcome {
                name: "envelope".into(),
                passed: false,
                detail: format!("K0 = {:e} below the requirement {:e}", constants.k0, constants.k0_required),
            },
        });
    }
    if a.domination {
        out.push(match domination {
            Some(d) => AuditOutcome {
                name: "domination".into(),
                passed: d.passed,
                detail: format!(
                    "{} of {} steps violate mean + 3 SE ≤ bound; worst ratio {:.4} at k = {}",
                    d.violations, d.checked, d.worst_ratio, d.worst_k
                ),
            },
            None => AuditOutcome {
                name: "domination".into(),
                passed: false,
                detail: format!("K0 = {:e} below the requirement {:e}", constants.k0, constants.k0_required_expected),
            },
        });
    }
    out
}
