//! Invariant and lemma suite behind `plsgd verify`.

use plsgd_core::engine::{run_trial, verify_trajectory, verify_zeta_bounds, StepSchedule};
use plsgd_core::poisson::{verify_v_bounds, verify_v_lipschitz, GrowthConstants, PoissonSolver};
use plsgd_core::problems::{sample_ball, MixingInfo, Problem};
use plsgd_core::report::{Check, Report};
use plsgd_core::theory::{abc_verify, pl_verify};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiment::theory_for;
use crate::instance::Instance;
use crate::{with_problem, HarnessError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub problem: String,
    pub mixing: MixingInfo,
    pub checks: Vec<Check>,
    /// Suites that do not apply to this problem.
    pub skipped: Vec<String>,
    pub passed: bool,
}

/// Folds repeated check names into one record.
fn merge(checks: Vec<Check>) -> Vec<Check> {
    let mut out: Vec<Check> = Vec::new();
    for c in checks {
        match out.iter_mut().find(|o| o.name == c.name) {
            Some(o) => {
                o.passed &= c.passed;
                o.worst_slack = o.worst_slack.min(c.worst_slack);
                o.evaluations += c.evaluations;
            }
            None => out.push(c),
        }
    }
    out
}

/// Poisson-solution bounds at `samples` points around the minimizer, and the
/// Lipschitz bound on consecutive pairs.
fn poisson_suite<P: Problem<f64>>(p: &P, samples: usize, radius: f64, rng: &mut ChaCha8Rng) -> Result<Report, HarnessError> {
    let chain = p.finite_chain().expect("caller checked");
    let solver = PoissonSolver::new(chain).map_err(|e| HarnessError::Config(e.to_string()))?;
    let c = p.constants();
    let growth = GrowthConstants { a: c.a, b: c.b, c: c.c, l: c.l };
    let tmix = p.mixing().tmix;
    let g_map = |x: &[f64], z: usize| p.markov_gradient(x, &p.state_at(z).expect("finite chain state"));
    let center = p.minimizer();
    let mut checks = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    for _ in 0..samples {
        let x: Vec<f64> = center.iter().zip(sample_ball(p.dim(), radius, rng)).map(|(a, b)| a + b).collect();
        let sol = solver.solve_at(&x, &g_map).map_err(|e| HarnessError::Config(e.to_string()))?;
        checks.extend(verify_v_bounds(&sol, tmix, growth, p.suboptimality(&x)).checks);
        if let Some(y) = &prev {
            let r = verify_v_lipschitz(chain, &g_map, &x, y, tmix, c.l_g).map_err(|e| HarnessError::Config(e.to_string()))?;
            checks.extend(r.checks);
        }
        prev = Some(x);
    }
    Ok(Report { checks })
}

fn generic_suite<P: Problem<f64>>(
    p: &P,
    cfg: &ExperimentConfig,
    schedule: &StepSchedule<f64>,
    rng: &mut ChaCha8Rng,
    skipped: &mut Vec<String>,
) -> Result<Vec<Check>, HarnessError> {
    let v = &cfg.verify;
    let mut checks = Vec::new();
    checks.extend(pl_verify(p, v.samples, v.radius, rng).checks);
    checks.extend(abc_verify(p, v.samples, v.radius, rng).checks);
    if p.finite_chain().is_some() {
        checks.extend(poisson_suite(p, v.samples, v.radius, rng)?.checks);
    } else {
        skipped.push("poisson (no finite chain)".into());
    }
    match verify_zeta_bounds(schedule, p.constants().mu, v.samples, v.path_steps, rng) {
        Ok(r) => checks.extend(r.checks),
        Err(e) => skipped.push(format!("step products ({e})")),
    }
    let traj = run_trial(p, schedule, v.path_steps, v.seed, 0, p.finite_chain().is_some())?;
    checks.extend(verify_trajectory(p, &traj).checks);
    Ok(checks)
}

/// Runs every applicable check for the configured problem.
pub fn verify_suite(cfg: &ExperimentConfig) -> Result<VerifyOutcome, HarnessError> {
    let inst = Instance::build(&cfg.problem)?;
    let (snap, constants) = theory_for(&inst, cfg)?;
    let schedule = StepSchedule::new(constants.inputs.a, constants.k0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.verify.seed);
    let v = &cfg.verify;
    let mut skipped = Vec::new();
    let mut checks = with_problem!(&inst, p => generic_suite(p, cfg, &schedule, &mut rng, &mut skipped))?;
    match &inst {
        Instance::Token(p) => checks.extend(p.verify_identities(v.samples, &mut rng)?.checks),
        Instance::Subsample(p) => checks.extend(p.verify_dynamics(v.path_steps, v.samples, &mut rng).checks),
        Instance::SysId(p) => checks.extend(p.verify_pathwise(v.path_steps, &mut rng).checks),
        Instance::Quadratic(_) => {}
    }
    let checks = merge(checks);
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyOutcome { problem: snap.name, mixing: snap.mixing, checks, skipped, passed })
}
