//! Pass/fail records for inequality checks.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Outcome of evaluating one inequality `lhs ≤ rhs` over many points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Minimum of `rhs − lhs` over all evaluations (negative when violated).
    pub worst_slack: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Running tally for one inequality. `rel_tol` is relative to `max(1, |rhs|)`;
/// zero makes the check exact.
#[derive(Clone, Debug)]
pub struct Tally {
    name: String,
    rel_tol: f64,
    passed: bool,
    worst: f64,
    count: usize,
}

impl Tally {
    pub fn new(name: impl Into<String>, rel_tol: f64) -> Self {
        Self { name: name.into(), rel_tol, passed: true, worst: f64::INFINITY, count: 0 }
    }

    /// Records `lhs ≤ rhs`; returns whether this evaluation passed.
    pub fn observe<T: Scalar>(&mut self, lhs: T, rhs: T) -> bool {
        let (l, r) = (lhs.to_f64_lossy(), rhs.to_f64_lossy());
        let ok = l <= r + self.rel_tol * r.abs().max(1.0);
        self.passed &= ok;
        self.worst = self.worst.min(r - l);
        self.count += 1;
        ok
    }

    pub fn evaluations(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Check {
        Check {
            name: self.name,
            passed: self.passed && self.count > 0,
            worst_slack: if self.count == 0 { f64::NAN } else { self.worst },
            evaluations: self.count,
        }
    }
}
