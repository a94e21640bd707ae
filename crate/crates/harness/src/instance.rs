//! Concrete problem instances behind one enum.

use plsgd_core::problems::{MarkovQuadratic, MixingInfo, Problem, Subsample, SysId, TokenRegression};
use plsgd_core::{FiniteChain, ProblemConstants};
use serde::{Deserialize, Serialize};

use crate::config::ProblemSpec;
use crate::HarnessError;

pub enum Instance {
    Token(TokenRegression<f64>),
    Subsample(Subsample<f64>),
    SysId(SysId<f64>),
    Quadratic(MarkovQuadratic<f64>),
}

/// Runs `$body` with `$p` bound to the concrete problem.
#[macro_export]
macro_rules! with_problem {
    ($inst:expr, $p:ident => $body:expr) => {
        match $inst {
            $crate::instance::Instance::Token($p) => $body,
            $crate::instance::Instance::Subsample($p) => $body,
            $crate::instance::Instance::SysId($p) => $body,
            $crate::instance::Instance::Quadratic($p) => $body,
        }
    };
}

/// What the JSON summary records about the instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSnapshot {
    pub name: String,
    pub dim: usize,
    pub constants: ProblemConstants<f64>,
    pub mixing: MixingInfo,
    pub delta0: f64,
}

impl Instance {
    pub fn build(spec: &ProblemSpec) -> Result<Self, HarnessError> {
        Ok(match spec {
            ProblemSpec::Token(c) => Self::Token(c.build()?),
            ProblemSpec::Subsample(c) => Self::Subsample(c.build()?),
            ProblemSpec::Sysid(c) => Self::SysId(c.build()?),
            ProblemSpec::Quadratic(c) => Self::Quadratic(c.build()?),
        })
    }

    pub fn snapshot(&self) -> ProblemSnapshot {
        with_problem!(self, p => ProblemSnapshot {
            name: p.name().to_string(),
            dim: p.dim(),
            constants: p.constants(),
            mixing: p.mixing(),
            delta0: p.suboptimality(&p.initial_point()),
        })
    }

    pub fn finite_chain(&self) -> Option<&FiniteChain<f64>> {
        with_problem!(self, p => p.finite_chain())
    }
}
