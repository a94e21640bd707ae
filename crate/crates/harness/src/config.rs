//! TOML experiment configuration.
//!
//! ```toml
//! horizon = 100000
//! trials = 200
//! seed = 7
//!
//! [problem]
//! kind = "token"
//! nodes = 8
//! # ... remaining builder fields
//!
//! [schedule]
//! a = "auto"          # or a number ≥ 2/μ
//! k0 = "auto"         # "auto-expected" or a number
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use plsgd_core::problems::{QuadraticConfig, SubsampleConfig, SysIdConfig, TokenConfig};
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Token(TokenConfig),
    Subsample(SubsampleConfig),
    Sysid(SysIdConfig),
    Quadratic(QuadraticConfig),
}

/// Stepsize numerator: `"auto"` means `2/μ`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum StepSpec {
    #[default]
    Auto,
    Value(f64),
}

/// `"auto"` is the high-probability requirement, `"auto-expected"` the
/// expected-bound one.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum K0Spec {
    #[default]
    Auto,
    AutoExpected,
    Value(f64),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WordOrNumber {
    Number(f64),
    Word(String),
}

impl Serialize for StepSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for StepSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match WordOrNumber::deserialize(d)? {
            WordOrNumber::Number(v) => Ok(Self::Value(v)),
            WordOrNumber::Word(w) if w == "auto" => Ok(Self::Auto),
            WordOrNumber::Word(w) => Err(de::Error::custom(format!("expected \"auto\" or a number, got \"{w}\""))),
        }
    }
}

impl Serialize for K0Spec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::AutoExpected => s.serialize_str("auto-expected"),
            Self::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for K0Spec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match WordOrNumber::deserialize(d)? {
            WordOrNumber::Number(v) => Ok(Self::Value(v)),
            WordOrNumber::Word(w) => match w.as_str() {
                "auto" => Ok(Self::Auto),
                "auto-expected" => Ok(Self::AutoExpected),
                _ => Err(de::Error::custom(format!("expected \"auto\", \"auto-expected\" or a number, got \"{w}\""))),
            },
        }
    }
}

impl fmt::Display for K0Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::AutoExpected => f.write_str("auto-expected"),
            Self::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub a: StepSpec,
    #[serde(default)]
    pub k0: K0Spec,
}

/// Which audits decide the exit status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default)]
    pub rate: bool,
    #[serde(default)]
    pub envelope: bool,
    #[serde(default)]
    pub domination: bool,
    /// Defaults to `max(100, 5·K0)`.
    #[serde(default)]
    pub rate_k_min: Option<usize>,
    #[serde(default = "default_slope_min")]
    pub slope_min: f64,
    #[serde(default = "default_slope_max")]
    pub slope_max: f64,
    #[serde(default = "default_r2_min")]
    pub r2_min: f64,
    /// Multiplies the envelope threshold; values below 1 give a deliberately
    /// infeasible audit.
    #[serde(default = "one")]
    pub envelope_scale: f64,
}

fn default_slope_min() -> f64 {
    -1.25
}

fn default_slope_max() -> f64 {
    -0.80
}

fn default_r2_min() -> f64 {
    0.98
}

fn one() -> f64 {
    1.0
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            rate: false,
            envelope: false,
            domination: false,
            rate_k_min: None,
            slope_min: default_slope_min(),
            slope_max: default_slope_max(),
            r2_min: default_r2_min(),
            envelope_scale: one(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Summary curve on the log grid.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
    /// Every trial at every `k`; large.
    #[serde(default)]
    pub trajectories: Option<PathBuf>,
    /// Transition matrix of the driving chain, when finite.
    #[serde(default)]
    pub chain: Option<PathBuf>,
}

impl OutputConfig {
    /// Resolves relative paths against `base`.
    pub fn resolve(&self, base: &Path) -> Self {
        let fix = |p: &Option<PathBuf>| p.as_ref().map(|p| if p.is_relative() { base.join(p) } else { p.clone() });
        Self { csv: fix(&self.csv), json: fix(&self.json), trajectories: fix(&self.trajectories), chain: fix(&self.chain) }
    }
}

/// Sample sizes for `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_path_steps")]
    pub path_steps: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    1000
}

fn default_path_steps() -> usize {
    10_000
}

fn default_radius() -> f64 {
    5.0
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { samples: default_samples(), path_steps: default_path_steps(), radius: default_radius(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub record_noise: bool,
    /// Points per decade of the summary grid.
    #[serde(default = "default_grid")]
    pub grid_per_decade: usize,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub audits: AuditConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_delta() -> f64 {
    0.5
}

fn default_grid() -> usize {
    40
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative output paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.output = cfg.output.resolve(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.horizon < 10 {
            return bad(format!("horizon = {} must be at least 10", self.horizon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if self.grid_per_decade == 0 {
            return bad("grid_per_decade must be positive".into());
        }
        if let StepSpec::Value(a) = self.schedule.a {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("a = {a} must be positive"));
            }
        }
        if let K0Spec::Value(k0) = self.schedule.k0 {
            if !(k0 > 0.0 && k0.is_finite()) {
                return bad(format!("k0 = {k0} must be positive"));
            }
        }
        if !(self.audits.envelope_scale > 0.0) {
            return bad("envelope_scale must be positive".into());
        }
        if self.audits.slope_min > self.audits.slope_max {
            return bad("slope_min exceeds slope_max".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
horizon = 1000
trials = 32
seed = 5

[problem]
kind = "token"
nodes = 4
dim = 3
rows_per_node = 6
noise_std = 0.1
graph = "ring"
instance_seed = 1

[schedule]
a = 4
k0 = "auto-expected"
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = ExperimentConfig::from_toml(TEXT).unwrap();
        assert_eq!(cfg.schedule.a, StepSpec::Value(4.0));
        assert_eq!(cfg.schedule.k0, K0Spec::AutoExpected);
        assert_eq!(cfg.delta, 0.5);
        assert!(matches!(&cfg.problem, ProblemSpec::Token(t) if t.nodes == 4));
        assert!(!cfg.audits.rate);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml(&TEXT.replace("trials = 32", "trials = 0")).is_err());
        assert!(ExperimentConfig::from_toml(&TEXT.replace("horizon = 1000", "horizon = 5")).is_err());
        assert!(ExperimentConfig::from_toml(&TEXT.replace("seed = 5", "seed = 5\ndelta = 1.0")).is_err());
        assert!(ExperimentConfig::from_toml(&TEXT.replace("k0 = \"auto-expected\"", "k0 = \"soon\"")).is_err());
        assert!(ExperimentConfig::from_toml(&TEXT.replace("nodes = 4", "nodes = 4\ncolour = 1")).is_err());
        assert!(ExperimentConfig::from_toml(&TEXT.replace("kind = \"token\"", "kind = \"lasso\"")).is_err());
    }

    #[test]
    fn json_echo_round_trips() {
        let cfg = ExperimentConfig::from_toml(TEXT).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
    }
}
