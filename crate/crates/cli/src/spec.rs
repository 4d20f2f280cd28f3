//! Experiment files.

use nonneg_core::config::{FactoryConfig, ModelConfig, StreamConfig, TruncConfig};
use serde::{Deserialize, Serialize};

use crate::error::{missing, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Unbiasedness,
    Negativity,
    VarianceIdentity,
    Condition6,
    PmMh,
    Coupling,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Unbiasedness => "unbiasedness",
            ExperimentKind::Negativity => "negativity",
            ExperimentKind::VarianceIdentity => "variance_identity",
            ExperimentKind::Condition6 => "condition6",
            ExperimentKind::PmMh => "pm_mh",
            ExperimentKind::Coupling => "coupling",
        }
    }

    /// Tolerance in standard errors when the spec gives none.
    pub fn default_tolerance(self) -> f64 {
        match self {
            ExperimentKind::VarianceIdentity => 3.0,
            _ => 4.0,
        }
    }
}

/// Deterministic `S_n = limit − scale · ratio^(n+1)`, converging to `limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub limit: f64,
    pub scale: f64,
    pub ratio: f64,
    /// Last level tabulated on the right-hand side.
    pub n_max: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFunction {
    /// `x (1 − x)`.
    XOneMinusX,
    /// `exp(−1/(x − a))`, zero at `a`.
    ExpNegInv,
}

impl GridFunction {
    pub fn eval(self, a: f64, x: f64) -> f64 {
        match self {
            GridFunction::XOneMinusX => x * (1.0 - x),
            GridFunction::ExpNegInv if x <= a => 0.0,
            GridFunction::ExpNegInv => (-1.0 / (x - a)).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition6Config {
    pub function: GridFunction,
    pub a: f64,
    pub b: f64,
    pub points: usize,
    pub epsilons: Vec<f64>,
    pub degrees: Vec<u32>,
    /// The verdict every `(epsilon, n)` pair must return.
    pub expect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub proposal_sd: f64,
    pub burn_in: u64,
    #[serde(default)]
    pub initial_theta: f64,
    /// Also run a chain on the exact likelihood and require agreement.
    #[serde(default)]
    pub compare_exact: bool,
    /// Largest allowed distance from the analytic posterior mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub lambda_y: f64,
    pub epsilon: f64,
}

/// One experiment file. `kind` decides which component configs are read.
///
/// | kind | required |
/// |---|---|
/// | `unbiasedness` | `factory` |
/// | `negativity` | `stream`, `trunc` |
/// | `variance_identity` | `sequence`, `trunc` |
/// | `condition6` | `condition6` |
/// | `pm_mh` | `model`, `chain` (`reps` is the iteration count) |
/// | `coupling` | `stream`, `coupling`; optional `trunc` adds a paired series run |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    pub reps: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// In standard errors; defaults by kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Expected value, overriding the analytic target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<StreamConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunc: Option<TruncConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factory: Option<FactoryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition6: Option<Condition6Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingConfig>,
}

fn need<'a, T>(v: &'a Option<T>, field: &str, kind: ExperimentKind) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| missing(field, kind.as_str()))
}

impl ExperimentSpec {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|source| CliError::Parse {
            path: origin.to_string(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or_else(|| self.kind.default_tolerance())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| CliError::ConfigInvalid {
            field: field.to_string(),
            message: message.to_string(),
        };
        if self.name.is_empty() {
            return Err(bad("name", "must not be empty"));
        }
        if self.reps == 0 {
            return Err(bad("reps", "must be at least 1"));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(bad("tolerance", "must be positive"));
            }
        }
        let kind = self.kind;
        match kind {
            ExperimentKind::Unbiasedness => {
                need(&self.factory, "factory", kind)?;
            }
            ExperimentKind::Negativity => {
                need(&self.stream, "stream", kind)?;
                need(&self.trunc, "trunc", kind)?;
            }
            ExperimentKind::VarianceIdentity => {
                let seq = need(&self.sequence, "sequence", kind)?;
                need(&self.trunc, "trunc", kind)?;
                if seq.n_max == 0 {
                    return Err(bad("sequence.n_max", "must be at least 1"));
                }
            }
            ExperimentKind::Condition6 => {
                let c = need(&self.condition6, "condition6", kind)?;
                if c.epsilons.is_empty() || c.degrees.is_empty() {
                    return Err(bad("condition6", "epsilons and degrees must be non-empty"));
                }
            }
            ExperimentKind::PmMh => {
                need(&self.model, "model", kind)?;
                let chain = need(&self.chain, "chain", kind)?;
                if chain.burn_in >= self.reps {
                    return Err(bad("chain.burn_in", "must be below reps (the iteration count)"));
                }
            }
            ExperimentKind::Coupling => {
                need(&self.stream, "stream", kind)?;
                need(&self.coupling, "coupling", kind)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_requirements_are_enforced() {
        let err = ExperimentSpec::from_json(r#"{"name": "x", "kind": "unbiasedness", "reps": 10, "seed": 1}"#, "t")
            .unwrap_err();
        assert!(matches!(err, CliError::ConfigInvalid { ref field, .. } if field == "factory"), "{err}");
    }

    #[test]
    fn zero_reps_rejected() {
        let err = ExperimentSpec::from_json(
            r#"{"name": "x", "kind": "condition6", "reps": 0, "seed": 1}"#,
            "t",
        )
        .unwrap_err();
        assert!(matches!(err, CliError::ConfigInvalid { ref field, .. } if field == "reps"));
    }

    #[test]
    fn unknown_fields_are_parse_errors() {
        let err = ExperimentSpec::from_json(r#"{"name": "x", "kind": "coupling", "reps": 1, "seed": 1, "sed": 2}"#, "t")
            .unwrap_err();
        assert!(matches!(err, CliError::Parse { .. }));
    }

    #[test]
    fn default_tolerances() {
        assert_eq!(ExperimentKind::Unbiasedness.default_tolerance(), 4.0);
        assert_eq!(ExperimentKind::VarianceIdentity.default_tolerance(), 3.0);
    }

    #[test]
    fn exp_neg_inv_vanishes_at_left_end() {
        assert_eq!(GridFunction::ExpNegInv.eval(0.0, 0.0), 0.0);
        assert!(GridFunction::ExpNegInv.eval(0.0, 1.0) > 0.36);
    }
}
