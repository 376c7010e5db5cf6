//! Experiment configuration: one JSON object per run, selected by `kind`,
//! with per-kind parameters validated strictly (unknown fields rejected).

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not a JSON object")]
    NotAnObject,
    #[error("config is missing the \"kind\" field")]
    MissingKind,
    #[error("unknown experiment kind {kind:?}; see `pmorder list-kinds`")]
    UnknownKind { kind: String },
    #[error("invalid config: {0}")]
    Schema(#[from] serde_json::Error),
}

/// Names of all experiment kinds, as accepted in config files.
pub const KINDS: [&str; 8] = [
    "counterexample",
    "ordering-sweep",
    "averaging",
    "stratify-abc",
    "extremal",
    "gap-brackets",
    "ring-vs-marginal",
    "conjecture-probe",
];

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleParams {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrderingSweepParams {
    pub instances: usize,
    pub functions: usize,
}

impl Default for OrderingSweepParams {
    fn default() -> Self {
        Self { instances: 100, functions: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AveragingParams {
    /// Largest replica count for the uniform-weights column.
    pub replicas: usize,
    /// Atoms of the two-point base law (unit mean is implied).
    pub base_low: f64,
    pub base_high: f64,
    pub states: usize,
    pub majorized_pairs: usize,
}

impl Default for AveragingParams {
    fn default() -> Self {
        Self { replicas: 4, base_low: 0.5, base_high: 2.5, states: 3, majorized_pairs: 50 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StratifyAbcParams {
    pub grid: usize,
    pub n_estimator: usize,
    pub ystar: f64,
    pub eps: f64,
    pub g: f64,
    pub k: f64,
    pub sim_steps: usize,
    /// Number of random (N, region) instances for the estimator-law check.
    pub cx_checks: usize,
}

impl Default for StratifyAbcParams {
    fn default() -> Self {
        Self {
            grid: 20,
            n_estimator: 8,
            ystar: 0.3,
            eps: 0.8,
            g: 0.4,
            k: 0.2,
            sim_steps: 20_000,
            cx_checks: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtremalParams {
    pub brute_laws: usize,
    pub t_points: usize,
    pub bound_instances: usize,
    pub lower: f64,
    pub upper: f64,
    /// Variance parameter for the exported stop-loss/cdf tables.
    pub sigma2: f64,
}

impl Default for ExtremalParams {
    fn default() -> Self {
        Self { brute_laws: 500, t_points: 20, bound_instances: 50, lower: 0.0, upper: 4.0, sigma2: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapBracketsParams {
    pub instances: usize,
    pub aux_labels: usize,
}

impl Default for GapBracketsParams {
    fn default() -> Self {
        Self { instances: 100, aux_labels: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RingVsMarginalParams {
    pub states: usize,
    /// Parameter of the two-point perturbation family.
    pub ratio_param: f64,
    pub lognormal_sigma: f64,
    pub sim_steps: usize,
    /// Log-grid resolution for the discretized lognormal condition check.
    pub grid_points: usize,
    pub grid_half_width: f64,
}

impl Default for RingVsMarginalParams {
    fn default() -> Self {
        Self {
            states: 3,
            ratio_param: 2.0,
            lognormal_sigma: 1.0,
            sim_steps: 200_000,
            grid_points: 41,
            grid_half_width: 6.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConjectureProbeParams {
    pub states: usize,
    /// Length of the convex-order-increasing chain of weight laws.
    pub depth: usize,
    pub lambda: f64,
    pub spread_steps: usize,
}

impl Default for ConjectureProbeParams {
    fn default() -> Self {
        Self { states: 2, depth: 4, lambda: 0.9, spread_steps: 1 }
    }
}

#[derive(Debug, Clone)]
pub enum ExperimentKind {
    Counterexample(CounterexampleParams),
    OrderingSweep(OrderingSweepParams),
    Averaging(AveragingParams),
    StratifyAbc(StratifyAbcParams),
    Extremal(ExtremalParams),
    GapBrackets(GapBracketsParams),
    RingVsMarginal(RingVsMarginalParams),
    ConjectureProbe(ConjectureProbeParams),
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Counterexample(_) => "counterexample",
            Self::OrderingSweep(_) => "ordering-sweep",
            Self::Averaging(_) => "averaging",
            Self::StratifyAbc(_) => "stratify-abc",
            Self::Extremal(_) => "extremal",
            Self::GapBrackets(_) => "gap-brackets",
            Self::RingVsMarginal(_) => "ring-vs-marginal",
            Self::ConjectureProbe(_) => "conjecture-probe",
        }
    }
}

/// A validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
}

impl Serialize for ExperimentConfig {
    /// Serializes back into the flat config-file shape:
    /// `{"kind": ..., "seed": ..., <params>}`.
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let params = match &self.kind {
            ExperimentKind::Counterexample(p) => serde_json::to_value(p),
            ExperimentKind::OrderingSweep(p) => serde_json::to_value(p),
            ExperimentKind::Averaging(p) => serde_json::to_value(p),
            ExperimentKind::StratifyAbc(p) => serde_json::to_value(p),
            ExperimentKind::Extremal(p) => serde_json::to_value(p),
            ExperimentKind::GapBrackets(p) => serde_json::to_value(p),
            ExperimentKind::RingVsMarginal(p) => serde_json::to_value(p),
            ExperimentKind::ConjectureProbe(p) => serde_json::to_value(p),
        }
        .map_err(serde::ser::Error::custom)?;
        let mut map = match params {
            Value::Object(map) => map,
            _ => serde_json::Map::new(),
        };
        map.insert("kind".into(), Value::String(self.kind.name().into()));
        map.insert("seed".into(), Value::Number(self.seed.into()));
        Value::Object(map).serialize(serializer)
    }
}

impl ExperimentConfig {
    /// Parses and validates a config document. The `kind` field selects
    /// the experiment, `seed` (default 0) drives every random choice, and
    /// any other field must belong to the kind's parameter set.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text)?;
        let Value::Object(mut map) = value else {
            return Err(ConfigError::NotAnObject);
        };
        let kind_name: String = match map.remove("kind") {
            Some(v) => serde_json::from_value(v)?,
            None => return Err(ConfigError::MissingKind),
        };
        let seed: u64 = match map.remove("seed") {
            Some(v) => serde_json::from_value(v)?,
            None => 0,
        };
        let rest = Value::Object(map);
        let kind = match kind_name.as_str() {
            "counterexample" => ExperimentKind::Counterexample(serde_json::from_value(rest)?),
            "ordering-sweep" => ExperimentKind::OrderingSweep(serde_json::from_value(rest)?),
            "averaging" => ExperimentKind::Averaging(serde_json::from_value(rest)?),
            "stratify-abc" => ExperimentKind::StratifyAbc(serde_json::from_value(rest)?),
            "extremal" => ExperimentKind::Extremal(serde_json::from_value(rest)?),
            "gap-brackets" => ExperimentKind::GapBrackets(serde_json::from_value(rest)?),
            "ring-vs-marginal" => ExperimentKind::RingVsMarginal(serde_json::from_value(rest)?),
            "conjecture-probe" => ExperimentKind::ConjectureProbe(serde_json::from_value(rest)?),
            _ => return Err(ConfigError::UnknownKind { kind: kind_name }),
        };
        Ok(Self { kind, seed })
    }
}
