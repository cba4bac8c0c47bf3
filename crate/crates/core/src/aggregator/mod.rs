//! Server side: bitwise secure addition with probabilistic recovery, plus the
//! FedAvg fallback and the baseline aggregators used for comparison.

mod baselines;
mod round;

use serde::{Deserialize, Serialize};

pub use baselines::{fedavg, graddrop_filter, ldp_aggregate, ldp_perturb, sample_laplace, signsgd_aggregate};
pub use round::{
    decode_global, new_round_state, recover_bit, LayerAggregation, LayerSpec, RecoveredLayer,
    RecoveredValues, RoundState, SharedRoundState, DEFAULT_THRESHOLD,
};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Quantize, encode, flip, bitwise add and recover.
    Cdpa,
    /// Plain averaging of float updates.
    Fedavg,
    /// Per-client clipping plus Laplace noise, then averaging.
    Ldp,
    /// Majority vote over coordinate signs.
    Signsgd,
    /// Per-client magnitude pruning, then averaging.
    Graddrop,
}

/// Which layers go through the bit-flipping path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelection {
    All,
    LastLayer,
    Named(Vec<String>),
}

impl LayerSelection {
    pub fn selects(&self, name: &str, index: usize, layer_count: usize) -> bool {
        match self {
            LayerSelection::All => true,
            LayerSelection::LastLayer => index + 1 == layer_count,
            LayerSelection::Named(names) => names.iter().any(|n| n == name),
        }
    }
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_selection() -> LayerSelection {
    LayerSelection::LastLayer
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorConfig {
    pub mode: AggregationMode,
    /// Retain probability used for recovery; defaults to the codec's `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Laplace budget for `ldp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Per-coordinate clip bound for `ldp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    /// Pruned fraction for `graddrop`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_fraction: Option<f64>,
    #[serde(default = "default_selection")]
    pub layer_selection: LayerSelection,
    /// Recovery threshold applied after scaling.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl AggregatorConfig {
    pub fn new(mode: AggregationMode) -> Self {
        Self {
            mode,
            p: None,
            epsilon: None,
            clip: None,
            drop_fraction: None,
            layer_selection: default_selection(),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.p {
            if !(p > 0.5 && p <= 1.0) {
                return Err(Error::Config(format!("aggregator.p must be in (0.5, 1], got {p}")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "aggregator.threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        match self.mode {
            AggregationMode::Ldp => {
                match self.epsilon {
                    Some(e) if e > 0.0 => {}
                    _ => return Err(Error::Config("aggregator.epsilon must be > 0 for ldp".into())),
                }
                match self.clip {
                    Some(c) if c > 0.0 && c.is_finite() => {}
                    _ => return Err(Error::Config("aggregator.clip must be > 0 for ldp".into())),
                }
            }
            AggregationMode::Graddrop => match self.drop_fraction {
                Some(f) if (0.0..1.0).contains(&f) => {}
                _ => {
                    return Err(Error::Config(
                        "aggregator.drop_fraction must be in [0, 1) for graddrop".into(),
                    ))
                }
            },
            _ => {}
        }
        if let LayerSelection::Named(names) = &self.layer_selection {
            if names.is_empty() {
                return Err(Error::Config("aggregator.layer_selection names nothing".into()));
            }
        }
        Ok(())
    }
}
