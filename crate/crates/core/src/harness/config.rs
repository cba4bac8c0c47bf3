use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregator::{AggregationMode, AggregatorConfig};
use crate::codec::{FlipMask, MAX_WIDTH, MIN_WIDTH};
use crate::data::{load_csv_dataset, make_synthetic_dataset, Dataset};
use crate::model::ModelKind;
use crate::quantizer::LatticeSpec;
use crate::{Error, Result};

fn default_rounds() -> usize {
    95
}
fn default_clients() -> usize {
    20
}
fn one() -> usize {
    1
}
fn default_lr() -> f64 {
    0.1
}
fn default_baseline_bits() -> u32 {
    32
}
fn default_carbon() -> f64 {
    0.3
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_aggregator() -> AggregatorConfig {
    AggregatorConfig::new(AggregationMode::Cdpa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian blobs; see [`make_synthetic_dataset`].
    Synthetic {
        examples: usize,
        feature_dim: usize,
        classes: usize,
        separation: f64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

impl DatasetSpec {
    pub fn test_fraction(&self) -> f64 {
        match self {
            DatasetSpec::Synthetic { test_fraction, .. } | DatasetSpec::Csv { test_fraction, .. } => {
                *test_fraction
            }
        }
    }

    /// Generates or reads the full dataset, before the train/test split.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSpec::Synthetic {
                examples,
                feature_dim,
                classes,
                separation,
                ..
            } => make_synthetic_dataset(*examples, *feature_dim, *classes, *separation, seed),
            DatasetSpec::Csv { path, label_column, .. } => load_csv_dataset(path, label_column),
        }
    }
}

/// Fixed-point and flip-mask defaults shared by all clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    pub p: f64,
    pub z: u8,
    pub m: u8,
    /// Flipped positions, 0-based from the MSB.
    pub mask: Vec<u8>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            p: 0.98,
            z: 4,
            m: 16,
            mask: vec![2, 3],
        }
    }
}

impl CodecConfig {
    pub fn flip_mask(&self) -> Result<FlipMask> {
        FlipMask::new(self.mask.clone(), self.p, self.z, self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    /// Record wall-clock time per round.
    #[default]
    Measured,
    /// Report zero time so outputs are byte-for-byte reproducible.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub trials: usize,
    /// Plain FedAvg rounds run before probing.
    pub warmup_rounds: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            warmup_rounds: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_clients")]
    pub clients: usize,
    #[serde(default = "one")]
    pub local_iters: usize,
    /// Minibatch size per local step; the whole shard when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub model: ModelSpec,
    pub dataset: DatasetSpec,
    #[serde(default = "default_aggregator")]
    pub aggregator: AggregatorConfig,
    #[serde(default)]
    pub codec: CodecConfig,
    /// SDQ applied to every layer; no quantization when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
    /// Bits per parameter of the uncompressed baseline.
    #[serde(default = "default_baseline_bits")]
    pub baseline_bits: u32,
    /// kg CO2-equivalent per hour of wall time.
    #[serde(default = "default_carbon")]
    pub carbon_factor: f64,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub probe: ProbeConfig,
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    /// Logistic regression on 2-class blobs with the default CDPA codec.
    pub fn synthetic_default(seed: u64) -> Self {
        Self {
            seed,
            rounds: default_rounds(),
            clients: default_clients(),
            local_iters: 1,
            batch_size: None,
            lr: default_lr(),
            model: ModelSpec {
                kind: ModelKind::Logistic,
                hidden_dim: None,
            },
            dataset: DatasetSpec::Synthetic {
                examples: 1000,
                feature_dim: 10,
                classes: 2,
                separation: 4.0,
                test_fraction: default_test_fraction(),
            },
            aggregator: default_aggregator(),
            codec: CodecConfig::default(),
            lattice: None,
            baseline_bits: default_baseline_bits(),
            carbon_factor: default_carbon(),
            timing: Timing::Measured,
            output_dir: None,
            probe: ProbeConfig::default(),
        }
    }

    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|e| e.context(path.display().to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(field("rounds", "must be >= 1"));
        }
        if self.clients == 0 {
            return Err(field("clients", "must be >= 1"));
        }
        if self.local_iters == 0 {
            return Err(field("local_iters", "must be >= 1"));
        }
        if self.batch_size == Some(0) {
            return Err(field("batch_size", "must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(field("lr", format!("must be positive, got {}", self.lr)));
        }
        if !(MIN_WIDTH..=MAX_WIDTH).contains(&self.codec.m) {
            return Err(field("codec.m", format!("must be in {MIN_WIDTH}..={MAX_WIDTH}, got {}", self.codec.m)));
        }
        if !(self.codec.p > 0.5 && self.codec.p <= 1.0) {
            return Err(field("codec.p", format!("must be in (0.5, 1], got {}", self.codec.p)));
        }
        if let Some(&bad) = self.codec.mask.iter().find(|&&i| i >= self.codec.m) {
            return Err(field("codec.mask", format!("position {bad} not below m = {}", self.codec.m)));
        }
        self.codec.flip_mask().map_err(|e| field("codec.mask", e))?;
        self.aggregator.validate()?;
        if let Some(lattice) = &self.lattice {
            lattice.validated().map_err(|e| field("lattice", e))?;
        }
        if self.baseline_bits == 0 {
            return Err(field("baseline_bits", "must be >= 1"));
        }
        if !(self.carbon_factor >= 0.0 && self.carbon_factor.is_finite()) {
            return Err(field("carbon_factor", "must be finite and >= 0"));
        }
        let tf = self.dataset.test_fraction();
        if !(0.0..1.0).contains(&tf) {
            return Err(field("dataset.test_fraction", format!("must be in [0, 1), got {tf}")));
        }
        if self.model.kind == ModelKind::Mlp && !self.model.hidden_dim.is_some_and(|h| h > 0) {
            return Err(field("model.hidden_dim", "required for mlp"));
        }
        Ok(())
    }

    /// Retain probability the server recovers with.
    pub fn recovery_p(&self) -> f64 {
        self.aggregator.p.unwrap_or(self.codec.p)
    }
}
