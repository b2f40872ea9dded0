//! Experiment configuration files.
//!
//! A config is one TOML document whose top-level keys are the fields of
//! [`ExperimentSpec`]. Example:
//!
//! ```toml
//! sizes = [784, 500, 500, 500]
//! regimes = ["random-tied", "trained-ae"]
//! n_inputs_evaluated = 200
//! output_dir = "out"
//! seed = 7
//!
//! [dataset]
//! source = "blobs"
//! n_items = 2000
//!
//! [relaxation]
//! tol = 1e-7
//!
//! [train]
//! rule = "ae-gradient"
//! optimizer = "adam"
//! learning_rate = 0.001
//! ```
//!
//! Omitted keys in `[relaxation]` and `[train]` take library defaults. Seeds
//! left out of those tables are derived from the top-level `seed`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ffinit_core::{Activation, Optimizer, RelaxationConfig, Scheme, TrainConfig, TrainRule};
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Environment variable naming the directory holding the MNIST IDX files.
pub const MNIST_DIR_ENV: &str = "FFINIT_MNIST_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    pub sizes: Vec<usize>,
    pub regimes: Vec<Regime>,
    #[serde(default)]
    pub relaxation: RelaxationSpec,
    #[serde(default)]
    pub train: TrainSpec,
    pub n_inputs_evaluated: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// `train-images-idx3-ubyte` from `dir`, or from `$FFINIT_MNIST_DIR`.
    Mnist {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_items: Option<usize>,
    },
    Idx {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_items: Option<usize>,
    },
    Blobs {
        n_items: usize,
        #[serde(default = "default_blob_dim")]
        dim: usize,
        #[serde(default = "default_blob_clusters")]
        n_clusters: usize,
        #[serde(default = "default_blob_spread")]
        spread: f64,
    },
    /// Data generated together with a network that reconstructs it exactly.
    Autoencodable {
        n_items: usize,
        /// Use the generating network as the trained-ae regime instead of
        /// training one.
        #[serde(default)]
        use_exact_params: bool,
    },
}

fn default_blob_dim() -> usize {
    784
}

fn default_blob_clusters() -> usize {
    10
}

fn default_blob_spread() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    RandomTied,
    TrainedAe,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::RandomTied => "random-tied",
            Regime::TrainedAe => "trained-ae",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Serde adapter for the core enums that carry a `name`/`from_name` pair.
macro_rules! named_enum {
    ($module:ident, $ty:ty, $what:literal) => {
        mod $module {
            use super::*;

            pub fn serialize<S: Serializer>(v: &$ty, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(v.name())
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<$ty, D::Error> {
                let name = String::deserialize(d)?;
                <$ty>::from_name(&name)
                    .ok_or_else(|| de::Error::custom(format!(concat!("unknown ", $what, " {:?}"), name)))
            }
        }
    };
}

named_enum!(scheme_name, Scheme, "scheme");
named_enum!(rule_name, TrainRule, "training rule");
named_enum!(activation_name, Activation, "activation");
named_enum!(optimizer_name, Optimizer, "optimizer");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxationSpec {
    #[serde(with = "scheme_name")]
    pub scheme: Scheme,
    pub tau: f64,
    pub noise_scale: f64,
    pub max_iters: usize,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for RelaxationSpec {
    fn default() -> Self {
        let d = RelaxationConfig::default();
        Self {
            scheme: d.scheme,
            tau: d.tau,
            noise_scale: d.noise_scale,
            max_iters: d.max_iters,
            tol: d.tol,
            seed: None,
        }
    }
}

impl RelaxationSpec {
    pub fn to_config(&self, fallback_seed: u64) -> RelaxationConfig {
        RelaxationConfig {
            scheme: self.scheme,
            tau: self.tau,
            noise_scale: self.noise_scale,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed.unwrap_or(fallback_seed),
            ..RelaxationConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(with = "rule_name")]
    pub rule: TrainRule,
    pub tie_decoder: bool,
    pub init_scale: f64,
    pub init_offset: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(with = "activation_name")]
    pub activation: Activation,
    #[serde(with = "optimizer_name")]
    pub optimizer: Optimizer,
    pub encoder_epochs: usize,
    pub encoder_learning_rate: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            rule: d.rule,
            tie_decoder: d.tie_decoder,
            init_scale: d.init_scale,
            init_offset: d.init_offset,
            seed: None,
            activation: d.activation,
            optimizer: d.optimizer,
            encoder_epochs: d.encoder_epochs,
            encoder_learning_rate: d.encoder_learning_rate,
        }
    }
}

impl TrainSpec {
    pub fn to_config(&self, fallback_seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            rule: self.rule,
            tie_decoder: self.tie_decoder,
            init_scale: self.init_scale,
            init_offset: self.init_offset,
            seed: self.seed.unwrap_or(fallback_seed),
            activation: self.activation,
            optimizer: self.optimizer,
            encoder_epochs: self.encoder_epochs,
            encoder_learning_rate: self.encoder_learning_rate,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment spec serialization")
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(Error::Config("regimes must not be empty".into()));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if self.regimes[..i].contains(r) {
                return Err(Error::Config(format!("regime {r} listed twice")));
            }
        }
        ffinit_core::LayerSpec::new(self.sizes.clone())
            .map_err(|e| Error::Config(format!("sizes: {e}")))?;
        self.relaxation
            .to_config(0)
            .validate()
            .map_err(|e| Error::Config(format!("relaxation: {e}")))?;
        self.train
            .to_config(0)
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))?;
        if let Some(n) = self.dataset.declared_len() {
            if self.n_inputs_evaluated > n {
                return Err(Error::Config(format!(
                    "n_inputs_evaluated {} exceeds dataset size {n}",
                    self.n_inputs_evaluated
                )));
            }
        }
        if let DatasetSpec::Blobs { dim, n_clusters, spread, .. } = self.dataset {
            if dim != self.sizes[0] {
                return Err(Error::Config(format!(
                    "blob dimension {dim} does not match visible layer size {}",
                    self.sizes[0]
                )));
            }
            if n_clusters == 0 || !(spread >= 0.0) || !spread.is_finite() {
                return Err(Error::Config("blobs need n_clusters >= 1 and finite spread >= 0".into()));
            }
        }
        Ok(())
    }
}

impl DatasetSpec {
    /// Item count when it is known before loading.
    pub fn declared_len(&self) -> Option<usize> {
        match self {
            DatasetSpec::Blobs { n_items, .. } | DatasetSpec::Autoencodable { n_items, .. } => {
                Some(*n_items)
            }
            DatasetSpec::Mnist { n_items, .. } | DatasetSpec::Idx { n_items, .. } => *n_items,
        }
    }
}
