//! TOML experiment configuration.
//!
//! Loading fills in every default and validates cross-field constraints; the
//! resolved form is written next to the run outputs and re-loads to the
//! same value.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::idx::parse_labels;
use crate::data::partition::{DEFAULT_MAX_RETRIES, DEFAULT_MIN_PER_CLIENT};
use crate::data::{PartitionSpec, DEFAULT_TRAIN_FRACTION};
use crate::error::{Error, Result};
use crate::federation::{FederationConfig, FinetuneConfig, DEFAULT_BATCH_SIZE, DEFAULT_GAMMA};
use crate::model::Algorithm;
use crate::nn::{decayed_lr, DEFAULT_LR_DECAY, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Rounds between checkpoints; 0 writes only the final model.
    #[serde(default)]
    pub checkpoint_interval: usize,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub partition: PartitionSection,
    pub federation: FederationSection,
    #[serde(default)]
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    Idx(IdxSpec),
}

impl DatasetSpec {
    /// Class count; only known for IDX data after resolution.
    pub fn classes(&self) -> Option<usize> {
        match self {
            DatasetSpec::Synthetic(s) => Some(s.classes),
            DatasetSpec::Idx(s) => s.classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Training samples per class before partitioning.
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    /// Samples per class of the balanced global test set.
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    #[serde(default = "default_class_sep")]
    pub class_sep: f64,
    /// Defaults to the federation seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSpec {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    /// Balanced global test pair.
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Defaults to `max train label + 1`.
    #[serde(default)]
    pub classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSection {
    pub alpha: f64,
    pub min_per_client: usize,
    pub max_retries: usize,
    pub train_fraction: f64,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            min_per_client: DEFAULT_MIN_PER_CLIENT,
            max_retries: DEFAULT_MAX_RETRIES,
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

/// What `run` trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    FedAvg,
    FedEtf,
    /// Both algorithms on the same partition and sampling list.
    Compare,
}

impl RunMode {
    pub fn algorithms(self) -> &'static [Algorithm] {
        match self {
            RunMode::FedAvg => &[Algorithm::FedAvg],
            RunMode::FedEtf => &[Algorithm::FedEtf],
            RunMode::Compare => &[Algorithm::FedAvg, Algorithm::FedEtf],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    #[serde(default = "default_mode")]
    pub algorithm: RunMode,
    pub clients: usize,
    pub rounds: usize,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_sampling_rate")]
    pub sampling_rate: f64,
    /// Defaults to the class count.
    #[serde(default)]
    pub feature_dim: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Initial temperature of the ETF head.
    #[serde(default = "default_beta")]
    pub initial_beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Prototype, collapse and consistency metrics every round.
    pub collapse: bool,
    /// Fill the `wall_ms` column. Off by default so reruns are byte-identical.
    pub wall_time: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { collapse: true, wall_time: false }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_classes() -> usize {
    10
}
fn default_dim() -> usize {
    16
}
fn default_per_class() -> usize {
    200
}
fn default_test_per_class() -> usize {
    100
}
fn default_class_sep() -> f64 {
    DEFAULT_CLASS_SEP
}
fn default_mode() -> RunMode {
    RunMode::FedEtf
}
fn default_local_epochs() -> usize {
    3
}
fn default_lr() -> f64 {
    0.04
}
fn default_lr_decay() -> f64 {
    DEFAULT_LR_DECAY
}
fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}
fn default_weight_decay() -> f64 {
    DEFAULT_WEIGHT_DECAY
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_sampling_rate() -> f64 {
    1.0
}
fn default_hidden() -> Vec<usize> {
    vec![32, 16]
}
fn default_seed() -> u64 {
    7
}
fn default_beta() -> f64 {
    crate::etf::INITIAL_BETA
}

/// Radius of the synthetic class means.
pub const DEFAULT_CLASS_SEP: f64 = 3.0;

impl ExperimentConfig {
    /// Parses and resolves `text`; relative paths are taken against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: ExperimentConfig = toml::from_str(text).map_err(toml_error)?;
        raw.resolve(base_dir)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Fills derived defaults, makes paths absolute and validates.
    pub fn resolve(mut self, base_dir: &Path) -> Result<Self> {
        let absolute = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        self.output_dir = absolute(&self.output_dir);
        match &mut self.dataset {
            DatasetSpec::Synthetic(s) => {
                s.seed.get_or_insert(self.federation.seed);
                if s.classes < 2 {
                    return Err(Error::config("dataset.classes", "must be >= 2"));
                }
                if s.dim < 2 {
                    return Err(Error::config("dataset.dim", "must be >= 2"));
                }
                if s.per_class == 0 {
                    return Err(Error::config("dataset.per_class", "must be >= 1"));
                }
                if s.test_per_class == 0 {
                    return Err(Error::config("dataset.test_per_class", "must be >= 1"));
                }
                if !(s.class_sep > 0.0) || !s.class_sep.is_finite() {
                    return Err(Error::config("dataset.class_sep", "must be finite and > 0"));
                }
            }
            DatasetSpec::Idx(s) => {
                for (key, path) in [
                    ("dataset.train_images", &mut s.train_images),
                    ("dataset.train_labels", &mut s.train_labels),
                    ("dataset.test_images", &mut s.test_images),
                    ("dataset.test_labels", &mut s.test_labels),
                ] {
                    *path = absolute(path);
                    if !path.is_file() {
                        return Err(Error::config(key, format!("{} does not exist", path.display())));
                    }
                }
                if s.classes.is_none() {
                    let bytes = fs::read(&s.train_labels).map_err(|e| Error::io(&s.train_labels, e))?;
                    let labels = parse_labels(&bytes)?;
                    let max = labels.iter().copied().max().ok_or_else(|| Error::format(8, "no labels"))?;
                    s.classes = Some(max as usize + 1);
                }
                if s.classes < Some(2) {
                    return Err(Error::config("dataset.classes", "must be >= 2"));
                }
            }
        }
        let classes = self.dataset.classes().expect("resolved above");
        self.federation.feature_dim.get_or_insert(classes);
        if !self.federation.initial_beta.is_finite() {
            return Err(Error::config("federation.initial_beta", "must be finite"));
        }
        self.partition_spec().validate()?;
        if self.partition.min_per_client < 2 {
            return Err(Error::config("partition.min_per_client", "must be >= 2 so both splits are nonempty"));
        }
        if !(self.partition.train_fraction > 0.0 && self.partition.train_fraction < 1.0) {
            return Err(Error::config("partition.train_fraction", "must lie in (0, 1)"));
        }
        for &alg in self.federation.algorithm.algorithms() {
            self.federation_config(alg).validate(classes)?;
        }
        if self.federation.rounds == 0 {
            return Err(Error::config("federation.rounds", "must be >= 1"));
        }
        self.finetune.validate()?;
        let lr = decayed_lr(self.federation.lr, self.federation.lr_decay, self.federation.rounds - 1);
        self.finetune.lr.get_or_insert(lr);
        Ok(self)
    }

    pub fn classes(&self) -> usize {
        self.dataset.classes().expect("config is resolved")
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        PartitionSpec {
            clients: self.federation.clients,
            alpha: self.partition.alpha,
            min_per_client: self.partition.min_per_client,
            max_retries: self.partition.max_retries,
            seed: self.federation.seed,
        }
    }

    /// Federation settings for one algorithm of the run.
    pub fn federation_config(&self, algorithm: Algorithm) -> FederationConfig {
        let f = &self.federation;
        FederationConfig {
            algorithm,
            clients: f.clients,
            rounds: f.rounds,
            local_epochs: f.local_epochs,
            lr: f.lr,
            lr_decay: f.lr_decay,
            momentum: f.momentum,
            weight_decay: f.weight_decay,
            gamma: f.gamma,
            batch_size: f.batch_size,
            sampling_rate: f.sampling_rate,
            feature_dim: f.feature_dim.unwrap_or_else(|| self.dataset.classes().unwrap_or(0)),
            hidden: f.hidden.clone(),
            seed: f.seed,
        }
    }
}

fn toml_error(e: toml::de::Error) -> Error {
    let message = e.message().to_string();
    let key = message.split('`').nth(1).unwrap_or("<config>").to_string();
    Error::Config { key, message }
}

/// Reads, resolves and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = base.canonicalize().map_err(|e| Error::io(base, e))?;
    ExperimentConfig::from_toml_str(&text, &base)
}
