use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Algorithm;
use crate::nn::{DEFAULT_LR_DECAY, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY};

pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_GAMMA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub algorithm: Algorithm,
    pub clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    /// Initial local learning rate.
    pub lr: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Exponent on the class counts in the balanced loss.
    pub gamma: f64,
    pub batch_size: usize,
    pub sampling_rate: f64,
    /// ETF feature dimension `d`.
    pub feature_dim: usize,
    /// Extractor layer widths; the last one is the raw feature size.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl FederationConfig {
    /// Defaults for a `classes`-way problem with the given size.
    pub fn new(algorithm: Algorithm, clients: usize, rounds: usize, classes: usize) -> Self {
        Self {
            algorithm,
            clients,
            rounds,
            local_epochs: 3,
            lr: 0.04,
            lr_decay: DEFAULT_LR_DECAY,
            momentum: DEFAULT_MOMENTUM,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            gamma: DEFAULT_GAMMA,
            batch_size: DEFAULT_BATCH_SIZE,
            sampling_rate: 1.0,
            feature_dim: classes,
            hidden: vec![32, 16],
            seed: 7,
        }
    }

    /// Clients selected per round: `⌈rate·K⌉`.
    pub fn clients_per_round(&self) -> usize {
        clients_per_round(self.clients, self.sampling_rate)
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        let positive =
            [("clients", self.clients), ("local_epochs", self.local_epochs), ("batch_size", self.batch_size)];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("federation.{key}"), "must be >= 1"));
            }
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("federation.lr", "must be finite and > 0"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("federation.lr_decay", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("federation.momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::config("federation.weight_decay", "must be finite and >= 0"));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::config("federation.gamma", "must be finite and >= 0"));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(Error::config(
                "federation.sampling_rate",
                format!("must lie in (0, 1], got {}", self.sampling_rate),
            ));
        }
        if self.sampling_rate * self.clients as f64 + 1e-9 < 1.0 {
            return Err(Error::config("federation.sampling_rate", "sampling_rate * clients must be >= 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("federation.hidden", "needs at least one positive layer width"));
        }
        if self.algorithm == Algorithm::FedEtf && self.feature_dim < classes {
            return Err(Error::config(
                "federation.feature_dim",
                format!("ETF dimension {} must be >= class count {classes}", self.feature_dim),
            ));
        }
        Ok(())
    }
}

pub fn clients_per_round(clients: usize, rate: f64) -> usize {
    ((rate * clients as f64 - 1e-9).ceil() as usize).clamp(1, clients)
}

/// Personalized finetuning schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    /// Alternations of (ETF classifier, projection) stages.
    pub rounds: usize,
    /// Epochs per stage.
    pub epochs: usize,
    /// Finetuning learning rate; `None` uses the last federated rate.
    pub lr: Option<f64>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { rounds: 3, epochs: 1, lr: None }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("finetune.epochs", "must be >= 1"));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::config("finetune.lr", "must be finite and > 0"));
            }
        }
        Ok(())
    }
}
