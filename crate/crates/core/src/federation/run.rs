use std::time::Instant;

use rayon::prelude::*;

use super::aggregate::aggregate;
use super::config::FederationConfig;
use super::eval::accuracy;
use super::record::RoundRecord;
use super::sampling::SamplingList;
use super::train::{local_train, TrainOutcome};
use crate::data::{ClientDataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::{
    classifier_similarity, compute_prototypes, model_consistency, neural_collapse_error, prototype_consistency,
};
use crate::model::{Algorithm, FeatureSpace, Model};
use crate::nn::decayed_lr;

/// Per-round diagnostic toggles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Prototype, collapse, consistency and classifier metrics.
    pub collapse: bool,
    /// Record wall time per round (makes output run-dependent).
    pub wall_time: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self { collapse: true, wall_time: false }
    }
}

#[derive(Debug, Clone)]
pub struct FederatedRun {
    pub model: Model,
    pub history: Vec<RoundRecord>,
    /// Learning rate of the last round that ran.
    pub final_lr: f64,
    pub warnings: Vec<String>,
}

/// Feature space the diagnostics read for a given head.
pub fn diagnostic_space(algorithm: Algorithm) -> FeatureSpace {
    match algorithm {
        Algorithm::FedEtf => FeatureSpace::Projected,
        Algorithm::FedAvg => FeatureSpace::Raw,
    }
}

/// Metrics that cannot be computed this round (undefined, or a prototype
/// that collapsed to zero) are recorded as missing with a warning instead of
/// aborting training.
fn soft_metric<T>(r: Result<T>, round: usize, name: &str, warnings: &mut Vec<String>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e @ (Error::UndefinedMetric(_) | Error::DegeneratePrototype { .. } | Error::DegenerateFeature { .. })) => {
            warnings.push(format!("round {round}: {name} skipped: {e}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Broadcast, local training on the sampled clients, size-weighted
/// aggregation and evaluation, for `cfg.rounds` rounds. `on_round` sees the
/// aggregated model after every round (1-based index).
pub fn run_federated_training<F>(
    cfg: &FederationConfig,
    clients: &[ClientDataset],
    init: Model,
    sampling: &SamplingList,
    global_test: &LabeledDataset,
    diagnostics: Diagnostics,
    mut on_round: F,
) -> Result<FederatedRun>
where
    F: FnMut(usize, &Model) -> Result<()>,
{
    if clients.len() != cfg.clients || sampling.clients != cfg.clients {
        return Err(Error::Dimension(format!(
            "config has {} clients, data {}, sampling list {}",
            cfg.clients,
            clients.len(),
            sampling.clients
        )));
    }
    if sampling.num_rounds() < cfg.rounds {
        return Err(Error::Dimension(format!(
            "sampling list covers {} rounds, need {}",
            sampling.num_rounds(),
            cfg.rounds
        )));
    }
    if let Some((k, _)) = clients.iter().enumerate().find(|(k, c)| c.id != *k) {
        return Err(Error::Dimension(format!("client at position {k} has a mismatched id")));
    }
    if init.algorithm() != cfg.algorithm {
        return Err(Error::InvalidDimension("initial model does not match the configured algorithm".into()));
    }

    let space = diagnostic_space(cfg.algorithm);
    let mut global = init;
    let mut history = Vec::with_capacity(cfg.rounds);
    let mut warnings = Vec::new();
    let mut final_lr = cfg.lr;

    for t in 0..cfg.rounds {
        let started = Instant::now();
        let lr = decayed_lr(cfg.lr, cfg.lr_decay, t);
        final_lr = lr;
        let selected = sampling.round(t);
        let outcomes: Vec<TrainOutcome> =
            selected.par_iter().map(|&k| local_train(&global, &clients[k], cfg, t, lr)).collect::<Result<_>>()?;
        let sizes: Vec<usize> = selected.iter().map(|&k| clients[k].size()).collect();
        let locals: Vec<Model> = outcomes.iter().map(|o| o.model.clone()).collect();
        global = aggregate(&locals, &sizes)?;

        let acc = accuracy(&global, global_test)?;
        if acc.nonpositive_beta {
            warnings.push(format!("round {}: beta <= 0, predicting from raw products", t + 1));
        }
        let mean_train_loss = outcomes.iter().map(|o| o.mean_loss).sum::<f64>() / outcomes.len() as f64;

        let mut record = RoundRecord {
            round: t + 1,
            global_acc: acc.value,
            mean_train_loss,
            lr,
            beta: global.beta(),
            proto_consistency: None,
            nc_error_uncentered: None,
            nc_error_centered: None,
            model_consistency: None,
            classifier_similarity: None,
            wall_ms: None,
        };

        if diagnostics.collapse {
            let round = t + 1;
            let w = &mut warnings;
            let client_protos = selected
                .par_iter()
                .zip(&locals)
                .map(|(&k, m)| compute_prototypes(m, &clients[k].train, space))
                .collect::<Result<Vec<_>>>();
            if let Some(protos) = soft_metric(client_protos, round, "proto_consistency", w)? {
                record.proto_consistency =
                    soft_metric(prototype_consistency(&protos).map(|s| s.mean), round, "proto_consistency", w)?;
            }
            if let Some(global_protos) =
                soft_metric(compute_prototypes(&global, global_test, space), round, "nc_error", w)?
            {
                let classes = global.classes();
                record.nc_error_uncentered = soft_metric(
                    neural_collapse_error(&global_protos, classes, false),
                    round,
                    "nc_error_uncentered",
                    w,
                )?;
                record.nc_error_centered =
                    soft_metric(neural_collapse_error(&global_protos, classes, true), round, "nc_error_centered", w)?;
            }
            if locals.len() >= 2 {
                record.model_consistency = soft_metric(model_consistency(&locals), round, "model_consistency", w)?;
                if cfg.algorithm == Algorithm::FedAvg {
                    let rows: Vec<_> = locals.iter().map(Model::classifier_rows).collect();
                    record.classifier_similarity = classifier_similarity(&rows)?.mean;
                }
            }
        }
        if diagnostics.wall_time {
            record.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
        }
        history.push(record);
        on_round(t + 1, &global)?;
    }
    Ok(FederatedRun { model: global, history, final_lr, warnings })
}
