use rand::seq::SliceRandom;

use super::config::FederationConfig;
use crate::data::{ClientDataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{Algorithm, Model, Objective};
use crate::nn::{sgd_step, OptimizerState, ParamGroup};
use crate::rng::{client_round_rng, SimRng};

/// Optimizer settings for one local training session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSettings {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean mini-batch loss over all steps; NaN when no step ran.
    pub mean_loss: f64,
    pub steps: usize,
}

/// Groups never weight-decayed.
pub const DECAY_EXEMPT: &[ParamGroup] = &[ParamGroup::Temperature];

/// Shuffled mini-batch SGD over `data` for `settings.epochs` epochs,
/// updating only the `trainable` groups. The input model is left as is.
/// Errors are tagged with `(client, round)` and the failing batch index.
pub fn train_epochs(
    model: &Model,
    data: &LabeledDataset,
    objective: &Objective,
    settings: &SgdSettings,
    trainable: &[ParamGroup],
    rng: &mut SimRng,
    context: (usize, usize),
) -> Result<TrainOutcome> {
    let mut model = model.clone();
    if settings.epochs == 0 {
        return Ok(TrainOutcome { model, mean_loss: f64::NAN, steps: 0 });
    }
    let wrap =
        |batch: usize, e: Error| Error::Client { client: context.0, round: context.1, batch, source: Box::new(e) };
    let mut state = OptimizerState::new(&model, settings.lr, settings.momentum, settings.weight_decay)
        .map_err(|e| wrap(0, e))?
        .freeze_except(trainable);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    let mut steps = 0;
    for _ in 0..settings.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(settings.batch_size.max(1)) {
            let x = data.features().select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let (loss, grads) = model.loss_and_grad(&x, &y, objective).map_err(|e| wrap(steps, e))?;
            sgd_step(&mut model, &grads, &mut state, DECAY_EXEMPT).map_err(|e| wrap(steps, e))?;
            total += loss;
            steps += 1;
        }
    }
    Ok(TrainOutcome { model, mean_loss: total / steps as f64, steps })
}

/// Training objective of the federated phase.
pub fn federated_objective(cfg: &FederationConfig, client: &ClientDataset) -> Objective {
    match cfg.algorithm {
        Algorithm::FedEtf => Objective::Balanced { counts: client.counts.clone(), gamma: cfg.gamma },
        Algorithm::FedAvg => Objective::CrossEntropy,
    }
}

/// One client's local update in round `round` (0-based): `E` epochs on its
/// trainset with a fresh optimizer. The ETF matrix stays fixed.
pub fn local_train(
    model: &Model,
    client: &ClientDataset,
    cfg: &FederationConfig,
    round: usize,
    round_lr: f64,
) -> Result<TrainOutcome> {
    let settings = SgdSettings {
        lr: round_lr,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        batch_size: cfg.batch_size,
        epochs: cfg.local_epochs,
    };
    let mut rng = client_round_rng(cfg.seed, client.id, round);
    let objective = federated_objective(cfg, client);
    train_epochs(model, &client.train, &objective, &settings, model.federated_groups(), &mut rng, (client.id, round))
}
