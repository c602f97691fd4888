use super::config::{FederationConfig, FinetuneConfig};
use super::eval::accuracy;
use super::train::{train_epochs, SgdSettings};
use crate::data::ClientDataset;
use crate::error::Result;
use crate::model::{Algorithm, Model, Objective};
use crate::nn::ParamGroup;
use crate::rng::{substream, tag};

/// One finetuning stage: a label and the groups it updates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub label: String,
    pub trainable: Vec<ParamGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageAccuracy {
    pub label: String,
    pub local_test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: Model,
    /// Starts with the untouched global model (`init`), then one entry per stage.
    pub trace: Vec<StageAccuracy>,
}

/// Stage schedule for a model. ETF head: `extractor` on `{u, β}`, then
/// `rounds` alternations of `etf_t` on `{V, β}` and `proj_t` on `{p, β}`.
/// Linear head: `1 + 2·rounds` whole-model stages `whole_i`, the same
/// epoch budget.
pub fn finetune_stages(algorithm: Algorithm, rounds: usize) -> Vec<Stage> {
    use ParamGroup::*;
    match algorithm {
        Algorithm::FedEtf => {
            let mut stages = vec![Stage { label: "extractor".into(), trainable: vec![Extractor, Temperature] }];
            for t in 1..=rounds {
                stages.push(Stage { label: format!("etf_{t}"), trainable: vec![Etf, Temperature] });
                stages.push(Stage { label: format!("proj_{t}"), trainable: vec![Projection, Temperature] });
            }
            stages
        }
        Algorithm::FedAvg => (1..=1 + 2 * rounds)
            .map(|i| Stage { label: format!("whole_{i}"), trainable: vec![Extractor, Classifier] })
            .collect(),
    }
}

/// Finetuning rate: the configured one, else the rate of the last
/// federated round.
pub fn finetune_lr(cfg: &FederationConfig, ft: &FinetuneConfig) -> f64 {
    ft.lr.unwrap_or_else(|| crate::nn::decayed_lr(cfg.lr, cfg.lr_decay, cfg.rounds.saturating_sub(1)))
}

pub fn personalized_finetune(
    global: &Model,
    client: &ClientDataset,
    cfg: &FederationConfig,
    ft: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    personalized_finetune_observed(global, client, cfg, ft, |_, _, _| {})
}

/// As [`personalized_finetune`], calling `observe(stage, before, after)`
/// after every stage.
pub fn personalized_finetune_observed<F>(
    global: &Model,
    client: &ClientDataset,
    cfg: &FederationConfig,
    ft: &FinetuneConfig,
    mut observe: F,
) -> Result<FinetuneOutcome>
where
    F: FnMut(&Stage, &Model, &Model),
{
    let objective = match global.algorithm() {
        Algorithm::FedEtf => Objective::Vanilla,
        Algorithm::FedAvg => Objective::CrossEntropy,
    };
    let settings = SgdSettings {
        lr: finetune_lr(cfg, ft),
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        batch_size: cfg.batch_size,
        epochs: ft.epochs,
    };
    let mut model = global.clone();
    let mut trace = vec![StageAccuracy { label: "init".into(), local_test_acc: accuracy(&model, &client.test)?.value }];
    for (i, stage) in finetune_stages(global.algorithm(), ft.rounds).iter().enumerate() {
        let mut rng = substream(cfg.seed, &[tag::FINETUNE, client.id as u64, i as u64]);
        let out = train_epochs(
            &model,
            &client.train,
            &objective,
            &settings,
            &stage.trainable,
            &mut rng,
            (client.id, cfg.rounds),
        )?;
        observe(stage, &model, &out.model);
        model = out.model;
        trace.push(StageAccuracy { label: stage.label.clone(), local_test_acc: accuracy(&model, &client.test)?.value });
    }
    Ok(FinetuneOutcome { model, trace })
}
