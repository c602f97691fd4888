//! Federated training rounds, aggregation, evaluation and per-client
//! finetuning.

pub mod aggregate;
pub mod config;
pub mod eval;
pub mod finetune;
pub mod record;
pub mod run;
pub mod sampling;
pub mod train;

pub use aggregate::aggregate;
pub use config::{clients_per_round, FederationConfig, FinetuneConfig, DEFAULT_BATCH_SIZE, DEFAULT_GAMMA};
pub use eval::{accuracy, evaluate_generalization, evaluate_personalization, Accuracy};
pub use finetune::{
    finetune_lr, finetune_stages, personalized_finetune, personalized_finetune_observed, FinetuneOutcome, Stage,
    StageAccuracy,
};
pub use record::{history_csv, RoundRecord};
pub use run::{diagnostic_space, run_federated_training, Diagnostics, FederatedRun};
pub use sampling::SamplingList;
pub use train::{federated_objective, local_train, train_epochs, SgdSettings, TrainOutcome, DECAY_EXEMPT};
