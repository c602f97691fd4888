//! Fixed simplex-ETF classifier: synthesis, projection head, losses.

pub mod head;
pub mod loss;
pub mod synth;

pub use head::{
    forward_head, predict, predict_with_temperature, projection_head, HeadOutput, ProjectionHead, INITIAL_BETA,
};
pub use loss::{balanced_feature_loss, logit_cross_entropy, vanilla_feature_loss, FeatureLoss};
pub use synth::{etf_geometry_error, synthesize_etf, EtfClassifier};
