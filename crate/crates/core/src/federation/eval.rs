use crate::data::{ClientDataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub value: f64,
    /// Set when `β <= 0` forced the temperature-free prediction rule.
    pub nonpositive_beta: bool,
}

pub fn accuracy(model: &Model, data: &LabeledDataset) -> Result<Accuracy> {
    if data.is_empty() {
        return Err(Error::TooFewSamples { n: 0, min: 1 });
    }
    let (pred, flagged) = model.predict_batch(data.features())?;
    let correct = pred.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(Accuracy { value: correct as f64 / data.len() as f64, nonpositive_beta: flagged })
}

/// Accuracy of the global model on the balanced test set.
pub fn evaluate_generalization(model: &Model, balanced_test: &LabeledDataset) -> Result<f64> {
    Ok(accuracy(model, balanced_test)?.value)
}

/// Unweighted mean over clients of each model's accuracy on its client's
/// local test split.
pub fn evaluate_personalization(models: &[Model], clients: &[ClientDataset]) -> Result<f64> {
    if models.len() != clients.len() || models.is_empty() {
        return Err(Error::Dimension(format!("{} models for {} clients", models.len(), clients.len())));
    }
    let mut total = 0.0;
    for (m, c) in models.iter().zip(clients) {
        total += accuracy(m, &c.test)?.value;
    }
    Ok(total / clients.len() as f64)
}
