use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Tensor2,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Tensor2, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!("{} feature rows, {} labels", features.rows(), labels.len())));
        }
        if labels.is_empty() {
            return Err(Error::TooFewSamples { n: 0, min: 1 });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label: bad, reason: format!("only {classes} classes") });
        }
        Ok(Self { features, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.features.select_rows(indices), indices.iter().map(|&i| self.labels[i]).collect(), self.classes)
    }
}

/// One client's local data after the train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub id: usize,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Indices into the pooled dataset.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Per-class counts of the trainset (`n_{k,c}`).
    pub counts: Vec<usize>,
}

impl ClientDataset {
    /// Local trainset size `n_k`.
    pub fn size(&self) -> usize {
        self.train.len()
    }
}
