use rand::seq::SliceRandom;
use rand::Rng;

use super::dataset::{ClientDataset, LabeledDataset};
use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

/// Number of training samples out of `n`: `min(⌈fraction·n⌉, n − 1)`.
pub fn train_size(n: usize, fraction: f64) -> usize {
    let raw = (fraction * n as f64 - 1e-9).ceil().max(1.0) as usize;
    raw.min(n - 1)
}

/// Shuffles a client's indices and splits them into train/test.
pub fn split_client<R: Rng + ?Sized>(
    id: usize,
    data: &LabeledDataset,
    indices: &[usize],
    train_fraction: f64,
    rng: &mut R,
) -> Result<ClientDataset> {
    let n = indices.len();
    if n < 2 {
        return Err(Error::TooFewSamples { n, min: 2 });
    }
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(rng);
    let cut = train_size(n, train_fraction);
    let train_indices = shuffled[..cut].to_vec();
    let test_indices = shuffled[cut..].to_vec();
    let train = data.subset(&train_indices)?;
    let test = data.subset(&test_indices)?;
    let counts = train.class_counts();
    Ok(ClientDataset { id, train, test, train_indices, test_indices, counts })
}
