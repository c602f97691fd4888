//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::path::Path;

use fedetf_core::data::LabeledDataset;
use fedetf_core::experiment::ExperimentConfig;
use fedetf_core::federation::FederationConfig;
use fedetf_core::nn::{ParamGroup, ParamSet};
use fedetf_core::rng::client_round_rng;
use fedetf_core::{Model, Objective};
use rand::seq::SliceRandom;

/// Centralized training written out by hand: per round a fresh momentum
/// buffer, `lr₀·decay^t`, the same keyed shuffle stream as client 0, and a
/// scalar-loop SGD update on every group except the ETF matrix.
pub fn standalone_training(
    init: &Model,
    data: &LabeledDataset,
    objective: &Objective,
    cfg: &FederationConfig,
) -> Model {
    let mut model = init.clone();
    for t in 0..cfg.rounds {
        let lr = cfg.lr * cfg.lr_decay.powi(t as i32);
        let mut rng = client_round_rng(cfg.seed, 0, t);
        let mut bufs: Vec<Vec<f64>> = model.slices().iter().map(|(_, s)| vec![0.0; s.len()]).collect();
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..cfg.local_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let x = data.features().select_rows(chunk);
                let y: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
                let (_, grads) = model.loss_and_grad(&x, &y, objective).unwrap();
                let grads = grads.slices();
                for (((group, p), (_, g)), b) in model.slices_mut().into_iter().zip(grads).zip(bufs.iter_mut()) {
                    if group == ParamGroup::Etf {
                        continue;
                    }
                    let wd = if group == ParamGroup::Temperature { 0.0 } else { cfg.weight_decay };
                    for i in 0..p.len() {
                        let step = g[i] + wd * p[i];
                        b[i] = cfg.momentum * b[i] + step;
                        p[i] -= lr * b[i];
                    }
                }
            }
        }
    }
    model
}

/// `Σ_k n_k·x_k / Σ_k n_k` coordinate by coordinate.
pub fn weighted_mean_oracle(vectors: &[Vec<f64>], sizes: &[usize]) -> Vec<f64> {
    let total: f64 = sizes.iter().map(|&n| n as f64).sum();
    (0..vectors[0].len())
        .map(|i| {
            let mut acc = 0.0;
            for (v, &n) in vectors.iter().zip(sizes) {
                acc += n as f64 * v[i];
            }
            acc / total
        })
        .collect()
}

/// Max deviation of `VᵀV` from the simplex-ETF Gram matrix.
pub fn etf_gram_deviation(columns: &[Vec<f64>]) -> f64 {
    let c = columns.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, a) in columns.iter().enumerate() {
        for (j, b) in columns.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let target = if i == j { 1.0 } else { -1.0 / (c - 1.0) };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// The desk-scale comparison setup: 10-class, 16-dim Gaussian mixture with
/// 200 samples per class, 10 clients at α = 0.05, a 16→32→16 extractor,
/// d = 10, 50 rounds of 3 local epochs.
pub fn desk_config(seed: u64, output_dir: &Path) -> ExperimentConfig {
    let text = format!(
        r#"output_dir = "{out}"

[dataset]
kind = "synthetic"
classes = 10
dim = 16
per_class = 200
class_sep = 3.0

[partition]
alpha = 0.05

[federation]
algorithm = "compare"
clients = 10
rounds = 50
local_epochs = 3
feature_dim = 10
hidden = [32, 16]
seed = {seed}

[finetune]
rounds = 3
epochs = 1
"#,
        out = output_dir.display()
    );
    ExperimentConfig::from_toml_str(&text, output_dir).unwrap()
}

/// Natural-log entropy of a label histogram.
pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}
