//! Neural-collapse and alignment diagnostics.
//!
//! Zero-norm vectors never count as cosine 0: they are dropped from the
//! averages and tallied in a `degenerate` counter.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{FeatureSpace, Model};
use crate::nn::{cosine, dot, Tensor2};

/// Per-class mean features plus the global mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub space: FeatureSpace,
    /// `None` for classes without samples.
    pub prototypes: Vec<Option<Vec<f64>>>,
    pub counts: Vec<usize>,
    pub global_mean: Vec<f64>,
}

impl PrototypeSet {
    pub fn from_features(features: &Tensor2, labels: &[usize], classes: usize, space: FeatureSpace) -> Result<Self> {
        let (n, dim) = features.shape();
        if labels.len() != n {
            return Err(Error::Dimension(format!("{n} features, {} labels", labels.len())));
        }
        if n == 0 {
            return Err(Error::TooFewSamples { n: 0, min: 1 });
        }
        let mut sums = vec![vec![0.0; dim]; classes];
        let mut counts = vec![0usize; classes];
        let mut global = vec![0.0; dim];
        for (i, &l) in labels.iter().enumerate() {
            if l >= classes {
                return Err(Error::InvalidLabel { label: l, reason: format!("only {classes} classes") });
            }
            counts[l] += 1;
            for ((s, g), &x) in sums[l].iter_mut().zip(global.iter_mut()).zip(features.row(i)) {
                *s += x;
                *g += x;
            }
        }
        global.iter_mut().for_each(|g| *g /= n as f64);
        let prototypes = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
            .collect();
        Ok(Self { space, prototypes, counts, global_mean: global })
    }

    pub fn classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn present(&self) -> impl Iterator<Item = (usize, &Vec<f64>)> {
        self.prototypes.iter().enumerate().filter_map(|(c, p)| p.as_ref().map(|p| (c, p)))
    }

    /// Global mean recomputed from prototypes and counts.
    pub fn weighted_prototype_mean(&self) -> Vec<f64> {
        let total: usize = self.counts.iter().sum();
        let mut out = vec![0.0; self.global_mean.len()];
        for (c, p) in self.present() {
            let w = self.counts[c] as f64 / total as f64;
            for (o, v) in out.iter_mut().zip(p) {
                *o += w * v;
            }
        }
        out
    }
}

pub fn compute_prototypes(model: &Model, data: &LabeledDataset, space: FeatureSpace) -> Result<PrototypeSet> {
    let features = model.features(data.features(), space)?;
    PrototypeSet::from_features(&features, data.labels(), data.classes(), space)
}

/// Mean of a set of cosines, with the number of dropped degenerate pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSummary {
    pub mean: f64,
    pub comparisons: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinClassScatter {
    /// `tr Σ_W^c`, `None` for classes with fewer than 2 samples.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// Trace of the within-class covariance (1/n convention) per class.
pub fn within_class_scatter(features: &Tensor2, labels: &[usize], classes: usize) -> Result<WithinClassScatter> {
    let protos = PrototypeSet::from_features(features, labels, classes, FeatureSpace::Raw)?;
    let mut sums = vec![0.0; classes];
    for (i, &l) in labels.iter().enumerate() {
        if let Some(p) = &protos.prototypes[l] {
            sums[l] += features.row(i).iter().zip(p).map(|(x, m)| (x - m) * (x - m)).sum::<f64>();
        }
    }
    let per_class: Vec<Option<f64>> =
        sums.into_iter().zip(&protos.counts).map(|(s, &n)| (n >= 2).then(|| s / n as f64)).collect();
    let measured: Vec<f64> = per_class.iter().flatten().copied().collect();
    if measured.is_empty() {
        return Err(Error::UndefinedMetric("no class has 2 or more samples".into()));
    }
    let mean = measured.iter().sum::<f64>() / measured.len() as f64;
    Ok(WithinClassScatter { per_class, mean })
}

pub fn nc1_within_class_scatter(
    model: &Model,
    data: &LabeledDataset,
    space: FeatureSpace,
) -> Result<WithinClassScatter> {
    let features = model.features(data.features(), space)?;
    within_class_scatter(&features, data.labels(), data.classes())
}

/// Mean squared gap between pairwise prototype cosines and `−1/(C−1)`,
/// optionally after subtracting the global mean.
pub fn neural_collapse_error(protos: &PrototypeSet, classes: usize, center: bool) -> Result<f64> {
    if classes < 2 {
        return Err(Error::InvalidDimension("collapse error needs C >= 2".into()));
    }
    let target = -1.0 / (classes as f64 - 1.0);
    let vecs: Vec<(usize, Vec<f64>)> = protos
        .present()
        .map(|(c, p)| {
            let v = if center { p.iter().zip(&protos.global_mean).map(|(a, g)| a - g).collect() } else { p.clone() };
            (c, v)
        })
        .collect();
    if vecs.len() < 2 {
        return Err(Error::UndefinedMetric(format!("{} present classes, need 2", vecs.len())));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..vecs.len() {
        for j in i + 1..vecs.len() {
            let cos = cosine(&vecs[i].1, &vecs[j].1).ok_or_else(|| {
                let class = if dot(&vecs[i].1, &vecs[i].1) == 0.0 { vecs[i].0 } else { vecs[j].0 };
                Error::DegeneratePrototype { class }
            })?;
            total += (cos - target).powi(2);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Average cosine between same-class prototypes of every client pair.
pub fn prototype_consistency(client_protos: &[PrototypeSet]) -> Result<CosineSummary> {
    if client_protos.len() < 2 {
        return Err(Error::UndefinedMetric("prototype consistency needs at least 2 clients".into()));
    }
    let mut total = 0.0;
    let mut comparisons = 0;
    let mut degenerate = 0;
    for a in 0..client_protos.len() {
        for b in a + 1..client_protos.len() {
            for (pa, pb) in client_protos[a].prototypes.iter().zip(&client_protos[b].prototypes) {
                if let (Some(pa), Some(pb)) = (pa, pb) {
                    match cosine(pa, pb) {
                        Some(c) => {
                            total += c;
                            comparisons += 1;
                        }
                        None => degenerate += 1,
                    }
                }
            }
        }
    }
    if comparisons == 0 {
        return Err(Error::UndefinedMetric("no class is shared by any client pair".into()));
    }
    Ok(CosineSummary { mean: total / comparisons as f64, comparisons, degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nc3Alignment {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// Cosine between each centered prototype and its classifier vector.
/// `classifier_rows` is `C×dim`.
pub fn nc3_alignment(protos: &PrototypeSet, classifier_rows: &Tensor2) -> Result<Nc3Alignment> {
    if classifier_rows.rows() != protos.classes() || classifier_rows.cols() != protos.global_mean.len() {
        return Err(Error::Dimension(format!(
            "classifier {}x{} vs {} prototypes of dim {}",
            classifier_rows.rows(),
            classifier_rows.cols(),
            protos.classes(),
            protos.global_mean.len()
        )));
    }
    let mut per_class = vec![None; protos.classes()];
    for (c, p) in protos.present() {
        let centered: Vec<f64> = p.iter().zip(&protos.global_mean).map(|(a, g)| a - g).collect();
        let cos = cosine(&centered, classifier_rows.row(c)).ok_or(Error::DegeneratePrototype { class: c })?;
        per_class[c] = Some(cos);
    }
    let vals: Vec<f64> = per_class.iter().flatten().copied().collect();
    if vals.is_empty() {
        return Err(Error::UndefinedMetric("no present class".into()));
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok(Nc3Alignment { per_class, mean })
}

/// Mean cosine over unordered pairs of vectors; zero vectors are skipped.
pub fn mean_pairwise_cosine(vectors: &[Vec<f64>]) -> Result<CosineSummary> {
    if vectors.len() < 2 {
        return Err(Error::UndefinedMetric("need at least 2 vectors".into()));
    }
    let len = vectors[0].len();
    if vectors.iter().any(|v| v.len() != len) {
        return Err(Error::Dimension("vectors differ in length".into()));
    }
    let mut total = 0.0;
    let mut comparisons = 0;
    let mut degenerate = 0;
    for a in 0..vectors.len() {
        for b in a + 1..vectors.len() {
            match cosine(&vectors[a], &vectors[b]) {
                Some(c) => {
                    total += c;
                    comparisons += 1;
                }
                None => degenerate += 1,
            }
        }
    }
    if comparisons == 0 {
        return Err(Error::UndefinedMetric("every pair is degenerate".into()));
    }
    Ok(CosineSummary { mean: total / comparisons as f64, comparisons, degenerate })
}

/// Mean pairwise cosine of the models' learned, aggregated parameters
/// (the ETF matrix is left out).
pub fn model_consistency(models: &[Model]) -> Result<f64> {
    let first = models.first().ok_or_else(|| Error::UndefinedMetric("no models".into()))?;
    let layout = first.layout();
    if models.iter().any(|m| m.layout() != layout) {
        return Err(Error::Aggregation("model layouts differ".into()));
    }
    let groups = first.federated_groups();
    let flat: Vec<Vec<f64>> = models.iter().map(|m| m.flatten_groups(groups)).collect();
    Ok(mean_pairwise_cosine(&flat)?.mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSimilarity {
    pub per_class: Vec<Option<f64>>,
    /// Mean of the defined per-class values.
    pub mean: Option<f64>,
    pub degenerate: usize,
}

/// Per-class mean cosine of the class-wise classifier vectors across
/// clients. Each entry of `classifiers` is `C×dim`, one row per class.
pub fn classifier_similarity(classifiers: &[Tensor2]) -> Result<ClassifierSimilarity> {
    let first = classifiers.first().ok_or_else(|| Error::UndefinedMetric("no classifiers".into()))?;
    if classifiers.iter().any(|c| c.shape() != first.shape()) {
        return Err(Error::Dimension("classifier shapes differ".into()));
    }
    let classes = first.rows();
    let mut per_class = Vec::with_capacity(classes);
    let mut degenerate = 0;
    for c in 0..classes {
        let mut total = 0.0;
        let mut n = 0usize;
        for a in 0..classifiers.len() {
            for b in a + 1..classifiers.len() {
                match cosine(classifiers[a].row(c), classifiers[b].row(c)) {
                    Some(v) => {
                        total += v;
                        n += 1;
                    }
                    None => degenerate += 1,
                }
            }
        }
        per_class.push((n > 0).then(|| total / n as f64));
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(ClassifierSimilarity { per_class, mean, degenerate })
}
