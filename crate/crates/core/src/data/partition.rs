//! Label-skewed partitioning with one Dirichlet draw per class.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{substream, tag};

pub const DEFAULT_MIN_PER_CLIENT: usize = 2;
pub const DEFAULT_MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub clients: usize,
    /// Dirichlet concentration; smaller is more skewed.
    pub alpha: f64,
    pub min_per_client: usize,
    pub max_retries: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn new(clients: usize, alpha: f64, seed: u64) -> Self {
        Self { clients, alpha, min_per_client: DEFAULT_MIN_PER_CLIENT, max_retries: DEFAULT_MAX_RETRIES, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::config("federation.clients", "must be >= 1"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config("partition.alpha", format!("must be finite and > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Symmetric Dirichlet draw via normalized Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(k: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    loop {
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = g.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return g.into_iter().map(|x| x / sum).collect();
        }
    }
}

/// Integer counts summing to `total`: floors of `p·total`, with the
/// remainder handed to the largest fractional parts (ties: lower index).
pub fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = proportions.iter().sum();
    let quotas: Vec<f64> = proportions.iter().map(|p| p / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    if assigned <= total {
        for &i in order.iter().cycle().take(total - assigned) {
            counts[i] += 1;
        }
    } else {
        // Only reachable through rounding in the quotas.
        let mut surplus = assigned - total;
        for &i in order.iter().rev() {
            if surplus == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                surplus -= 1;
            }
        }
    }
    counts
}

/// Splits sample indices among `spec.clients`. Returns one sorted index
/// list per client; the lists are disjoint and cover every sample.
pub fn dirichlet_partition(data: &LabeledDataset, spec: &PartitionSpec) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    let k = spec.clients;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes()];
    for (i, &l) in data.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut smallest = 0;
    for attempt in 0..=spec.max_retries {
        let mut rng = substream(spec.seed, &[tag::PARTITION, attempt as u64]);
        let mut sets: Vec<Vec<usize>> = vec![Vec::new(); k];
        for class_indices in &by_class {
            let mut idx = class_indices.clone();
            idx.shuffle(&mut rng);
            let p = sample_dirichlet(k, spec.alpha, &mut rng);
            let counts = largest_remainder(&p, idx.len());
            let mut start = 0;
            for (set, n) in sets.iter_mut().zip(counts) {
                set.extend_from_slice(&idx[start..start + n]);
                start += n;
            }
        }
        smallest = sets.iter().map(Vec::len).min().unwrap_or(0);
        if smallest >= spec.min_per_client {
            for s in &mut sets {
                s.sort_unstable();
            }
            return Ok(sets);
        }
    }
    Err(Error::PartitionInfeasible {
        retries: spec.max_retries,
        reason: format!("smallest client got {smallest} samples, need {}", spec.min_per_client),
    })
}

/// Shannon entropy (nats) of a client's label histogram.
pub fn label_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| {
            let p = n as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

/// Per-client per-class counts.
pub fn partition_counts(data: &LabeledDataset, sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    sets.iter()
        .map(|s| {
            let mut c = vec![0; data.classes()];
            for &i in s {
                c[data.labels()[i]] += 1;
            }
            c
        })
        .collect()
}

/// One line per client: `client_id,i1,i2,...`.
pub fn format_partition(sets: &[Vec<usize>]) -> String {
    let mut out = String::new();
    for (id, s) in sets.iter().enumerate() {
        write!(out, "{id}").expect("string write");
        for i in s {
            write!(out, ",{i}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn parse_partition(text: &str) -> Result<Vec<Vec<usize>>> {
    let mut sets = Vec::new();
    let mut offset = 0u64;
    for (line_no, line) in text.lines().enumerate() {
        let mut fields = line.split(',');
        let id: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| Error::format(offset, format!("line {}: bad client id", line_no + 1)))?;
        if id != sets.len() {
            return Err(Error::format(
                offset,
                format!("line {}: expected client {}, got {id}", line_no + 1, sets.len()),
            ));
        }
        let idx = fields
            .map(|f| f.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(offset, format!("line {}: {e}", line_no + 1)))?;
        sets.push(idx);
        offset += line.len() as u64 + 1;
    }
    Ok(sets)
}
