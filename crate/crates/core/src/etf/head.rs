use rand::Rng;

use super::synth::EtfClassifier;
use crate::error::{Error, Result};
use crate::nn::{l2_normalize, Activation, Dense, NORMALIZE_EPS};

/// Linear map from raw features into the ETF space (no activation).
pub type ProjectionHead = Dense;

/// Initial temperature.
pub const INITIAL_BETA: f64 = 1.0;

/// Projection layer `d_raw → d` with `N(0, 1/d_raw)` weights and zero bias.
pub fn projection_head<R: Rng + ?Sized>(raw_dim: usize, dim: usize, rng: &mut R) -> ProjectionHead {
    Dense::gaussian(raw_dim, dim, (1.0 / raw_dim as f64).sqrt(), Activation::None, rng)
}

/// Output of the projection head for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// Projected, normalized feature `μ`.
    pub mu: Vec<f64>,
    /// `β · v_cᵀμ`.
    pub scores: Vec<f64>,
}

/// Projects `h`, normalizes it and scores it against every ETF column.
pub fn forward_head(h: &[f64], head: &ProjectionHead, etf: &EtfClassifier, beta: f64) -> Result<HeadOutput> {
    if h.len() != head.input_dim() {
        return Err(Error::Dimension(format!("raw feature has {} dims, head takes {}", h.len(), head.input_dim())));
    }
    if head.output_dim() != etf.dim() {
        return Err(Error::Dimension(format!("head outputs {} dims, ETF has {}", head.output_dim(), etf.dim())));
    }
    let projected: Vec<f64> = (0..head.output_dim())
        .map(|j| head.bias[j] + head.weight.row(j).iter().zip(h).map(|(w, x)| w * x).sum::<f64>())
        .collect();
    let mu = l2_normalize(&projected, NORMALIZE_EPS)?;
    let scores = etf.products(&mu).into_iter().map(|s| beta * s).collect();
    Ok(HeadOutput { mu, scores })
}

/// Index of the largest score; ties go to the lowest index.
pub fn predict(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

/// Prediction from pre-temperature products. With `β <= 0` the scores would
/// invert or vanish, so the raw products are used and the second value flags it.
pub fn predict_with_temperature(products: &[f64], beta: f64) -> (usize, bool) {
    if beta > 0.0 {
        let scores: Vec<f64> = products.iter().map(|s| beta * s).collect();
        (predict(&scores), false)
    } else {
        (predict(products), true)
    }
}
