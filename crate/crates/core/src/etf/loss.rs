//! Feature losses over `β`-scaled classifier products.

use crate::error::{Error, Result};

/// Loss value plus its gradient w.r.t. the pre-temperature products
/// `v_cᵀμ` and w.r.t. `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLoss {
    pub loss: f64,
    pub d_products: Vec<f64>,
    pub d_beta: f64,
}

/// Cross-entropy over `logits[c]` restricted to classes with `include[c]`.
/// Returns the loss and `∂ℓ/∂logits` (zero for excluded classes).
pub(crate) fn masked_cross_entropy(logits: &[f64], include: &[bool], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().zip(include).filter(|(_, &inc)| inc).map(|(&l, _)| l).fold(f64::NEG_INFINITY, f64::max);
    let mut exps = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for (c, (&l, &inc)) in logits.iter().zip(include).enumerate() {
        if inc {
            exps[c] = (l - max).exp();
            sum += exps[c];
        }
    }
    let loss = max + sum.ln() - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Plain softmax cross-entropy on unconstrained logits.
pub fn logit_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_label(label, logits.len())?;
    Ok(masked_cross_entropy(logits, &vec![true; logits.len()], label))
}

fn check_label(label: usize, classes: usize) -> Result<()> {
    if label >= classes {
        return Err(Error::InvalidLabel { label, reason: format!("only {classes} classes") });
    }
    Ok(())
}

/// Balanced feature loss:
/// `−log[ n_y^γ e^{β s_y} / Σ_c n_c^γ e^{β s_c} ]`, where `s = products`.
///
/// Classes with a zero count never enter the denominator, for any `γ >= 0`.
pub fn balanced_feature_loss(
    products: &[f64],
    label: usize,
    counts: &[usize],
    gamma: f64,
    beta: f64,
) -> Result<FeatureLoss> {
    let classes = products.len();
    if counts.len() != classes {
        return Err(Error::Dimension(format!("{} counts for {classes} classes", counts.len())));
    }
    check_label(label, classes)?;
    if counts[label] == 0 {
        return Err(Error::InvalidLabel { label, reason: "client holds no samples of this class".into() });
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::config("gamma", format!("must be finite and >= 0, got {gamma}")));
    }
    let include: Vec<bool> = counts.iter().map(|&n| n > 0).collect();
    let logits: Vec<f64> = products
        .iter()
        .zip(counts)
        .map(|(&s, &n)| if n > 0 { gamma * (n as f64).ln() + beta * s } else { 0.0 })
        .collect();
    Ok(finish(products, &logits, &include, label, beta))
}

/// Vanilla feature loss: `−log[ e^{β s_y} / Σ_c e^{β s_c} ]`.
pub fn vanilla_feature_loss(products: &[f64], label: usize, beta: f64) -> Result<FeatureLoss> {
    check_label(label, products.len())?;
    let include = vec![true; products.len()];
    let logits: Vec<f64> = products.iter().map(|&s| beta * s).collect();
    Ok(finish(products, &logits, &include, label, beta))
}

fn finish(products: &[f64], logits: &[f64], include: &[bool], label: usize, beta: f64) -> FeatureLoss {
    let (loss, d_logits) = masked_cross_entropy(logits, include, label);
    let d_beta = d_logits.iter().zip(products).map(|(g, s)| g * s).sum();
    let d_products = d_logits.iter().map(|g| g * beta).collect();
    FeatureLoss { loss, d_products, d_beta }
}
