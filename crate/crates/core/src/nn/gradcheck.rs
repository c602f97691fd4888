//! Central finite differences, used as an independent gradient oracle.

/// `(L(θ + h·e_i) − L(θ − h·e_i)) / 2h` for every coordinate `i`.
pub fn finite_difference_gradient<F>(mut loss_fn: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    let mut theta = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = theta[i];
            theta[i] = orig + h;
            let plus = loss_fn(&theta);
            theta[i] = orig - h;
            let minus = loss_fn(&theta);
            theta[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinate-wise relative error, with `floor` guarding near-zero
/// entries: `|a − n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = finite_difference_gradient(|t| t[0] * t[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant() {
        let g = finite_difference_gradient(|_| 4.2, &[1.0, -2.0, 3.0], 1e-5);
        assert_eq!(g, vec![0.0; 3]);
    }
}
