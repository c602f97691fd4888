use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dot, Tensor2};

/// Simplex equiangular tight frame `V ∈ ℝ^{d×C}`; column `c` is the
/// classifier vector of class `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtfClassifier {
    matrix: Tensor2,
}

impl EtfClassifier {
    /// Wraps an arbitrary `d×C` matrix (used when loading or finetuning).
    pub fn from_matrix(matrix: Tensor2) -> Result<Self> {
        if matrix.cols() < 2 {
            return Err(Error::InvalidDimension("an ETF needs at least 2 classes".into()));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Tensor2 {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Tensor2 {
        &mut self.matrix
    }

    pub fn classes(&self) -> usize {
        self.matrix.cols()
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.matrix.column(c)
    }

    /// `v_cᵀμ` for every class.
    pub fn products(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.classes()];
        for (r, &m) in mu.iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(self.matrix.row(r)) {
                *o += v * m;
            }
        }
        out
    }

    pub fn geometry_error(&self) -> f64 {
        etf_geometry_error(&self.matrix)
    }
}

/// Synthesizes `V = √(C/(C−1)) U (I − 11ᵀ/C)` with `U` the sign-fixed
/// orthonormalization of a `d×C` standard Gaussian draw.
pub fn synthesize_etf<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Result<EtfClassifier> {
    if classes < 2 || dim < classes {
        return Err(Error::InvalidDimension(format!("simplex ETF needs d >= C >= 2, got C={classes}, d={dim}")));
    }
    // Columns of U, drawn column by column.
    let mut cols: Vec<Vec<f64>> =
        (0..classes).map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect()).collect();
    orthonormalize(&mut cols)?;
    for col in cols.iter_mut() {
        if let Some(&first) = col.iter().find(|v| **v != 0.0) {
            if first < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }

    let c = classes as f64;
    let scale = (c / (c - 1.0)).sqrt();
    let mut matrix = Tensor2::zeros(dim, classes);
    for r in 0..dim {
        let mean = cols.iter().map(|col| col[r]).sum::<f64>() / c;
        for (j, col) in cols.iter().enumerate() {
            matrix.set(r, j, scale * (col[r] - mean));
        }
    }
    Ok(EtfClassifier { matrix })
}

/// Modified Gram–Schmidt with one re-orthogonalization pass.
fn orthonormalize(cols: &mut [Vec<f64>]) -> Result<()> {
    for j in 0..cols.len() {
        for _pass in 0..2 {
            for i in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let r = dot(&done[i], &rest[0]);
                for (x, q) in rest[0].iter_mut().zip(&done[i]) {
                    *x -= r * q;
                }
            }
        }
        let n = dot(&cols[j], &cols[j]).sqrt();
        if !(n > 1e-10) {
            return Err(Error::InvalidDimension("rank-deficient Gaussian draw".into()));
        }
        cols[j].iter_mut().for_each(|x| *x /= n);
    }
    Ok(())
}

/// `max_{i,j} |v_iᵀv_j − (C/(C−1)·δ_ij − 1/(C−1))|`.
pub fn etf_geometry_error(v: &Tensor2) -> f64 {
    let classes = v.cols();
    assert!(classes >= 2, "geometry error needs at least 2 columns");
    let c = classes as f64;
    let cols: Vec<Vec<f64>> = (0..classes).map(|j| v.column(j)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..classes {
        for j in i..classes {
            let target = if i == j { 1.0 } else { -1.0 / (c - 1.0) };
            worst = worst.max((dot(&cols[i], &cols[j]) - target).abs());
        }
    }
    worst
}
