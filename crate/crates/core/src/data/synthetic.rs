use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{norm, Tensor2};

/// Isotropic Gaussian classes with means on a sphere of radius `class_sep`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    means: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new<R: Rng + ?Sized>(classes: usize, dim: usize, class_sep: f64, rng: &mut R) -> Result<Self> {
        if classes < 2 || dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "mixture needs C >= 2 and dim >= 2, got C={classes}, dim={dim}"
            )));
        }
        if !(class_sep > 0.0) || !class_sep.is_finite() {
            return Err(Error::config("class_sep", "must be finite and > 0"));
        }
        let means = (0..classes)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let n = norm(&v);
                if n > 1e-12 {
                    break v.into_iter().map(|x| x * class_sep / n).collect();
                }
            })
            .collect();
        Ok(Self { means })
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// `per_class` samples of every class, class-major order.
    pub fn sample<R: Rng + ?Sized>(&self, per_class: usize, rng: &mut R) -> Result<LabeledDataset> {
        if per_class == 0 {
            return Err(Error::TooFewSamples { n: 0, min: 1 });
        }
        let classes = self.means.len();
        let dim = self.means[0].len();
        let mut data = Vec::with_capacity(classes * per_class * dim);
        let mut labels = Vec::with_capacity(classes * per_class);
        for (c, mean) in self.means.iter().enumerate() {
            for _ in 0..per_class {
                for m in mean {
                    let z: f64 = StandardNormal.sample(rng);
                    data.push(m + z);
                }
                labels.push(c);
            }
        }
        LabeledDataset::new(Tensor2::from_vec(classes * per_class, dim, data)?, labels, classes)
    }
}

/// Balanced Gaussian-mixture dataset with fresh means.
pub fn generate_gaussian_mixture<R: Rng + ?Sized>(
    classes: usize,
    dim: usize,
    per_class: usize,
    class_sep: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    GaussianMixture::new(classes, dim, class_sep, rng)?.sample(per_class, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dot;
    use crate::rng::substream;

    #[test]
    fn counts() {
        let d = generate_gaussian_mixture(2, 3, 5, 1.0, &mut substream(1, &[])).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.class_counts(), vec![5, 5]);
    }

    #[test]
    fn deterministic() {
        let a = generate_gaussian_mixture(3, 4, 6, 2.0, &mut substream(9, &[])).unwrap();
        let b = generate_gaussian_mixture(3, 4, 6, 2.0, &mut substream(9, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn far_apart_classes_are_nearest_mean_separable() {
        let d = generate_gaussian_mixture(5, 8, 40, 100.0, &mut substream(2, &[])).unwrap();
        // Brute-force nearest empirical mean.
        let mut means = vec![vec![0.0; 8]; 5];
        for (i, &l) in d.labels().iter().enumerate() {
            for (m, x) in means[l].iter_mut().zip(d.features().row(i)) {
                *m += x / 40.0;
            }
        }
        for (i, &l) in d.labels().iter().enumerate() {
            let x = d.features().row(i);
            let dist = |m: &Vec<f64>| {
                let diff: Vec<f64> = x.iter().zip(m).map(|(a, b)| a - b).collect();
                dot(&diff, &diff)
            };
            let best = (0..5).min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b]))).unwrap();
            assert_eq!(best, l);
        }
    }

    #[test]
    fn means_on_sphere() {
        let g = GaussianMixture::new(4, 6, 3.0, &mut substream(3, &[])).unwrap();
        for m in g.means() {
            assert!((norm(m) - 3.0).abs() < 1e-12);
        }
    }
}
