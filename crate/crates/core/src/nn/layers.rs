//! Dense building blocks with hand-written backward passes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::{norm, Tensor2};
use crate::error::{Error, Result};

/// Norm floor for [`l2_normalize`].
pub const NORMALIZE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// `y[i,j] = Σ_k W[j,k]·x[i,k] + b[j]` for a batch `x` of shape `batch×in`.
pub fn linear_forward(x: &Tensor2, weight: &Tensor2, bias: &[f64]) -> Result<Tensor2> {
    let (batch, input) = x.shape();
    let (out, w_in) = weight.shape();
    if input != w_in || bias.len() != out {
        return Err(Error::Dimension(format!("linear: x {batch}x{input}, W {out}x{w_in}, b {}", bias.len())));
    }
    let mut y = Tensor2::zeros(batch, out);
    for i in 0..batch {
        let xi = x.row(i);
        let yi = y.row_mut(i);
        for (j, yij) in yi.iter_mut().enumerate() {
            let wj = weight.row(j);
            let mut acc = bias[j];
            for k in 0..input {
                acc += wj[k] * xi[k];
            }
            *yij = acc;
        }
    }
    Ok(y)
}

/// Gradients of a linear layer given upstream `dy` (batch×out).
///
/// Returns `(dx, dW, db)`; `dx` is skipped when `need_dx` is false.
pub fn linear_backward(
    x: &Tensor2,
    weight: &Tensor2,
    dy: &Tensor2,
    need_dx: bool,
) -> Result<(Option<Tensor2>, Tensor2, Vec<f64>)> {
    let (batch, input) = x.shape();
    let (out, w_in) = weight.shape();
    if w_in != input || dy.shape() != (batch, out) {
        return Err(Error::Dimension(format!(
            "linear backward: x {batch}x{input}, W {out}x{w_in}, dy {}x{}",
            dy.rows(),
            dy.cols()
        )));
    }
    let mut dw = Tensor2::zeros(out, input);
    let mut db = vec![0.0; out];
    for i in 0..batch {
        let xi = x.row(i);
        for (j, &g) in dy.row(i).iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            db[j] += g;
            for (w, &xv) in dw.row_mut(j).iter_mut().zip(xi) {
                *w += g * xv;
            }
        }
    }
    let dx = if need_dx { Some(dy.matmul(weight)?) } else { None };
    Ok((dx, dw, db))
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Masks `upstream` where the pre-activation is `<= 0` (subgradient 0 at 0).
pub fn relu_backward(pre: &Tensor2, upstream: &Tensor2) -> Result<Tensor2> {
    if pre.shape() != upstream.shape() {
        return Err(Error::Dimension("relu backward shape mismatch".into()));
    }
    let data = pre.data().iter().zip(upstream.data()).map(|(&p, &g)| if p > 0.0 { g } else { 0.0 }).collect();
    Tensor2::from_vec(pre.rows(), pre.cols(), data)
}

/// Returns `v / ‖v‖₂`; fails when `‖v‖₂ <= eps`.
pub fn l2_normalize(v: &[f64], eps: f64) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > eps) {
        return Err(Error::DegenerateFeature { norm: n, eps });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Pulls `upstream` (w.r.t. the normalized output) back to `v`:
/// `(I − μμᵀ) g / ‖v‖`.
pub fn l2_normalize_backward(v: &[f64], upstream: &[f64], eps: f64) -> Result<Vec<f64>> {
    if v.len() != upstream.len() {
        return Err(Error::Dimension("l2_normalize backward length mismatch".into()));
    }
    let n = norm(v);
    if !(n > eps) {
        return Err(Error::DegenerateFeature { norm: n, eps });
    }
    let mu: Vec<f64> = v.iter().map(|x| x / n).collect();
    let proj: f64 = mu.iter().zip(upstream).map(|(m, g)| m * g).sum();
    Ok(upstream.iter().zip(&mu).map(|(g, m)| (g - m * proj) / n).collect())
}

/// Affine layer with an optional ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// Shape `out×in`.
    pub weight: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Gaussian weights with the given std, zero bias.
    pub fn gaussian<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        std: f64,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, std).expect("finite positive std");
        let data = (0..input * output).map(|_| normal.sample(rng)).collect();
        Self { weight: Tensor2::from_vec(output, input, data).expect("sized"), bias: vec![0.0; output], activation }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor2::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    /// Returns `(pre_activation, output)`.
    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        let pre = linear_forward(x, &self.weight, &self.bias)?;
        let out = match self.activation {
            Activation::Relu => relu(&pre),
            Activation::None => pre.clone(),
        };
        Ok((pre, out))
    }
}

/// ReLU-terminated multilayer perceptron producing the raw feature `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpExtractor {
    pub layers: Vec<Dense>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ExtractorCache {
    /// Input of each layer.
    inputs: Vec<Tensor2>,
    /// Pre-activation of each layer.
    pres: Vec<Tensor2>,
}

impl ExtractorCache {
    pub fn pre_activations(&self) -> &[Tensor2] {
        &self.pres
    }
}

impl MlpExtractor {
    /// He-initialized ReLU MLP `input → dims[0] → … → dims[last]`.
    pub fn new<R: Rng + ?Sized>(input: usize, dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.is_empty() || input == 0 || dims.contains(&0) {
            return Err(Error::InvalidDimension(format!(
                "extractor needs positive dims, got input {input}, layers {dims:?}"
            )));
        }
        let mut layers = Vec::with_capacity(dims.len());
        let mut fan_in = input;
        for &d in dims {
            let std = (2.0 / fan_in as f64).sqrt();
            layers.push(Dense::gaussian(fan_in, d, std, Activation::Relu, rng));
            fan_in = d;
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let e = Self { layers };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let last = self.layers.last().ok_or_else(|| Error::InvalidDimension("extractor has no layers".into()))?;
        if last.activation != Activation::Relu {
            return Err(Error::InvalidDimension("extractor must end in a ReLU layer".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension(format!(
                    "extractor layer {i} outputs {} but layer {} takes {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Dimension(format!("extractor layer {i} bias length")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(Dense::zeros_like).collect() }
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?.1;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Tensor2) -> Result<(Tensor2, ExtractorCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (pre, out) = layer.forward(&h)?;
            inputs.push(h);
            pres.push(pre);
            h = out;
        }
        Ok((h, ExtractorCache { inputs, pres }))
    }

    /// Accumulates parameter gradients for upstream `dh` into `grads`.
    pub fn backward(&self, cache: &ExtractorCache, dh: Tensor2, grads: &mut MlpExtractor) -> Result<()> {
        let mut upstream = dh;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dpre = match layer.activation {
                Activation::Relu => relu_backward(&cache.pres[i], &upstream)?,
                Activation::None => upstream,
            };
            let (dx, dw, db) = linear_backward(&cache.inputs[i], &layer.weight, &dpre, i > 0)?;
            let g = &mut grads.layers[i];
            for (a, b) in g.weight.data_mut().iter_mut().zip(dw.data()) {
                *a += b;
            }
            for (a, b) in g.bias.iter_mut().zip(&db) {
                *a += b;
            }
            match dx {
                Some(dx) => upstream = dx,
                None => break,
            }
        }
        Ok(())
    }
}
