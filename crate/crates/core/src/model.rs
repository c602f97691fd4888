//! The simulated network: a ReLU MLP extractor followed by either the fixed
//! ETF head (projection, normalization, temperature) or a learnable linear
//! classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etf::{
    balanced_feature_loss, logit_cross_entropy, predict, predict_with_temperature, projection_head,
    vanilla_feature_loss, EtfClassifier, ProjectionHead, INITIAL_BETA,
};
use crate::nn::{
    l2_normalize, l2_normalize_backward, linear_backward, linear_forward, Activation, Dense, MlpExtractor, ParamGroup,
    ParamSet, Tensor2, NORMALIZE_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Learnable linear classifier trained with logit cross-entropy.
    FedAvg,
    /// Fixed simplex-ETF classifier with projection and learnable temperature.
    FedEtf,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedEtf => "fedetf",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtfHead {
    pub projection: ProjectionHead,
    pub beta: f64,
    pub etf: EtfClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    Etf(EtfHead),
    Linear(Dense),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub extractor: MlpExtractor,
    pub head: Head,
}

/// Which feature a diagnostic reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Extractor output `h`.
    Raw,
    /// Projected, normalized `μ` (ETF head only).
    Projected,
}

/// Training objective for one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Count-weighted feature loss; `counts` are the client's per-class train counts.
    Balanced { counts: Vec<usize>, gamma: f64 },
    /// Feature loss without class weighting.
    Vanilla,
    /// Softmax cross-entropy on linear-classifier logits.
    CrossEntropy,
}

/// Shape description sufficient to rebuild a model from a flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub algorithm: Algorithm,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub feature_dim: usize,
}

/// One contiguous block of the canonical flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutBlock {
    pub name: String,
    pub group: ParamGroup,
    pub offset: usize,
    pub len: usize,
}

impl ModelLayout {
    /// Blocks in canonical order: extractor layers, then projection (or
    /// classifier), then `β`, then the ETF matrix column-major.
    pub fn blocks(&self) -> Vec<LayoutBlock> {
        let mut out = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, group, len| {
            out.push(LayoutBlock { name, group, offset, len });
            offset += len;
        };
        let mut fan_in = self.input_dim;
        for (i, &d) in self.hidden.iter().enumerate() {
            push(format!("extractor.{i}.weight"), ParamGroup::Extractor, d * fan_in);
            push(format!("extractor.{i}.bias"), ParamGroup::Extractor, d);
            fan_in = d;
        }
        match self.algorithm {
            Algorithm::FedEtf => {
                push("projection.weight".into(), ParamGroup::Projection, self.feature_dim * fan_in);
                push("projection.bias".into(), ParamGroup::Projection, self.feature_dim);
                push("beta".into(), ParamGroup::Temperature, 1);
                push("etf".into(), ParamGroup::Etf, self.feature_dim * self.classes);
            }
            Algorithm::FedAvg => {
                push("classifier.weight".into(), ParamGroup::Classifier, self.classes * fan_in);
                push("classifier.bias".into(), ParamGroup::Classifier, self.classes);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len).sum()
    }

    /// Allocates a zero model with this layout.
    pub fn zeros(&self) -> Result<Model> {
        let mut layers = Vec::new();
        let mut fan_in = self.input_dim;
        for &d in &self.hidden {
            layers.push(Dense { weight: Tensor2::zeros(d, fan_in), bias: vec![0.0; d], activation: Activation::Relu });
            fan_in = d;
        }
        let extractor = MlpExtractor::from_layers(layers)?;
        let head = match self.algorithm {
            Algorithm::FedEtf => Head::Etf(EtfHead {
                projection: Dense {
                    weight: Tensor2::zeros(self.feature_dim, fan_in),
                    bias: vec![0.0; self.feature_dim],
                    activation: Activation::None,
                },
                beta: 0.0,
                etf: EtfClassifier::from_matrix(Tensor2::zeros(self.feature_dim, self.classes))?,
            }),
            Algorithm::FedAvg => Head::Linear(Dense {
                weight: Tensor2::zeros(self.classes, fan_in),
                bias: vec![0.0; self.classes],
                activation: Activation::None,
            }),
        };
        Ok(Model { extractor, head })
    }

    pub fn from_canonical(&self, flat: &[f64]) -> Result<Model> {
        let mut m = self.zeros()?;
        m.load_canonical(flat)?;
        Ok(m)
    }
}

impl Model {
    /// Fresh model. The extractor is drawn from `rng` first, then the head,
    /// so both algorithms share the same extractor initialization for a
    /// given stream. `etf` is required for [`Algorithm::FedEtf`].
    pub fn init<R: Rng + ?Sized>(
        algorithm: Algorithm,
        input_dim: usize,
        hidden: &[usize],
        classes: usize,
        etf: Option<EtfClassifier>,
        rng: &mut R,
    ) -> Result<Self> {
        let extractor = MlpExtractor::new(input_dim, hidden, rng)?;
        let raw = extractor.output_dim();
        let head = match algorithm {
            Algorithm::FedEtf => {
                let etf = etf.ok_or_else(|| Error::InvalidDimension("ETF head needs a synthesized ETF".into()))?;
                if etf.classes() != classes {
                    return Err(Error::Dimension(format!("ETF has {} classes, expected {classes}", etf.classes())));
                }
                Head::Etf(EtfHead { projection: projection_head(raw, etf.dim(), rng), beta: INITIAL_BETA, etf })
            }
            Algorithm::FedAvg => {
                Head::Linear(Dense::gaussian(raw, classes, (1.0 / raw as f64).sqrt(), Activation::None, rng))
            }
        };
        Ok(Self { extractor, head })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.head {
            Head::Etf(_) => Algorithm::FedEtf,
            Head::Linear(_) => Algorithm::FedAvg,
        }
    }

    pub fn classes(&self) -> usize {
        match &self.head {
            Head::Etf(h) => h.etf.classes(),
            Head::Linear(l) => l.output_dim(),
        }
    }

    pub fn layout(&self) -> ModelLayout {
        let feature_dim = match &self.head {
            Head::Etf(h) => h.etf.dim(),
            Head::Linear(_) => 0,
        };
        ModelLayout {
            algorithm: self.algorithm(),
            input_dim: self.extractor.input_dim(),
            hidden: self.extractor.layers.iter().map(Dense::output_dim).collect(),
            classes: self.classes(),
            feature_dim,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match &self.head {
            Head::Etf(h) => Some(h.beta),
            Head::Linear(_) => None,
        }
    }

    pub fn etf(&self) -> Option<&EtfClassifier> {
        match &self.head {
            Head::Etf(h) => Some(&h.etf),
            Head::Linear(_) => None,
        }
    }

    /// Class-wise classifier vectors as rows (`C×dim`): ETF columns or
    /// linear-classifier rows.
    pub fn classifier_rows(&self) -> Tensor2 {
        match &self.head {
            Head::Etf(h) => h.etf.matrix().transpose(),
            Head::Linear(l) => l.weight.clone(),
        }
    }

    /// Features of a batch in the requested space.
    pub fn features(&self, x: &Tensor2, space: FeatureSpace) -> Result<Tensor2> {
        let h = self.extractor.forward(x)?;
        match (space, &self.head) {
            (FeatureSpace::Raw, _) => Ok(h),
            (FeatureSpace::Projected, Head::Etf(head)) => {
                let mut z = linear_forward(&h, &head.projection.weight, &head.projection.bias)?;
                for i in 0..z.rows() {
                    let mu = l2_normalize(z.row(i), NORMALIZE_EPS)?;
                    z.row_mut(i).copy_from_slice(&mu);
                }
                Ok(z)
            }
            (FeatureSpace::Projected, Head::Linear(_)) => {
                Err(Error::InvalidDimension("projected features need an ETF head".into()))
            }
        }
    }

    /// Per-sample class products: `v_cᵀμ` (ETF head, before `β`) or logits.
    pub fn products(&self, x: &Tensor2) -> Result<Tensor2> {
        match &self.head {
            Head::Etf(head) => {
                let mu = self.features(x, FeatureSpace::Projected)?;
                mu.matmul(head.etf.matrix())
            }
            Head::Linear(l) => {
                let h = self.extractor.forward(x)?;
                linear_forward(&h, &l.weight, &l.bias)
            }
        }
    }

    /// Predicted labels; the flag is set when a non-positive `β` forced the
    /// temperature-free fallback.
    pub fn predict_batch(&self, x: &Tensor2) -> Result<(Vec<usize>, bool)> {
        let products = self.products(x)?;
        let mut flagged = false;
        let labels = (0..products.rows())
            .map(|i| match &self.head {
                Head::Etf(h) => {
                    let (label, warn) = predict_with_temperature(products.row(i), h.beta);
                    flagged |= warn;
                    label
                }
                Head::Linear(_) => predict(products.row(i)),
            })
            .collect();
        Ok((labels, flagged))
    }

    /// Mean loss over the batch and its gradient for every parameter
    /// (frozen groups are handled by the optimizer). On a degenerate feature
    /// the error is wrapped with the offending row.
    pub fn loss_and_grad(&self, x: &Tensor2, labels: &[usize], objective: &Objective) -> Result<(f64, Model)> {
        let batch = x.rows();
        if labels.len() != batch || batch == 0 {
            return Err(Error::Dimension(format!("{} labels for a batch of {batch}", labels.len())));
        }
        let inv = 1.0 / batch as f64;
        let (h, cache) = self.extractor.forward_cached(x)?;
        let mut grads = self.zeros_like();
        let mut total = 0.0;

        let dh = match (&self.head, &mut grads.head) {
            (Head::Etf(head), Head::Etf(g)) => {
                let z = linear_forward(&h, &head.projection.weight, &head.projection.bias)?;
                let d = head.etf.dim();
                let classes = head.etf.classes();
                let v = head.etf.matrix();
                let mut dz = Tensor2::zeros(batch, d);
                for (i, &label) in labels.iter().enumerate() {
                    let mu = l2_normalize(z.row(i), NORMALIZE_EPS)?;
                    let products = head.etf.products(&mu);
                    let fl = match objective {
                        Objective::Balanced { counts, gamma } => {
                            balanced_feature_loss(&products, label, counts, *gamma, head.beta)?
                        }
                        Objective::Vanilla => vanilla_feature_loss(&products, label, head.beta)?,
                        Objective::CrossEntropy => {
                            return Err(Error::InvalidDimension("ETF head trains on feature losses".into()))
                        }
                    };
                    total += fl.loss;
                    g.beta += fl.d_beta * inv;
                    let ds: Vec<f64> = fl.d_products.iter().map(|g| g * inv).collect();
                    let gv = g.etf.matrix_mut();
                    let mut dmu = vec![0.0; d];
                    for r in 0..d {
                        let vr = v.row(r);
                        let gr = gv.row_mut(r);
                        let mut acc = 0.0;
                        for c in 0..classes {
                            gr[c] += mu[r] * ds[c];
                            acc += vr[c] * ds[c];
                        }
                        dmu[r] = acc;
                    }
                    let dzi = l2_normalize_backward(z.row(i), &dmu, NORMALIZE_EPS)?;
                    dz.row_mut(i).copy_from_slice(&dzi);
                }
                let (dh, dw, db) = linear_backward(&h, &head.projection.weight, &dz, true)?;
                g.projection.weight = dw;
                g.projection.bias = db;
                dh.expect("requested")
            }
            (Head::Linear(lin), Head::Linear(g)) => {
                if *objective != Objective::CrossEntropy {
                    return Err(Error::InvalidDimension("linear classifier trains on logit cross-entropy".into()));
                }
                let logits = linear_forward(&h, &lin.weight, &lin.bias)?;
                let mut dlogits = Tensor2::zeros(batch, lin.output_dim());
                for (i, &label) in labels.iter().enumerate() {
                    let (loss, dl) = logit_cross_entropy(logits.row(i), label)?;
                    total += loss;
                    for (o, v) in dlogits.row_mut(i).iter_mut().zip(dl) {
                        *o = v * inv;
                    }
                }
                let (dh, dw, db) = linear_backward(&h, &lin.weight, &dlogits, true)?;
                g.weight = dw;
                g.bias = db;
                dh.expect("requested")
            }
            _ => unreachable!("gradient buffer mirrors the model"),
        };
        self.extractor.backward(&cache, dh, &mut grads.extractor)?;
        Ok((total * inv, grads))
    }

    /// Flat parameters in canonical (checkpoint) order.
    pub fn to_canonical(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.extractor.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        match &self.head {
            Head::Etf(h) => {
                out.extend_from_slice(h.projection.weight.data());
                out.extend_from_slice(&h.projection.bias);
                out.push(h.beta);
                let m = h.etf.matrix();
                for c in 0..m.cols() {
                    out.extend(m.column(c));
                }
            }
            Head::Linear(l) => {
                out.extend_from_slice(l.weight.data());
                out.extend_from_slice(&l.bias);
            }
        }
        out
    }

    pub fn load_canonical(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "checkpoint holds {} values, model has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut it = flat.iter().copied();
        let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
        for l in &mut self.extractor.layers {
            fill(l.weight.data_mut());
            fill(&mut l.bias);
        }
        match &mut self.head {
            Head::Etf(h) => {
                fill(h.projection.weight.data_mut());
                fill(&mut h.projection.bias);
                fill(std::slice::from_mut(&mut h.beta));
                let m = h.etf.matrix_mut();
                let (rows, cols) = m.shape();
                let mut col_major = vec![0.0; rows * cols];
                fill(&mut col_major);
                for c in 0..cols {
                    for r in 0..rows {
                        m.set(r, c, col_major[c * rows + r]);
                    }
                }
            }
            Head::Linear(l) => {
                fill(l.weight.data_mut());
                fill(&mut l.bias);
            }
        }
        Ok(())
    }

    /// Flattened values of the given groups, in canonical order.
    pub fn flatten_groups(&self, groups: &[ParamGroup]) -> Vec<f64> {
        let mut out = Vec::new();
        for (g, s) in self.slices() {
            if groups.contains(&g) {
                out.extend_from_slice(s);
            }
        }
        out
    }

    /// Groups that are learned and aggregated during federated training.
    pub fn federated_groups(&self) -> &'static [ParamGroup] {
        match self.head {
            Head::Etf(_) => &[ParamGroup::Extractor, ParamGroup::Projection, ParamGroup::Temperature],
            Head::Linear(_) => &[ParamGroup::Extractor, ParamGroup::Classifier],
        }
    }
}

impl ParamSet for Model {
    fn slices(&self) -> Vec<(ParamGroup, &[f64])> {
        let mut out: Vec<(ParamGroup, &[f64])> = Vec::new();
        for l in &self.extractor.layers {
            out.push((ParamGroup::Extractor, l.weight.data()));
            out.push((ParamGroup::Extractor, &l.bias));
        }
        match &self.head {
            Head::Etf(h) => {
                out.push((ParamGroup::Projection, h.projection.weight.data()));
                out.push((ParamGroup::Projection, &h.projection.bias));
                out.push((ParamGroup::Temperature, std::slice::from_ref(&h.beta)));
                out.push((ParamGroup::Etf, h.etf.matrix().data()));
            }
            Head::Linear(l) => {
                out.push((ParamGroup::Classifier, l.weight.data()));
                out.push((ParamGroup::Classifier, &l.bias));
            }
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out: Vec<(ParamGroup, &mut [f64])> = Vec::new();
        for l in &mut self.extractor.layers {
            out.push((ParamGroup::Extractor, l.weight.data_mut()));
            out.push((ParamGroup::Extractor, &mut l.bias));
        }
        match &mut self.head {
            Head::Etf(h) => {
                out.push((ParamGroup::Projection, h.projection.weight.data_mut()));
                out.push((ParamGroup::Projection, &mut h.projection.bias));
                out.push((ParamGroup::Temperature, std::slice::from_mut(&mut h.beta)));
                out.push((ParamGroup::Etf, h.etf.matrix_mut().data_mut()));
            }
            Head::Linear(l) => {
                out.push((ParamGroup::Classifier, l.weight.data_mut()));
                out.push((ParamGroup::Classifier, &mut l.bias));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::etf::synthesize_etf;
    use crate::rng::substream;

    fn etf_model(seed: u64) -> Model {
        let etf = synthesize_etf(3, 3, &mut substream(seed, &[1])).unwrap();
        Model::init(Algorithm::FedEtf, 4, &[5, 4], 3, Some(etf), &mut substream(seed, &[2])).unwrap()
    }

    #[test]
    fn canonical_round_trip() {
        let m = etf_model(1);
        let flat = m.to_canonical();
        assert_eq!(flat.len(), m.layout().param_count());
        let back = m.layout().from_canonical(&flat).unwrap();
        assert_eq!(back, m);
        let beta_block = m.layout().blocks().into_iter().find(|b| b.name == "beta").unwrap();
        assert_eq!(flat[beta_block.offset], 1.0);
    }

    #[test]
    fn etf_is_column_major_in_canonical_order() {
        let m = etf_model(2);
        let flat = m.to_canonical();
        let etf = m.etf().unwrap();
        let tail = &flat[flat.len() - 9..];
        assert_eq!(&tail[0..3], etf.column(0).as_slice());
        assert_eq!(&tail[3..6], etf.column(1).as_slice());
    }

    #[test]
    fn both_algorithms_share_extractor_init() {
        let a = etf_model(3);
        let b = Model::init(Algorithm::FedAvg, 4, &[5, 4], 3, None, &mut substream(3, &[2])).unwrap();
        assert_eq!(a.extractor, b.extractor);
        assert_eq!(b.to_canonical().len(), b.layout().param_count());
    }

    #[test]
    fn objective_must_match_head() {
        let m = etf_model(4);
        let x = Tensor2::from_vec(1, 4, vec![1.0, 0.5, -0.3, 0.2]).unwrap();
        assert!(m.loss_and_grad(&x, &[0], &Objective::CrossEntropy).is_err());
        assert!(m.loss_and_grad(&x, &[0], &Objective::Vanilla).is_ok());
    }

    #[test]
    fn projected_features_are_unit() {
        let m = etf_model(5);
        let x = Tensor2::from_vec(2, 4, vec![1.0, 0.5, -0.3, 0.2, 0.1, 2.0, 0.0, -1.0]).unwrap();
        let mu = m.features(&x, FeatureSpace::Projected).unwrap();
        for i in 0..2 {
            assert!((crate::nn::norm(mu.row(i)) - 1.0).abs() < 1e-12);
        }
    }
}
