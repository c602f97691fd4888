use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::{ParamGroup, ParamSet};

/// Size-weighted average `Σ_k (n_k / Σ_j n_j) · w_k` of every learned
/// parameter. The ETF matrix is not averaged: it must be identical across
/// models and is passed through.
pub fn aggregate(models: &[Model], sizes: &[usize]) -> Result<Model> {
    let first = models.first().ok_or_else(|| Error::Aggregation("no models to aggregate".into()))?;
    if models.len() != sizes.len() {
        return Err(Error::Aggregation(format!("{} models, {} sizes", models.len(), sizes.len())));
    }
    if sizes.contains(&0) {
        return Err(Error::Aggregation("client sizes must be positive".into()));
    }
    let layout = first.layout();
    for (k, m) in models.iter().enumerate().skip(1) {
        if m.layout() != layout {
            return Err(Error::Aggregation(format!("model {k} has a different layout")));
        }
        if m.etf() != first.etf() {
            return Err(Error::Aggregation(format!("model {k} carries a different ETF matrix")));
        }
    }
    let total: usize = sizes.iter().sum();
    let weights: Vec<f64> = sizes.iter().map(|&n| n as f64 / total as f64).collect();

    let mut out = first.clone();
    {
        let mut acc = out.slices_mut();
        for (g, s) in acc.iter_mut() {
            if *g != ParamGroup::Etf {
                s.iter_mut().for_each(|v| *v *= weights[0]);
            }
        }
        for (m, &w) in models.iter().zip(&weights).skip(1) {
            for ((g, dst), (_, src)) in acc.iter_mut().zip(m.slices()) {
                if *g == ParamGroup::Etf {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Algorithm;
    use crate::rng::substream;

    fn fedavg_model(seed: u64) -> Model {
        Model::init(Algorithm::FedAvg, 3, &[2], 2, None, &mut substream(seed, &[])).unwrap()
    }

    fn filled(v: f64) -> Model {
        let mut m = fedavg_model(0);
        for (_, s) in m.slices_mut() {
            s.fill(v);
        }
        m
    }

    #[test]
    fn single_model_identity() {
        let m = fedavg_model(3);
        assert_eq!(aggregate(std::slice::from_ref(&m), &[17]).unwrap(), m);
    }

    #[test]
    fn weighted_values() {
        let agg = aggregate(&[filled(1.0), filled(3.0)], &[1, 3]).unwrap();
        assert!(agg.to_canonical().iter().all(|&v| v == 2.5));
        let agg = aggregate(&[filled(1.0), filled(3.0)], &[5, 5]).unwrap();
        assert!(agg.to_canonical().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn errors() {
        assert!(aggregate(&[], &[]).is_err());
        assert!(aggregate(&[filled(1.0)], &[0]).is_err());
        let other = Model::init(Algorithm::FedAvg, 3, &[4], 2, None, &mut substream(0, &[])).unwrap();
        assert!(matches!(aggregate(&[filled(1.0), other], &[1, 1]), Err(Error::Aggregation(_))));
    }
}
