//! SGD with momentum and decoupled-per-group weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-round multiplicative learning-rate decay.
pub const DEFAULT_LR_DECAY: f64 = 0.99;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 5e-4;

/// Parameter group ids of the fixed architecture family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// Feature extractor `u`.
    Extractor,
    /// Projection layer `p`.
    Projection,
    /// Learnable temperature `β`.
    Temperature,
    /// Simplex-ETF classifier matrix.
    Etf,
    /// Learnable linear classifier of the baseline.
    Classifier,
}

/// Anything whose parameters can be viewed as labelled flat slices in a
/// fixed order.
pub trait ParamSet: Clone {
    fn slices(&self) -> Vec<(ParamGroup, &[f64])>;
    fn slices_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, s) in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.slices().iter().map(|(_, s)| s.len()).sum()
    }
}

/// Simple list of named vectors, handy for standalone optimisation problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamList(pub Vec<(ParamGroup, Vec<f64>)>);

impl ParamSet for ParamList {
    fn slices(&self) -> Vec<(ParamGroup, &[f64])> {
        self.0.iter().map(|(g, v)| (*g, v.as_slice())).collect()
    }

    fn slices_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        self.0.iter_mut().map(|(g, v)| (*g, v.as_mut_slice())).collect()
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState<P> {
    buffers: P,
    pub momentum: f64,
    pub weight_decay: f64,
    base_lr: f64,
    lr: f64,
    /// Groups left untouched by [`sgd_step`].
    frozen: Vec<ParamGroup>,
}

impl<P: ParamSet> OptimizerState<P> {
    pub fn new(template: &P, lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::config("lr", format!("learning rate must be > 0, got {lr}")));
        }
        Ok(Self { buffers: template.zeros_like(), momentum, weight_decay, base_lr: lr, lr, frozen: Vec::new() })
    }

    /// Restricts updates to groups for which `trainable` holds.
    pub fn freeze_except(mut self, trainable: &[ParamGroup]) -> Self {
        let all = self.buffers.slices().into_iter().map(|(g, _)| g);
        self.frozen = all.filter(|g| !trainable.contains(g)).collect();
        self.frozen.dedup();
        self
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn base_lr(&self) -> f64 {
        self.base_lr
    }

    pub fn buffers(&self) -> &P {
        &self.buffers
    }

    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        self.frozen.contains(&group)
    }
}

/// One momentum-SGD step, in place.
///
/// For every non-frozen coordinate: `g ← grad + wd·param` (wd skipped for
/// groups in `decay_exempt`), `buf ← m·buf + g`, `param ← param − lr·buf`.
pub fn sgd_step<P: ParamSet>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState<P>,
    decay_exempt: &[ParamGroup],
) -> Result<()> {
    let lr = state.lr;
    let m = state.momentum;
    let wd = state.weight_decay;
    let frozen = state.frozen.clone();
    let mut p_slices = params.slices_mut();
    let g_slices = grads.slices();
    let mut b_slices = state.buffers.slices_mut();
    if p_slices.len() != g_slices.len() || p_slices.len() != b_slices.len() {
        return Err(Error::Dimension("sgd_step: parameter group counts differ".into()));
    }
    for ((p, g), b) in p_slices.iter_mut().zip(&g_slices).zip(b_slices.iter_mut()) {
        if p.0 != g.0 || p.0 != b.0 || p.1.len() != g.1.len() || p.1.len() != b.1.len() {
            return Err(Error::Dimension(format!("sgd_step: layout mismatch in group {:?}", p.0)));
        }
        if frozen.contains(&p.0) {
            continue;
        }
        let decay = if decay_exempt.contains(&p.0) { 0.0 } else { wd };
        for ((w, &gr), buf) in p.1.iter_mut().zip(g.1.iter()).zip(b.1.iter_mut()) {
            let step = gr + decay * *w;
            *buf = m * *buf + step;
            *w -= lr * *buf;
        }
    }
    Ok(())
}

/// Learning rate after `rounds_elapsed` rounds of multiplicative decay.
pub fn decayed_lr(base_lr: f64, factor: f64, rounds_elapsed: usize) -> f64 {
    base_lr * factor.powi(rounds_elapsed as i32)
}

/// Sets `lr = lr₀ · 0.99^rounds_elapsed`.
pub fn decay_learning_rate<P>(state: &mut OptimizerState<P>, rounds_elapsed: usize) {
    state.lr = decayed_lr(state.base_lr, DEFAULT_LR_DECAY, rounds_elapsed);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> ParamList {
        ParamList(vec![(ParamGroup::Extractor, vec![v])])
    }

    fn run(w0: f64, g: f64, lr: f64, m: f64, wd: f64, steps: usize) -> (f64, f64) {
        let mut p = scalar(w0);
        let mut st = OptimizerState::new(&p, lr, m, wd).unwrap();
        for _ in 0..steps {
            sgd_step(&mut p, &scalar(g), &mut st, &[]).unwrap();
        }
        (p.0[0].1[0], st.buffers().0[0].1[0])
    }

    #[test]
    fn plain_step() {
        assert_eq!(run(1.0, 0.5, 0.1, 0.0, 0.0, 1).0, 0.95);
    }

    #[test]
    fn momentum_two_steps() {
        let (w, buf) = run(1.0, 1.0, 0.1, 0.9, 0.0, 2);
        assert!((w - 0.71).abs() < 1e-15, "{w}");
        assert!((buf - 1.9).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_folds_into_gradient() {
        assert!((run(1.0, 0.0, 0.1, 0.0, 0.1, 1).0 - 0.99).abs() < 1e-15);
    }

    #[test]
    fn exempt_and_frozen_groups() {
        let mut p = ParamList(vec![
            (ParamGroup::Extractor, vec![1.0]),
            (ParamGroup::Temperature, vec![1.0]),
            (ParamGroup::Etf, vec![1.0]),
        ]);
        let g = p.zeros_like();
        let mut st = OptimizerState::new(&p, 0.1, 0.0, 0.1)
            .unwrap()
            .freeze_except(&[ParamGroup::Extractor, ParamGroup::Temperature]);
        sgd_step(&mut p, &g, &mut st, &[ParamGroup::Temperature]).unwrap();
        assert!((p.0[0].1[0] - 0.99).abs() < 1e-15);
        assert_eq!(p.0[1].1[0], 1.0);
        assert_eq!(p.0[2].1[0], 1.0);
    }

    #[test]
    fn layout_mismatch() {
        let mut p = scalar(1.0);
        let g = ParamList(vec![(ParamGroup::Extractor, vec![1.0, 2.0])]);
        let mut st = OptimizerState::new(&p, 0.1, 0.0, 0.0).unwrap();
        assert!(matches!(sgd_step(&mut p, &g, &mut st, &[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn nonpositive_lr_rejected() {
        assert!(OptimizerState::new(&scalar(1.0), 0.0, 0.9, 0.0).is_err());
    }

    #[test]
    fn lr_schedule() {
        let mut st = OptimizerState::new(&scalar(0.0), 0.04, 0.9, 0.0).unwrap();
        decay_learning_rate(&mut st, 0);
        assert_eq!(st.lr(), 0.04);
        decay_learning_rate(&mut st, 2);
        assert!((st.lr() - 0.039204).abs() < 1e-15);
        assert!((decayed_lr(0.01, DEFAULT_LR_DECAY, 1) - 0.0099).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn reduces_to_gradient_descent(w in -10f64..10.0, g in -10f64..10.0, lr in 1e-4f64..1.0) {
            let mut p = scalar(w);
            let mut st = OptimizerState::new(&p, lr, 0.0, 0.0).unwrap();
            sgd_step(&mut p, &scalar(g), &mut st, &[]).unwrap();
            proptest::prop_assert_eq!(p.0[0].1[0], w - lr * g);
        }
    }
}
