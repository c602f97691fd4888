//! Minimal dense differentiable engine: tensors, layers, SGD.

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use gradcheck::{finite_difference_gradient, max_relative_error};
pub use layers::{
    l2_normalize, l2_normalize_backward, linear_backward, linear_forward, relu, relu_backward, Activation, Dense,
    MlpExtractor, NORMALIZE_EPS,
};
pub use optim::{
    decay_learning_rate, decayed_lr, sgd_step, OptimizerState, ParamGroup, ParamList, ParamSet, DEFAULT_LR_DECAY,
    DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY,
};
pub use tensor::{cosine, dot, norm, Tensor2};
