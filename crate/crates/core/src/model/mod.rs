//! Encoding, the post-selected channel, normalization and losses.

pub(crate) mod channel;
pub mod encoding;
pub mod grad;
pub mod htn;
pub mod loss;

pub use channel::forward;
pub use encoding::{encode_rotational, EncodedState};
pub use grad::{loss_and_gradient, ModelGradient};
pub use htn::{Architecture, HtnModel, ReductionOperator, REDUCTION_FLOOR, SITE_IN_AXES};
pub use loss::{
    batch_loss, classify_density, cross_entropy_loss, cross_entropy_term, depolarize, evaluate, matrix_log,
    mse_loss, mse_term, normalize, predict, process, randomized_completion, relative_entropy, BatchLoss,
    Evaluation, LabelState, LossConfig, LossKind, NormVariant, Prediction, Sample, DEFAULT_LAMBDA, TRACE_FLOOR,
};
