//! Real-valued reverse-mode neural network engine trained with plain SGD.

mod checkpoint;
mod gradcheck;
mod graph;
mod model;
mod params;
mod tensor;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader};
pub use gradcheck::{grad_check, grad_check_with, gradient_suite, relative_error, GRAD_CHECK_EPS, GRAD_CHECK_FLOOR};
pub use graph::{Gradients, Graph, Var, PROB_CLAMP};
pub use model::{
    dropout_apply, dropout_mask, ensemble_average, glorot, lstm_sequence, lstm_step, LayerSpec, LstmCell, ModelState,
    NetworkSpec, BN_MOMENTUM,
};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
pub use train::{epoch_batches, fit, fit_with, loss_eval, loss_value, sgd_step, LossKind, LossParts, TrainConfig};
