//! Dense tensors and the handful of differentiable layers the forecasters use.

mod layers;
mod lstm;
mod optim;
mod tensor;
mod train;
mod weights;

pub use layers::{
    dropout, dropout_backward, glorot_uniform, mae_loss, maxpool2, maxpool2_backward, relu, relu_backward, Conv1x1Scale,
    Conv2d, Dense, Param,
};
pub use lstm::{last_step, last_step_backward, Lstm, LstmCache};
pub use optim::{scale_lr, AdamState};
pub use tensor::{Float, Tensor, TensorF32};
pub use train::{train, TrainConfig, TrainHistory, Trainable};
pub use weights::{assign_weights, load_weights, save_weights, ParamEntry, WeightsHeader, WEIGHTS_FORMAT_VERSION};
