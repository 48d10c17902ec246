//! The classifier under analysis: a compact residual CNN with hand-written
//! forward/backward passes, SGD-with-momentum training, and a pluggable
//! predictor interface for externally supplied score tables.

pub mod math;
mod model;
mod predictor;
mod scalar;
mod train;

pub use model::{
    argmax_low, batch_loss, forward_batch, loss_and_grads, BatchView, Cache, Model, ModelConfig,
    Workspace,
};
pub use predictor::{
    mean_cross_entropy, predict, PredictionOutput, PredictionTable, Predictor,
};
pub use scalar::Scalar;
pub use train::{
    flatten_dataset, predict_flat, sgd_step, train, EpochRecord, FlatData, IterRecord,
    ProbeRecord, SgdState, TrainConfig, TrainLog,
};
