//! The autoencoder: parameters, input dropout, sparse forward, masked and
//! reweighted losses, sparse backward, mini-batch training and persistence.

mod backward;
mod checkpoint;
mod forward;
mod loss;
mod params;
mod train;

pub use backward::backward;
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use forward::{
    corrupt, predict_dense, prediction_slope, sparse_forward, to_prediction, training_forward,
    Corrupted, ForwardTrace, OutputSet, RATING_OFFSET, RATING_SCALE,
};
pub use loss::{explicit_loss, implicit_loss};
pub use params::{Activation, Gradients, Layer, ModelParams};
pub use train::{train_epoch, train_epoch_from};
