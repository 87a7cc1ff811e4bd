//! Sparse-input autoencoders for collaborative filtering.
//!
//! Rows of a user-item matrix are fed through a tanh network whose first
//! layer reads only the observed entries. Explicit ratings are learned with a
//! masked, dropout-aware square loss; implicit feedback with a whole-row loss
//! where unobserved items are weighted by a popularity-based confidence.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod pretrain;
pub mod synthetic;

pub use config::{Mode, Orientation, TrainConfig};
pub use error::{Error, Result};
pub use model::{Checkpoint, ModelParams};
pub use pretrain::{fit, EpochRecord, PretrainPlan, Stage};
