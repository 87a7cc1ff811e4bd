use serde::{Deserialize, Serialize};

use crate::data::AugmentConfig;
use crate::error::{Error, Result};
use crate::optim::AdamConfig;

/// Feedback type the model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Numeric ratings in `[0.5, 5.0]`, regression evaluated by RMSE.
    Explicit,
    /// Binary interactions, ranking evaluated by HR/NDCG.
    Implicit,
}

/// Whether rows fed to the autoencoder are users or items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    User,
    Item,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub orientation: Orientation,
    /// Input dropout ratio `q`.
    pub dropout: f64,
    /// Weight on errors at dropped inputs.
    pub alpha: f64,
    /// Weight on errors at surviving inputs.
    pub beta: f64,
    /// L2 weight decay on all weights and biases.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: AdamConfig,
    /// Total confidence mass `c0` for unobserved entries (implicit only).
    pub c0: f64,
    /// Popularity exponent `omega` (implicit only).
    pub omega: f64,
    /// Sparsity-aware augmentation (implicit only).
    pub augment: Option<AugmentConfig>,
    pub seed: u64,
    /// Worker threads for intra-batch gradients; 1 is the sequential reference.
    pub threads: usize,
}

impl TrainConfig {
    pub fn explicit() -> Self {
        TrainConfig {
            mode: Mode::Explicit,
            orientation: Orientation::User,
            dropout: 0.5,
            alpha: 1.0,
            beta: 1.0,
            weight_decay: 0.0002,
            batch_size: 128,
            epochs: 60,
            optimizer: AdamConfig::default(),
            c0: 512.0,
            omega: 0.5,
            augment: None,
            seed: 0,
            threads: 1,
        }
    }

    pub fn implicit() -> Self {
        TrainConfig {
            mode: Mode::Implicit,
            weight_decay: 0.01,
            epochs: 30,
            augment: Some(AugmentConfig::default()),
            ..Self::explicit()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return Err(Error::Config(format!(
                "dropout ratio must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("alpha and beta must be >= 0".into()));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config("weight decay must be finite and >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        let opt = &self.optimizer;
        if !(opt.learning_rate >= 0.0)
            || !(0.0..1.0).contains(&opt.beta1)
            || !(0.0..1.0).contains(&opt.beta2)
            || !(opt.epsilon > 0.0)
        {
            return Err(Error::Config(format!("invalid optimizer settings {:?}", opt)));
        }
        if self.mode == Mode::Implicit {
            if !(self.c0 >= 0.0) || !self.omega.is_finite() {
                return Err(Error::Config("confidence needs c0 >= 0 and finite omega".into()));
            }
            if let Some(aug) = &self.augment {
                aug.validate()?;
            }
            if self.orientation == Orientation::Item {
                return Err(Error::Config(
                    "implicit mode ranks items per user and requires user orientation".into(),
                ));
            }
        } else if self.augment.is_some() {
            return Err(Error::Config(
                "augmentation applies to implicit feedback only".into(),
            ));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::explicit()
    }
}
