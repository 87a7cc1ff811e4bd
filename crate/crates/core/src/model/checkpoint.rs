use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::config::{Mode, Orientation, TrainConfig};
use crate::data::SplitSpec;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "ncae-checkpoint/1";

/// Self-describing JSON checkpoint. Floats are written with shortest
/// round-trip formatting and parsed back exactly, so a reloaded model
/// reproduces predictions bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub mode: Mode,
    pub orientation: Orientation,
    pub dims: Vec<usize>,
    pub params: ModelParams,
    pub config: TrainConfig,
    pub split: Option<SplitSpec>,
    /// Original user ids, by index (in user/item terms of the data, not the orientation).
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

impl Checkpoint {
    pub fn new(
        params: ModelParams,
        config: TrainConfig,
        split: Option<SplitSpec>,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            mode: config.mode,
            orientation: config.orientation,
            dims: params.dims(),
            params,
            config,
            split,
            user_ids,
            item_ids,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Compatibility(format!(
                "unsupported checkpoint format `{}`",
                self.format
            )));
        }
        self.params.validate()?;
        if self.params.dims() != self.dims {
            return Err(Error::Compatibility(format!(
                "declared dims {:?} disagree with parameters {:?}",
                self.dims,
                self.params.dims()
            )));
        }
        if self.mode != self.config.mode || self.orientation != self.config.orientation {
            return Err(Error::Compatibility(
                "mode/orientation disagree with the stored config".into(),
            ));
        }
        let rows = match self.orientation {
            Orientation::User => self.item_ids.len(),
            Orientation::Item => self.user_ids.len(),
        };
        if rows != self.params.num_items() {
            return Err(Error::Compatibility(format!(
                "model width {} does not match {} stored ids",
                self.params.num_items(),
                rows
            )));
        }
        Ok(())
    }
}
