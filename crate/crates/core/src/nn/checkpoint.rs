//! Self-describing JSON checkpoints: model configuration, scaler and
//! parameter arrays.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelConfig};
use super::params::NamedArray;
use crate::data::RobustScaler;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelConfig,
    pub seed: u64,
    pub scaler: RobustScaler,
    pub params: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, scaler: RobustScaler) -> Result<Self> {
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: model.config().clone(),
            seed: model.seed(),
            scaler,
            params: model.store().export()?,
        })
    }

    /// Rebuilds the model and loads the stored parameters into it.
    pub fn to_model(&self) -> Result<Model> {
        let model = Model::build(&self.model, self.seed)?;
        model.store().import(&self.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint format {} (expected {CHECKPOINT_FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}
