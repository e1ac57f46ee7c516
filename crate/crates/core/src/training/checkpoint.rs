use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::NeuralField;
use crate::training::{AdamState, TrainConfig};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Field parameters, optimizer moments and the config that produced them.
///
/// Stored as JSON; floats use shortest round-trip formatting so a
/// save/load cycle is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub iteration: u64,
    pub config: TrainConfig,
    pub field: NeuralField,
    pub optimizer: AdamState,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(format!("cannot serialize: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        if !ckpt.field.params.matches(&ckpt.field.config) {
            return Err(Error::Checkpoint("parameter layout does not match its field config".into()));
        }
        let n = ckpt.field.params.len();
        if ckpt.optimizer.m.len() != n || ckpt.optimizer.v.len() != n {
            return Err(Error::Checkpoint("optimizer moments do not match parameter count".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
