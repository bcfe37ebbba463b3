use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MlpNetwork;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON container for a trained network.
///
/// Floats are written in shortest round-trip form, so a save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Free-form role tag, e.g. `generator` or `discriminator`.
    pub role: String,
    pub network: MlpNetwork,
}

pub fn save_checkpoint(path: &Path, role: &str, net: &MlpNetwork) -> Result<()> {
    let ckpt = Checkpoint { version: CHECKPOINT_VERSION, role: role.to_string(), network: net.clone() };
    fs::write(path, serde_json::to_string_pretty(&ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    ckpt.network.validate()?;
    Ok(ckpt)
}
