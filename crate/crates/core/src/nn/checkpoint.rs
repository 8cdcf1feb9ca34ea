use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, ScoringNet};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training bit-exactly: the network (shape,
/// parameters, batchnorm statistics, RNG seed and pass counter) plus the
/// optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub net: ScoringNet,
    pub adam: Option<AdamState>,
    /// Completed epochs when the checkpoint was taken.
    pub epoch: usize,
}

/// Writes a JSON checkpoint. Floats are printed in shortest round-trip form.
pub fn save_checkpoint(path: impl AsRef<Path>, net: &ScoringNet, adam: Option<&AdamState>, epoch: usize) -> Result<()> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        net: net.clone(),
        adam: adam.cloned(),
        epoch,
    };
    fs::write(path, serde_json::to_vec(&ck)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let ck: Checkpoint = serde_json::from_slice(&bytes)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    let shapes = ck.net.param_shapes();
    let expected: Vec<usize> = ck
        .net
        .layer_dims()
        .windows(2)
        .flat_map(|w| [w[0] * w[1], w[1]])
        .chain(
            ck.net
                .layer_dims()
                .iter()
                .skip(1)
                .take(ck.net.layer_dims().len().saturating_sub(2))
                .filter(|_| ck.net.has_batchnorm())
                .flat_map(|&h| [h, h]),
        )
        .collect();
    if shapes != expected {
        return Err(Error::Checkpoint(format!(
            "parameter shapes {shapes:?} do not match layer dims {:?}",
            ck.net.layer_dims()
        )));
    }
    Ok(ck)
}
