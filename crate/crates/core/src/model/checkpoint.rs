//! Versioned checkpoint container.
//!
//! A checkpoint holds everything needed to reproduce a trained model's
//! predictions on new windows: the config, all weight tensors (via the
//! embedded [`ModelParameters`]), the graph-feature node ordering, and the
//! fitted normalizer statistics. Serialized as JSON; floats round-trip
//! exactly, so saving and reloading preserves predictions bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelParameters;
use crate::corpus::SpeakerId;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, NormalizerSet};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: ModelParameters,
    /// Node ordering the graph-feature distance rows were built with.
    pub node_order: Vec<SpeakerId>,
    pub normalizers: NormalizerSet,
    pub feature_dims: BTreeMap<FeatureKind, usize>,
}

impl Checkpoint {
    pub fn new(
        params: ModelParameters,
        node_order: Vec<SpeakerId>,
        normalizers: NormalizerSet,
        feature_dims: BTreeMap<FeatureKind, usize>,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            params,
            node_order,
            normalizers,
            feature_dims,
        }
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(self).map_err(|e| Error::invalid(format!("checkpoint encode: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())?;
        let checkpoint: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| {
            Error::invalid(format!(
                "checkpoint {}: {e}",
                path.as_ref().display()
            ))
        })?;
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                checkpoint.version
            )));
        }
        Ok(checkpoint)
    }
}
