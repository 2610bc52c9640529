//! Provenance record embedded in every output file.

use serde::{Deserialize, Serialize};

/// Digest of one input to a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub digest: String,
}

/// What produced an output file. Wall time is only recorded on request so
/// that identical runs produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
    pub library_version: String,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.into(),
            inputs: Vec::new(),
            config,
            seed: None,
            wall_time_seconds: None,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn input(mut self, role: impl Into<String>, digest: impl Into<String>) -> Self {
        self.inputs.push(InputDigest {
            role: role.into(),
            digest: digest.into(),
        });
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
}
