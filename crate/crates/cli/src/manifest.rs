use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

/// Provenance embedded in every output file.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub resolved_config: Value,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config_path: Option<&Path>, config: &C, seed: Option<u64>) -> Self {
        Self {
            command: command.to_owned(),
            config_path: config_path.map(|p| p.display().to_string()),
            resolved_config: serde_json::to_value(config).expect("configs serialize"),
            seed,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    pub fn with_outputs(mut self, outputs: &[PathBuf]) -> Self {
        self.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
        self
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("manifest serializes")
    }

    /// The manifest without its timestamp, for outputs that must be
    /// byte-identical across reruns.
    pub fn to_stable_value(&self) -> Value {
        let mut v = self.to_value();
        if let Value::Object(map) = &mut v {
            map.remove("timestamp");
        }
        v
    }
}
