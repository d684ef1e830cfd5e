//! Run manifests: enough of the resolved configuration to re-run a command,
//! plus content digests of inputs and outputs. No timestamps, so identical
//! runs write identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prompting::templates::template_hashes;

/// SHA-256 over `blob <len>\0<content>`, as git computes object ids in
/// its SHA-256 mode.
pub fn blob_digest(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(blob_digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Resolved configuration. Holds environment variable names for API
    /// keys, never key values.
    pub config: Value,
    pub template_hashes: BTreeMap<String, String>,
    /// Input path → blob digest.
    pub inputs: BTreeMap<String, String>,
    /// Output file name → blob digest.
    pub outputs: BTreeMap<String, String>,
    /// Command-specific counts and statistics.
    pub stats: Value,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: Value) -> Self {
        RunManifest {
            tool: "rubricbench".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            template_hashes: template_hashes(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            stats: Value::Null,
        }
    }

    pub fn add_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    /// Record an output file under its file name.
    pub fn add_output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.outputs.insert(name, file_digest(path)?);
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
