//! Provenance manifests written next to every artifact.
//!
//! The config hash covers the command name, the SHA-256 of every input file
//! and the settings that affect output bytes. File locations are left out,
//! so moving inputs around keeps the hash.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use lexsimp_core::io;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub language: String,
    /// Input name to content hash.
    pub inputs: BTreeMap<String, String>,
    pub settings: Value,
    /// Output file name to content hash.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

/// Collects inputs and settings for one command run.
#[derive(Debug, Clone)]
pub struct Provenance {
    command: String,
    seed: u64,
    language: String,
    inputs: BTreeMap<String, String>,
    settings: Value,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, language: &str, settings: impl Serialize) -> Self {
        Self {
            command: command.to_string(),
            seed,
            language: language.to_string(),
            inputs: BTreeMap::new(),
            settings: serde_json::to_value(settings).expect("settings serialize"),
        }
    }

    pub fn input(mut self, name: &str, path: &Path) -> Result<Self, CliError> {
        self.inputs.insert(name.to_string(), io::sha256_file(path)?);
        Ok(self)
    }

    pub fn input_hash(mut self, name: &str, hash: String) -> Self {
        self.inputs.insert(name.to_string(), hash);
        self
    }

    pub fn config_hash(&self) -> String {
        let canonical = serde_json::json!({
            "command": self.command,
            "seed": self.seed,
            "language": self.language,
            "inputs": self.inputs,
            "settings": self.settings,
        });
        io::sha256_hex(canonical.to_string().as_bytes())
    }

    /// Hash the written outputs and store the manifest as
    /// `{dir}/{command}.manifest.json`.
    pub fn finish(self, dir: &Path, outputs: &[&Path], details: Value) -> Result<ArtifactManifest, CliError> {
        let mut hashes = BTreeMap::new();
        for p in outputs {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            hashes.insert(name, io::sha256_file(p)?);
        }
        let manifest = ArtifactManifest {
            config_hash: self.config_hash(),
            command: self.command,
            seed: self.seed,
            language: self.language,
            inputs: self.inputs,
            settings: self.settings,
            outputs: hashes,
            details,
        };
        io::write_json_atomic(&dir.join(format!("{}.manifest.json", manifest.command)), &manifest)?;
        Ok(manifest)
    }
}
