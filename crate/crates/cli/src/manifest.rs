//! Run manifests: what a command read, which seeds it used and what it wrote.
//!
//! Manifests carry file names and content hashes only, so two runs over the
//! same inputs write the same manifest wherever their output directories are.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Seeds {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub data_sha256: String,
    pub seeds: Seeds,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn new(command: &str, config_sha256: String, data_sha256: String, seeds: Seeds) -> Self {
        Manifest {
            command: command.to_string(),
            version: VERSION.to_string(),
            config_sha256,
            data_sha256,
            seeds,
            outputs: Vec::new(),
        }
    }

    /// Records `name` inside `dir` with its current contents.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        self.outputs.push(OutputEntry {
            file: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Writes `manifest-<command>.toml` into `dir` and returns its name.
    pub fn write(&self, dir: &Path) -> Result<String> {
        let name = format!("manifest-{}.toml", self.command);
        let text = toml::to_string(self).context("cannot serialize manifest")?;
        fs::write(dir.join(&name), text)
            .with_context(|| format!("cannot write {}", dir.join(&name).display()))?;
        Ok(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_is_independent_of_the_directory() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut texts = Vec::new();
        for dir in [a.path(), b.path()] {
            fs::write(dir.join("x.csv"), "a,b\n1,2\n").unwrap();
            let mut m = Manifest::new("label", "c".into(), "d".into(), Seeds::default());
            m.add_output(dir, "x.csv").unwrap();
            let name = m.write(dir).unwrap();
            texts.push(fs::read_to_string(dir.join(name)).unwrap());
        }
        assert_eq!(texts[0], texts[1]);
        assert!(texts[0].contains("command = \"label\""));
    }
}
