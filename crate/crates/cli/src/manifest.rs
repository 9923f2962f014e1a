//! Run manifests written next to every artifact.
//!
//! A manifest records the resolved configuration, its hash, and SHA-256
//! digests of every input and output, which is enough to re-run the command
//! and check the result bit for bit. No timestamps or host data are included
//! so reruns produce identical manifests.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub tool_version: &'static str,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digests(paths: &[&Path]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// `<artifact>.manifest.json`
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

pub fn write_manifest<C: Serialize>(
    command: &'static str,
    config: &C,
    inputs: &[&Path],
    outputs: &[&Path],
    counts: serde_json::Value,
) -> Result<PathBuf> {
    let config = serde_json::to_value(config)?;
    let config_sha256 = hex::encode(Sha256::digest(serde_json::to_vec(&config)?));
    let manifest = Manifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        config_sha256,
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
        counts,
    };
    let path = manifest_path(outputs[0]);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
