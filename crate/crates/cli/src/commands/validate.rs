use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use lexamb_core::embedstore::{validate_store, ValidationReport};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct ValidateConfig {
    pub store: PathBuf,
    pub min_contexts: u64,
    pub out: Option<PathBuf>,
}

pub fn run(config: &ValidateConfig) -> Result<ValidationReport> {
    let file = File::open(&config.store).map_err(|e| CliError::io(&config.store, e))?;
    let report = validate_store(BufReader::new(file), config.min_contexts)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match &config.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e))?,
        None => print!("{text}"),
    }
    Ok(report)
}
