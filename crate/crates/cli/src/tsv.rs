//! Tab-separated score tables exchanged between subcommands.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Ambiguity table row. The `wordnet_bits` column exists only when a sense
/// table was supplied; an empty cell marks a word the lexicon lacks.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct AmbiguityRow {
    pub word: String,
    pub n_contexts: u64,
    pub entropy_bits: f64,
    pub floored_dims: usize,
    #[serde(default)]
    pub wordnet_bits: Option<f64>,
}

#[derive(Serialize)]
pub struct AmbiguityOut<'a> {
    pub word: &'a str,
    pub n_contexts: u64,
    pub entropy_bits: f64,
    pub floored_dims: usize,
}

#[derive(Serialize)]
pub struct AmbiguityOutWithSenses<'a> {
    pub word: &'a str,
    pub n_contexts: u64,
    pub entropy_bits: f64,
    pub floored_dims: usize,
    pub wordnet_bits: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalRow {
    pub word: String,
    pub n_contexts: u64,
    pub ctx_surprisal_bits: f64,
    pub unigram_surprisal_bits: f64,
    pub informativeness_bits: f64,
    pub corpus_count: u64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedRow {
    pub word: String,
    pub n_contexts: u64,
    pub ambiguity_bits: f64,
    pub wordnet_bits: Option<f64>,
    pub ctx_surprisal_bits: f64,
    pub unigram_surprisal_bits: f64,
    pub informativeness_bits: f64,
    pub corpus_count: u64,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Writes `rows`, or just the header line when there are none.
pub fn write_rows_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        let mut line = header.join("\t");
        line.push('\n');
        return std::fs::write(path, line).map_err(|e| CliError::io(path, e));
    }
    write_rows(path, rows)
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::Data(format!("{}: {e}", path.display()))))
        .collect()
}
