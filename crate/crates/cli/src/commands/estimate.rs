use std::fs::File;
use std::path::PathBuf;

use lexamb_core::ambiguity::{estimate_ambiguities, wordnet_ambiguity, AmbiguityConfig, SenseTable};
use log::warn;
use serde::Serialize;
use serde_json::json;

use super::open_store;
use crate::error::{CliError, Result};
use crate::manifest::write_manifest;
use crate::tsv::{write_rows_with_header, AmbiguityOut, AmbiguityOutWithSenses};

#[derive(Debug, Clone, Serialize)]
pub struct EstimateConfig {
    pub store: PathBuf,
    pub out: PathBuf,
    pub senses: Option<PathBuf>,
    pub min_contexts: u64,
    pub variance_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub rows: usize,
    pub omitted: usize,
    pub not_covered: usize,
    pub warnings: usize,
}

pub fn run(config: &EstimateConfig) -> Result<EstimateSummary> {
    if config.min_contexts < 2 {
        return Err(CliError::Usage("--min-contexts must be at least 2".into()));
    }
    let senses = config
        .senses
        .as_ref()
        .map(|p| {
            let f = File::open(p).map_err(|e| CliError::io(p, e))?;
            Ok::<_, CliError>(SenseTable::from_tsv(f)?)
        })
        .transpose()?;

    let mut reader = open_store(&config.store)?;
    let header = reader.header().clone();
    let table = estimate_ambiguities(
        &mut reader,
        &AmbiguityConfig {
            min_contexts: config.min_contexts,
            variance_floor: config.variance_floor,
        },
    )?;

    let mut warnings = 0;
    if table.scores.is_empty() {
        warn!("no type reached {} contexts; ambiguity table is empty", config.min_contexts);
        warnings += 1;
    }
    if !table.omitted.is_empty() {
        warn!("{} types below {} contexts were omitted", table.omitted.len(), config.min_contexts);
        warnings += 1;
    }

    let word = |id: u32| header.word(id).expect("id validated by reader");
    let mut not_covered = 0;
    let columns = ["word", "n_contexts", "entropy_bits", "floored_dims"];
    match &senses {
        None => {
            let rows: Vec<AmbiguityOut> = table
                .scores
                .iter()
                .map(|s| AmbiguityOut {
                    word: word(s.word_id),
                    n_contexts: s.n_contexts,
                    entropy_bits: s.entropy_bits,
                    floored_dims: s.floored_dims,
                })
                .collect();
            write_rows_with_header(&config.out, &columns, &rows)?;
        }
        Some(senses) => {
            let rows: Vec<AmbiguityOutWithSenses> = table
                .scores
                .iter()
                .map(|s| {
                    let wn = wordnet_ambiguity(senses, word(s.word_id));
                    not_covered += usize::from(wn.is_none());
                    AmbiguityOutWithSenses {
                        word: word(s.word_id),
                        n_contexts: s.n_contexts,
                        entropy_bits: s.entropy_bits,
                        floored_dims: s.floored_dims,
                        wordnet_bits: wn,
                    }
                })
                .collect();
            let mut cols = columns.to_vec();
            cols.push("wordnet_bits");
            write_rows_with_header(&config.out, &cols, &rows)?;
        }
    }
    if not_covered > 0 {
        warn!("{not_covered} scored types are missing from the sense table");
    }

    let mut inputs = vec![config.store.as_path()];
    if let Some(p) = &config.senses {
        inputs.push(p.as_path());
    }
    write_manifest(
        "estimate",
        config,
        &inputs,
        &[config.out.as_path()],
        json!({
            "vocab_size": header.vocab_size(),
            "dim": header.dim,
            "scored_types": table.scores.len(),
            "omitted_types": table.omitted.len(),
            "fully_floored_types": table.scores.iter().filter(|s| s.floored_dims == header.dim as usize).count(),
            "not_covered_by_senses": not_covered,
        }),
    )?;
    Ok(EstimateSummary {
        rows: table.scores.len(),
        omitted: table.omitted.len(),
        not_covered,
        warnings,
    })
}
