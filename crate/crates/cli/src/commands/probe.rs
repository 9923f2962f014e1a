use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use lexamb_core::probe::{
    load_params, save_params, score_surprisal, train_probe, type_scores, MaskedSet, ProbeHyper,
};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use super::open_store;
use crate::error::{CliError, Result};
use crate::manifest::write_manifest;
use crate::tsv::{write_rows_with_header, SurprisalRow};

#[derive(Debug, Clone, Serialize)]
pub struct ProbeConfig {
    pub train: PathBuf,
    /// Analysis store to score; ignored with `score_on_train`.
    pub score: Option<PathBuf>,
    pub score_on_train: bool,
    pub params_out: PathBuf,
    pub out: PathBuf,
    pub min_contexts: u64,
    pub hyper: ProbeHyper,
}

#[derive(Debug, Clone)]
pub struct ProbeSummary {
    pub rows: usize,
    pub omitted: usize,
    pub flagged: usize,
    pub epoch_loss_bits: Vec<f64>,
    pub mean_ctx_surprisal_bits: f64,
}

const COLUMNS: [&str; 7] = [
    "word",
    "n_contexts",
    "ctx_surprisal_bits",
    "unigram_surprisal_bits",
    "informativeness_bits",
    "corpus_count",
    "flagged",
];

pub fn run(config: &ProbeConfig) -> Result<ProbeSummary> {
    let score_path = if config.score_on_train {
        config.train.clone()
    } else {
        config
            .score
            .clone()
            .ok_or_else(|| CliError::Usage("either --score <store> or --score-on-train is required".into()))?
    };

    // Check compatibility before any work so a refusal leaves nothing behind.
    let mut train_reader = open_store(&config.train)?;
    let train_header = train_reader.header().clone();
    let score_header = open_store(&score_path)?.header().clone();
    if train_header.vocab_hash() != score_header.vocab_hash() {
        return Err(CliError::Data(format!(
            "vocabulary hash mismatch between {} and {}; refusing to score",
            config.train.display(),
            score_path.display()
        )));
    }
    if train_header.dim != score_header.dim {
        return Err(CliError::Data(format!(
            "dimension mismatch: training store {} vs scoring store {}",
            train_header.dim, score_header.dim
        )));
    }

    let data = MaskedSet::from_reader(&mut train_reader)?;
    let training_records = data.len();
    info!("training on {training_records} masked records");
    let trained = train_probe(&train_header, &data, &config.hyper)?;
    drop(data);

    {
        let f = File::create(&config.params_out).map_err(|e| CliError::io(&config.params_out, e))?;
        save_params(&trained.params, BufWriter::new(f))?;
    }
    // Score with exactly what was persisted.
    let params = {
        let f = File::open(&config.params_out).map_err(|e| CliError::io(&config.params_out, e))?;
        load_params(BufReader::new(f))?
    };

    let mut score_reader = open_store(&score_path)?;
    let table = score_surprisal(&params, &mut score_reader, config.min_contexts)?;
    let scores = type_scores(&score_header, &table);
    let rows: Vec<SurprisalRow> = scores
        .iter()
        .map(|s| SurprisalRow {
            word: score_header.word(s.word_id).expect("validated id").to_string(),
            n_contexts: s.n_contexts,
            ctx_surprisal_bits: s.ctx_surprisal_bits,
            unigram_surprisal_bits: s.unigram_surprisal_bits,
            informativeness_bits: s.informativeness_bits,
            corpus_count: score_header.vocab[s.word_id as usize].count,
            flagged: s.flagged,
        })
        .collect();
    let flagged = rows.iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        warn!("{flagged} types have informativeness below -0.5 bits");
    }
    if !table.omitted.is_empty() {
        warn!("{} types below {} contexts were omitted", table.omitted.len(), config.min_contexts);
    }
    write_rows_with_header(&config.out, &COLUMNS, &rows)?;

    let mean_ctx = if rows.is_empty() {
        f64::NAN
    } else {
        rows.iter().map(|r| r.ctx_surprisal_bits).sum::<f64>() / rows.len() as f64
    };
    let mut inputs = vec![config.train.as_path()];
    if !config.score_on_train {
        inputs.push(score_path.as_path());
    }
    write_manifest(
        "probe",
        config,
        &inputs,
        &[config.out.as_path(), config.params_out.as_path()],
        json!({
            "training_records": training_records,
            "adam_steps": trained.steps,
            "epoch_loss_bits": trained.epoch_loss_bits,
            "scored_types": rows.len(),
            "omitted_types": table.omitted.len(),
            "flagged_types": flagged,
            "vocab_sha256": hex::encode(train_header.vocab_hash()),
        }),
    )?;
    Ok(ProbeSummary {
        rows: rows.len(),
        omitted: table.omitted.len(),
        flagged,
        epoch_loss_bits: trained.epoch_loss_bits,
        mean_ctx_surprisal_bits: mean_ctx,
    })
}
