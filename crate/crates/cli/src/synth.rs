//! Synthetic stub stores for smoke tests and demos.
//!
//! Each type gets a random center and a spread. Token states scatter around
//! the center with that spread, so wider types score as more ambiguous.
//! Masked states scatter around the same center with noise inversely
//! proportional to the spread, so more ambiguous types sit in more
//! predictable contexts.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use lexamb_core::embedstore::{EmbeddingRecord, StoreHeader, StoreKind, StoreWriter};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct SynthConfig {
    pub vocab: usize,
    pub records: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab: 50,
            records: 20_000,
            dim: 16,
            seed: 0,
        }
    }
}

struct TypeModel {
    center: Vec<f32>,
    spread: f32,
    context_noise: f32,
}

pub struct SynthCorpus {
    pub tokens_header: StoreHeader,
    pub masked_header: StoreHeader,
    models: Vec<TypeModel>,
    counts: Vec<usize>,
    rng: ChaCha8Rng,
}

impl SynthCorpus {
    pub fn new(config: &SynthConfig) -> Result<Self> {
        if config.vocab == 0 || config.dim == 0 || config.records < config.vocab {
            return Err(CliError::Usage("synthetic corpus needs vocab, dim >= 1 and records >= vocab".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let models: Vec<TypeModel> = (0..config.vocab)
            .map(|_| {
                let center = (0..config.dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        2.0 * z as f32
                    })
                    .collect();
                let spread = rng.random_range(-1.0f32..1.0).exp();
                TypeModel {
                    center,
                    spread,
                    context_noise: 1.5 / spread,
                }
            })
            .collect();
        // Zipf-like counts with a flat offset so every type stays well populated.
        let weights: Vec<f64> = (0..config.vocab).map(|i| 1.0 / (i as f64 + 20.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut counts: Vec<usize> = weights
            .iter()
            .map(|w| ((w / total) * config.records as f64).floor().max(1.0) as usize)
            .collect();
        let assigned: usize = counts.iter().sum();
        counts[0] += config.records.saturating_sub(assigned);
        let pairs = counts.iter().enumerate().map(|(i, &c)| (format!("w{i:03}"), c as u64));
        let tokens_header = StoreHeader::from_pairs(StoreKind::TokenStates, config.dim as u32, pairs.clone())?;
        let masked_header = StoreHeader::from_pairs(StoreKind::MaskedStates, config.dim as u32, pairs)?;
        Ok(SynthCorpus {
            tokens_header,
            masked_header,
            models,
            counts,
            rng,
        })
    }

    fn draw(&mut self, masked: bool) -> Vec<EmbeddingRecord> {
        let mut recs = Vec::with_capacity(self.counts.iter().sum());
        for (id, (model, &count)) in self.models.iter().zip(&self.counts).enumerate() {
            let scale = if masked { model.context_noise } else { model.spread };
            for _ in 0..count {
                let v = model
                    .center
                    .iter()
                    .map(|c| {
                        let z: f64 = StandardNormal.sample(&mut self.rng);
                        c + scale * z as f32
                    })
                    .collect();
                recs.push(EmbeddingRecord::new(id as u32, v));
            }
        }
        recs.shuffle(&mut self.rng);
        recs
    }

    pub fn token_records(&mut self) -> Vec<EmbeddingRecord> {
        self.draw(false)
    }

    pub fn masked_records(&mut self) -> Vec<EmbeddingRecord> {
        self.draw(true)
    }
}

fn write(path: &Path, header: &StoreHeader, records: Vec<EmbeddingRecord>) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = StoreWriter::new(header.clone(), BufWriter::new(file))?;
    for r in records {
        w.write_record(r.word_id, &r.vector)?;
    }
    w.finish()?;
    Ok(())
}

/// Writes a token store, a masked analysis store and a disjoint masked
/// training store drawn from one synthetic corpus.
pub fn write_synthetic(config: &SynthConfig, tokens: &Path, masked: &Path, masked_train: &Path) -> Result<()> {
    let mut corpus = SynthCorpus::new(config)?;
    let t = corpus.token_records();
    write(tokens, &corpus.tokens_header.clone(), t)?;
    let m = corpus.masked_records();
    write(masked, &corpus.masked_header.clone(), m)?;
    let mt = corpus.masked_records();
    write(masked_train, &corpus.masked_header.clone(), mt)?;
    Ok(())
}
