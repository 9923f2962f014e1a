//! Lexical ambiguity estimators.
//!
//! The continuous estimate is the differential entropy of a diagonal Gaussian
//! fitted to all token states of a word type. A Gaussian has maximal entropy
//! for a given covariance, and dropping the off-diagonal terms can only raise
//! it further, so the value is an upper bound on the entropy of the type's
//! meaning distribution. The discrete estimate is `log2(#senses)`.

use std::collections::HashMap;
use std::f64::consts::{E, PI};
use std::io::{BufRead, Read};

use log::{info, warn};
use serde::Serialize;

use crate::embedstore::{EmbeddingRecord, StoreError, StoreHeader, StoreKind, StoreReader};

pub const DEFAULT_MIN_CONTEXTS: u64 = 100;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum AmbiguityError {
    #[error("dimension mismatch: accumulator has {expected}, input has {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite component {component} in observation")]
    NonFinite { component: usize },
    #[error("need at least 2 observations for an unbiased variance, have {n}")]
    InsufficientData { n: u64 },
    #[error("variance floor must be positive and finite, got {0}")]
    BadFloor(f64),
    #[error("expected a {expected} store, found {found}")]
    WrongKind { expected: StoreKind, found: StoreKind },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("sense table line {line}: {reason}")]
    SenseTable { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AmbiguityError> = std::result::Result<T, E>;

/// Streaming per-dimension mean and sum of squared deviations (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct TypeMoments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl TypeMoments {
    pub fn new(dim: usize) -> Self {
        TypeMoments {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    /// Adds one observation. On error the accumulator is left untouched.
    pub fn accumulate<T: Copy + Into<f64>>(&mut self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(AmbiguityError::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if let Some(component) = x.iter().position(|&v| !v.into().is_finite()) {
            return Err(AmbiguityError::NonFinite { component });
        }
        self.n += 1;
        let n = self.n as f64;
        for ((mean, m2), &xi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let xi: f64 = xi.into();
            let delta = xi - *mean;
            *mean += delta / n;
            *m2 += delta * (xi - *mean);
        }
        Ok(())
    }

    /// Combines two accumulators as if their observations had been streamed
    /// into one. The empty accumulator is an exact identity.
    pub fn merge(&self, other: &TypeMoments) -> Result<TypeMoments> {
        if self.dim() != other.dim() {
            return Err(AmbiguityError::DimMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        if other.n == 0 {
            return Ok(self.clone());
        }
        if self.n == 0 {
            return Ok(other.clone());
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let mut out = TypeMoments::new(self.dim());
        out.n = self.n + other.n;
        for d in 0..self.dim() {
            let delta = other.mean[d] - self.mean[d];
            out.mean[d] = self.mean[d] + delta * nb / n;
            out.m2[d] = self.m2[d] + other.m2[d] + delta * delta * na * nb / n;
        }
        Ok(out)
    }

    /// Unbiased per-dimension variance, `m2 / (n - 1)`, clamped at zero.
    pub fn variance(&self) -> Result<Vec<f64>> {
        if self.n < 2 {
            return Err(AmbiguityError::InsufficientData { n: self.n });
        }
        let denom = (self.n - 1) as f64;
        Ok(self.m2.iter().map(|m| (m / denom).max(0.0)).collect())
    }

    /// Differential entropy in bits of the diagonal Gaussian with this
    /// accumulator's unbiased variances, each floored at `variance_floor`.
    pub fn entropy_bound(&self, variance_floor: f64) -> Result<EntropyBound> {
        if !(variance_floor > 0.0 && variance_floor.is_finite()) {
            return Err(AmbiguityError::BadFloor(variance_floor));
        }
        let variance = self.variance()?;
        let two_pi_e = 2.0 * PI * E;
        let mut floored_dims = 0;
        let mut bits = 0.0;
        for v in variance {
            let v = if v < variance_floor {
                floored_dims += 1;
                variance_floor
            } else {
                v
            };
            bits += (two_pi_e * v).log2();
        }
        Ok(EntropyBound {
            entropy_bits: 0.5 * bits,
            floored_dims,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBound {
    pub entropy_bits: f64,
    pub floored_dims: usize,
}

/// Continuous ambiguity estimate for one word type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmbiguityScore {
    pub word_id: u32,
    pub n_contexts: u64,
    /// Differential entropy; may be negative.
    pub entropy_bits: f64,
    pub floored_dims: usize,
}

pub fn gaussian_entropy_bound(word_id: u32, acc: &TypeMoments, variance_floor: f64) -> Result<AmbiguityScore> {
    let bound = acc.entropy_bound(variance_floor)?;
    Ok(AmbiguityScore {
        word_id,
        n_contexts: acc.count(),
        entropy_bits: bound.entropy_bits,
        floored_dims: bound.floored_dims,
    })
}

/// Word → number of lexicon senses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SenseTable {
    senses: HashMap<String, u32>,
}

impl SenseTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: impl Into<String>, count: u32) -> Result<()> {
        if count == 0 {
            return Err(AmbiguityError::SenseTable {
                line: 0,
                reason: "sense count must be at least 1".into(),
            });
        }
        self.senses.insert(word.into(), count);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.senses.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.senses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }

    /// Parses a two-column `word<TAB>count` file. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn from_tsv<R: Read>(source: R) -> Result<Self> {
        let mut table = SenseTable::new();
        for (i, line) in std::io::BufReader::new(source).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut cols = trimmed.split('\t');
            let (Some(word), Some(count), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(AmbiguityError::SenseTable {
                    line: lineno,
                    reason: "expected exactly two tab-separated columns".into(),
                });
            };
            let count: u32 = count.trim().parse().map_err(|_| AmbiguityError::SenseTable {
                line: lineno,
                reason: format!("invalid sense count {count:?}"),
            })?;
            if word.is_empty() || count == 0 {
                return Err(AmbiguityError::SenseTable {
                    line: lineno,
                    reason: "empty word or zero sense count".into(),
                });
            }
            table.senses.insert(word.to_string(), count);
        }
        Ok(table)
    }
}

/// `log2(#senses)` for a covered word, `None` when the lexicon lacks it.
pub fn wordnet_ambiguity(senses: &SenseTable, word: &str) -> Option<f64> {
    senses.get(word).map(|c| f64::from(c).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmbiguityConfig {
    pub min_contexts: u64,
    pub variance_floor: f64,
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        AmbiguityConfig {
            min_contexts: DEFAULT_MIN_CONTEXTS,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

/// One accumulator per vocabulary entry, allocated on first observation.
#[derive(Debug, Clone)]
pub struct MomentTable {
    dim: usize,
    slots: Vec<Option<TypeMoments>>,
}

impl MomentTable {
    pub fn new(dim: usize, vocab_size: usize) -> Self {
        MomentTable {
            dim,
            slots: vec![None; vocab_size],
        }
    }

    pub fn push<T: Copy + Into<f64>>(&mut self, word_id: u32, x: &[T]) -> Result<()> {
        let dim = self.dim;
        self.slots[word_id as usize]
            .get_or_insert_with(|| TypeMoments::new(dim))
            .accumulate(x)
    }

    pub fn get(&self, word_id: u32) -> Option<&TypeMoments> {
        self.slots.get(word_id as usize).and_then(Option::as_ref)
    }

    pub fn merge(&self, other: &MomentTable) -> Result<MomentTable> {
        if self.dim != other.dim || self.slots.len() != other.slots.len() {
            return Err(AmbiguityError::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let slots = self
            .slots
            .iter()
            .zip(&other.slots)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => a.merge(b).map(Some),
                (Some(x), None) | (None, Some(x)) => Ok(Some(x.clone())),
                (None, None) => Ok(None),
            })
            .collect::<Result<_>>()?;
        Ok(MomentTable { dim: self.dim, slots })
    }

    /// Scores every type with at least `min_contexts` observations, in word-id order.
    pub fn scores(&self, config: &AmbiguityConfig) -> Result<AmbiguityTable> {
        let mut scores = Vec::new();
        let mut omitted = Vec::new();
        for (id, slot) in self.slots.iter().enumerate() {
            let Some(acc) = slot else { continue };
            if acc.count() < config.min_contexts.max(2) {
                omitted.push((id as u32, acc.count()));
                continue;
            }
            scores.push(gaussian_entropy_bound(id as u32, acc, config.variance_floor)?);
        }
        Ok(AmbiguityTable { scores, omitted })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityTable {
    pub scores: Vec<AmbiguityScore>,
    /// `(word_id, n_contexts)` for observed types below the context threshold.
    pub omitted: Vec<(u32, u64)>,
}

fn check_token_store(header: &StoreHeader) -> Result<()> {
    if header.kind != StoreKind::TokenStates {
        return Err(AmbiguityError::WrongKind {
            expected: StoreKind::TokenStates,
            found: header.kind,
        });
    }
    Ok(())
}

/// Single-threaded reference pass over a TokenStates store.
pub fn estimate_ambiguities<R: Read>(reader: &mut StoreReader<R>, config: &AmbiguityConfig) -> Result<AmbiguityTable> {
    let header = reader.header().clone();
    check_token_store(&header)?;
    let mut table = MomentTable::new(header.dim as usize, header.vocab.len());
    let mut vector = vec![0f32; header.dim as usize];
    let mut records = 0u64;
    while let Some(id) = reader.read_into(&mut vector)? {
        table.push(id, &vector)?;
        records += 1;
    }
    finish(&header, &table, records, config)
}

/// Shards `records` across `workers` threads and merges the per-shard
/// accumulators. Agrees with [`estimate_ambiguities`] up to floating-point
/// reassociation.
pub fn estimate_ambiguities_partitioned(
    header: &StoreHeader,
    records: &[EmbeddingRecord],
    config: &AmbiguityConfig,
    workers: usize,
) -> Result<AmbiguityTable> {
    check_token_store(header)?;
    let dim = header.dim as usize;
    let vocab = header.vocab.len();
    let chunk = records.len().div_ceil(workers.max(1)).max(1);
    let tables: Vec<Result<MomentTable>> = std::thread::scope(|s| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|shard| {
                s.spawn(move || {
                    let mut table = MomentTable::new(dim, vocab);
                    for r in shard {
                        table.push(r.word_id, &r.vector)?;
                    }
                    Ok(table)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut merged = MomentTable::new(dim, vocab);
    for t in tables {
        merged = merged.merge(&t?)?;
    }
    finish(header, &merged, records.len() as u64, config)
}

fn finish(header: &StoreHeader, table: &MomentTable, records: u64, config: &AmbiguityConfig) -> Result<AmbiguityTable> {
    if records == 0 {
        warn!("store contains no records; ambiguity table is empty");
    }
    let out = table.scores(config)?;
    for &(id, n) in &out.omitted {
        info!(
            "omitting {:?}: {n} contexts < {}",
            header.word(id).unwrap_or("?"),
            config.min_contexts
        );
    }
    Ok(out)
}
