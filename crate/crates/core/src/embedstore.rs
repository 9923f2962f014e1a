//! Binary store of per-occurrence embedding vectors.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "LEXE" (4) | version u16 | kind u8 | dim u32 | vocab_size u32
//! vocab_size x ( len u32 | UTF-8 bytes | corpus count u64 )
//! records until EOF: word_id u32 | dim x f32
//! ```
//!
//! Records carry no ordering guarantee. The header is self-describing, so a
//! reader needs nothing beyond the byte stream.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, Read, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 4] = b"LEXE";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt store at byte offset {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("record {index}: word id {word_id} out of range for vocabulary of {vocab_size}")]
    WordIdOutOfRange {
        index: u64,
        word_id: u32,
        vocab_size: u32,
    },
    #[error("record {index}: component {component} is not finite")]
    NonFinite { index: u64, component: usize },
    #[error("record {index}: vector has {got} components, header declares {dim}")]
    DimMismatch { index: u64, got: usize, dim: u32 },
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// What a record's vector means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StoreKind {
    /// Hidden state of the observed word in its context.
    TokenStates,
    /// Hidden state of a masked slot, paired with the id of the word that filled it.
    MaskedStates,
}

impl StoreKind {
    fn to_byte(self) -> u8 {
        match self {
            StoreKind::TokenStates => 0,
            StoreKind::MaskedStates => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(StoreKind::TokenStates),
            1 => Some(StoreKind::MaskedStates),
            _ => None,
        }
    }
}

impl std::fmt::Display for StoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreKind::TokenStates => f.write_str("TokenStates"),
            StoreKind::MaskedStates => f.write_str("MaskedStates"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VocabEntry {
    pub word: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoreHeader {
    pub version: u16,
    pub kind: StoreKind,
    pub dim: u32,
    pub vocab: Vec<VocabEntry>,
}

impl StoreHeader {
    pub fn new(kind: StoreKind, dim: u32, vocab: Vec<VocabEntry>) -> Result<Self> {
        let header = StoreHeader {
            version: FORMAT_VERSION,
            kind,
            dim,
            vocab,
        };
        header.validate()?;
        Ok(header)
    }

    /// Convenience constructor from `(word, count)` pairs.
    pub fn from_pairs<S: Into<String>>(
        kind: StoreKind,
        dim: u32,
        pairs: impl IntoIterator<Item = (S, u64)>,
    ) -> Result<Self> {
        let vocab = pairs
            .into_iter()
            .map(|(word, count)| VocabEntry {
                word: word.into(),
                count,
            })
            .collect();
        Self::new(kind, dim, vocab)
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab.len() as u32
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(|e| e.word.as_str())
    }

    pub fn total_count(&self) -> u64 {
        self.vocab.iter().map(|e| e.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(StoreError::InvalidHeader("dim must be at least 1".into()));
        }
        if self.vocab.len() > u32::MAX as usize {
            return Err(StoreError::InvalidHeader("vocabulary too large".into()));
        }
        let mut seen = HashSet::with_capacity(self.vocab.len());
        for (i, entry) in self.vocab.iter().enumerate() {
            if entry.word.is_empty() {
                return Err(StoreError::InvalidHeader(format!("vocab entry {i} is empty")));
            }
            if entry.count == 0 {
                return Err(StoreError::InvalidHeader(format!(
                    "vocab entry {i} ({:?}) has zero count",
                    entry.word
                )));
            }
            if !seen.insert(entry.word.as_str()) {
                return Err(StoreError::InvalidHeader(format!(
                    "duplicate vocab entry {:?}",
                    entry.word
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over the ordered vocabulary strings. Counts are excluded so that
    /// stores drawn from different samples of one corpus share a hash.
    pub fn vocab_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for entry in &self.vocab {
            hasher.update((entry.word.len() as u32).to_le_bytes());
            hasher.update(entry.word.as_bytes());
        }
        hasher.finalize().into()
    }

    fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(15 + self.vocab.len() * 16);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&self.version.to_le_bytes());
        buf.push(self.kind.to_byte());
        buf.extend_from_slice(&self.dim.to_le_bytes());
        buf.extend_from_slice(&self.vocab_size().to_le_bytes());
        for entry in &self.vocab {
            buf.extend_from_slice(&(entry.word.len() as u32).to_le_bytes());
            buf.extend_from_slice(entry.word.as_bytes());
            buf.extend_from_slice(&entry.count.to_le_bytes());
        }
        buf
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub word_id: u32,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(word_id: u32, vector: Vec<f32>) -> Self {
        EmbeddingRecord { word_id, vector }
    }
}

fn check_record(header: &StoreHeader, index: u64, word_id: u32, vector: &[f32]) -> Result<()> {
    if word_id >= header.vocab_size() {
        return Err(StoreError::WordIdOutOfRange {
            index,
            word_id,
            vocab_size: header.vocab_size(),
        });
    }
    if vector.len() != header.dim as usize {
        return Err(StoreError::DimMismatch {
            index,
            got: vector.len(),
            dim: header.dim,
        });
    }
    if let Some(component) = vector.iter().position(|v| !v.is_finite()) {
        return Err(StoreError::NonFinite { index, component });
    }
    Ok(())
}

/// Incremental writer. The header is emitted on construction.
pub struct StoreWriter<W: Write> {
    sink: W,
    header: StoreHeader,
    records: u64,
    bytes: u64,
    scratch: Vec<u8>,
}

impl<W: Write> StoreWriter<W> {
    pub fn new(header: StoreHeader, mut sink: W) -> Result<Self> {
        header.validate()?;
        let encoded = header.encode();
        sink.write_all(&encoded)?;
        let scratch = Vec::with_capacity(4 + 4 * header.dim as usize);
        Ok(StoreWriter {
            sink,
            header,
            records: 0,
            bytes: encoded.len() as u64,
            scratch,
        })
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    pub fn write_record(&mut self, word_id: u32, vector: &[f32]) -> Result<()> {
        check_record(&self.header, self.records, word_id, vector)?;
        self.scratch.clear();
        self.scratch.extend_from_slice(&word_id.to_le_bytes());
        for v in vector {
            self.scratch.extend_from_slice(&v.to_le_bytes());
        }
        self.sink.write_all(&self.scratch)?;
        self.records += 1;
        self.bytes += self.scratch.len() as u64;
        Ok(())
    }

    pub fn records_written(&self) -> u64 {
        self.records
    }

    /// Flushes the sink and returns the total number of bytes written.
    pub fn finish(mut self) -> Result<u64> {
        self.sink.flush()?;
        Ok(self.bytes)
    }
}

/// Writes a complete store and returns its size in bytes.
pub fn write_store<W, I>(header: &StoreHeader, records: I, sink: W) -> Result<u64>
where
    W: Write,
    I: IntoIterator<Item = EmbeddingRecord>,
{
    let mut writer = StoreWriter::new(header.clone(), sink)?;
    for record in records {
        writer.write_record(record.word_id, &record.vector)?;
    }
    writer.finish()
}

/// Streaming reader. Holds one record's worth of scratch space.
pub struct StoreReader<R: Read> {
    source: R,
    header: StoreHeader,
    offset: u64,
    raw: Vec<u8>,
    done: bool,
}

fn read_exact_at<R: Read>(source: &mut R, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(StoreError::Corrupt {
                    offset: *offset + filled as u64,
                    reason: format!("unexpected end of data in {what}"),
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    *offset += buf.len() as u64;
    Ok(())
}

impl<R: Read> StoreReader<R> {
    pub fn new(mut source: R) -> Result<Self> {
        let mut offset = 0u64;
        let mut fixed = [0u8; 15];
        let mut magic = [0u8; 4];
        read_exact_at(&mut source, &mut magic, &mut offset, "magic").map_err(|e| match e {
            StoreError::Corrupt { .. } => StoreError::Format("missing LEXE magic".into()),
            other => other,
        })?;
        if &magic != MAGIC {
            return Err(StoreError::Format(format!("bad magic {magic:?}, expected \"LEXE\"")));
        }
        fixed[..4].copy_from_slice(&magic);
        read_exact_at(&mut source, &mut fixed[4..], &mut offset, "header")?;
        let version = u16::from_le_bytes([fixed[4], fixed[5]]);
        if version != FORMAT_VERSION {
            return Err(StoreError::Format(format!(
                "unsupported version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let kind = StoreKind::from_byte(fixed[6])
            .ok_or_else(|| StoreError::Format(format!("unknown store kind {}", fixed[6])))?;
        let dim = u32::from_le_bytes(fixed[7..11].try_into().unwrap());
        let vocab_size = u32::from_le_bytes(fixed[11..15].try_into().unwrap());

        let mut vocab = Vec::new();
        for _ in 0..vocab_size {
            let mut len = [0u8; 4];
            read_exact_at(&mut source, &mut len, &mut offset, "vocab entry length")?;
            let len = u32::from_le_bytes(len) as usize;
            let start = offset;
            let mut bytes = vec![0u8; len];
            read_exact_at(&mut source, &mut bytes, &mut offset, "vocab entry")?;
            let word = String::from_utf8(bytes).map_err(|_| StoreError::Corrupt {
                offset: start,
                reason: "vocab entry is not valid UTF-8".into(),
            })?;
            let mut count = [0u8; 8];
            read_exact_at(&mut source, &mut count, &mut offset, "vocab count")?;
            vocab.push(VocabEntry {
                word,
                count: u64::from_le_bytes(count),
            });
        }
        let header = StoreHeader {
            version,
            kind,
            dim,
            vocab,
        };
        header.validate()?;
        let raw = vec![0u8; 4 + 4 * dim as usize];
        Ok(StoreReader {
            source,
            header,
            offset,
            raw,
            done: false,
        })
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    /// Byte offset of the next unread record.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Reads the next record into `vector` without allocating. Returns the
    /// word id, or `None` at a clean end of stream.
    pub fn read_into(&mut self, vector: &mut [f32]) -> Result<Option<u32>> {
        if self.done {
            return Ok(None);
        }
        debug_assert_eq!(vector.len(), self.header.dim as usize);
        let record_start = self.offset;
        let mut filled = 0;
        while filled < self.raw.len() {
            match self.source.read(&mut self.raw[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        if filled == 0 {
            self.done = true;
            return Ok(None);
        }
        if filled < self.raw.len() {
            self.done = true;
            return Err(StoreError::Corrupt {
                offset: record_start + filled as u64,
                reason: format!(
                    "truncated record starting at byte {record_start} ({filled} of {} bytes)",
                    self.raw.len()
                ),
            });
        }
        self.offset += filled as u64;
        let word_id = u32::from_le_bytes(self.raw[..4].try_into().unwrap());
        for (v, chunk) in vector.iter_mut().zip(self.raw[4..].chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        if word_id >= self.header.vocab_size() {
            self.done = true;
            return Err(StoreError::Corrupt {
                offset: record_start,
                reason: format!(
                    "word id {word_id} out of range for vocabulary of {}",
                    self.header.vocab_size()
                ),
            });
        }
        if let Some(c) = vector.iter().position(|v| !v.is_finite()) {
            self.done = true;
            return Err(StoreError::Corrupt {
                offset: record_start + 4 + 4 * c as u64,
                reason: format!("non-finite component {c}"),
            });
        }
        Ok(Some(word_id))
    }
}

impl<R: Read> Iterator for StoreReader<R> {
    type Item = Result<EmbeddingRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut vector = vec![0f32; self.header.dim as usize];
        match self.read_into(&mut vector) {
            Ok(Some(word_id)) => Some(Ok(EmbeddingRecord { word_id, vector })),
            Ok(None) => None,
            Err(e) => Some(Err(e)),
        }
    }
}

/// Opens a store for lazy reading.
pub fn read_store<R: Read>(source: R) -> Result<StoreReader<R>> {
    StoreReader::new(source)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeCount {
    pub word: String,
    pub records: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub kind: StoreKind,
    pub dim: u32,
    pub vocab_size: u32,
    pub record_count: u64,
    pub per_type: Vec<TypeCount>,
    pub min_component: Option<f32>,
    pub max_component: Option<f32>,
    pub min_contexts: u64,
    /// Types with at least one but fewer than `min_contexts` records.
    pub flagged: Vec<String>,
    /// Vocabulary entries with no records at all.
    pub unobserved: Vec<String>,
}

/// Full scan of a store: record counts per type and component range.
pub fn validate_store<R: Read>(source: R, min_contexts: u64) -> Result<ValidationReport> {
    let mut reader = read_store(source)?;
    let header = reader.header().clone();
    let mut counts = vec![0u64; header.vocab.len()];
    let mut vector = vec![0f32; header.dim as usize];
    let mut min: Option<f32> = None;
    let mut max: Option<f32> = None;
    let mut total = 0u64;
    while let Some(id) = reader.read_into(&mut vector)? {
        counts[id as usize] += 1;
        total += 1;
        for &v in &vector {
            min = Some(min.map_or(v, |m| m.min(v)));
            max = Some(max.map_or(v, |m| m.max(v)));
        }
    }
    let per_type: Vec<TypeCount> = header
        .vocab
        .iter()
        .zip(&counts)
        .map(|(e, &records)| TypeCount {
            word: e.word.clone(),
            records,
        })
        .collect();
    let flagged = per_type
        .iter()
        .filter(|t| t.records > 0 && t.records < min_contexts)
        .map(|t| t.word.clone())
        .collect();
    let unobserved = per_type
        .iter()
        .filter(|t| t.records == 0)
        .map(|t| t.word.clone())
        .collect();
    Ok(ValidationReport {
        kind: header.kind,
        dim: header.dim,
        vocab_size: header.vocab_size(),
        record_count: total,
        per_type,
        min_component: min,
        max_component: max,
        min_contexts,
        flagged,
        unobserved,
    })
}

impl ValidationReport {
    pub fn count_of(&self, word: &str) -> Option<u64> {
        self.per_type.iter().find(|t| t.word == word).map(|t| t.records)
    }

    pub fn counts(&self) -> BTreeMap<&str, u64> {
        self.per_type.iter().map(|t| (t.word.as_str(), t.records)).collect()
    }
}
