//! Cloze probe `q(w | c) = softmax(W2 relu(W1 h_c + b1) + b2)` over masked
//! context states, trained with Adam on cross-entropy, plus the per-type
//! surprisal and informativeness scores derived from it.

use std::io::{Read, Write};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embedstore::{StoreError, StoreHeader, StoreKind, StoreReader};

pub const DEFAULT_HIDDEN_SIZE: usize = 200;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
/// Informativeness below this many bits means the probe did worse than the
/// unigram distribution on that type.
pub const INFORMATIVENESS_FLAG_BITS: f64 = -0.5;

const PARAMS_MAGIC: &[u8; 4] = b"LEXP";
const PARAMS_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("expected a {expected} store, found {found}")]
    WrongKind { expected: StoreKind, found: StoreKind },
    #[error("training store is empty")]
    EmptyStore,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (step {step})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        step: u64,
        loss: f64,
    },
    #[error("probe vocabulary hash does not match the store's vocabulary")]
    VocabMismatch,
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ProbeError> = std::result::Result<T, E>;

/// Probe weights, row-major. Also used as the gradient and Adam-moment
/// container, since all three share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    pub dim: usize,
    pub hidden: usize,
    pub vocab: usize,
    /// `hidden x dim`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `vocab x hidden`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Hash of the vocabulary the output layer indexes.
    pub vocab_hash: [u8; 32],
}

impl ProbeParams {
    pub fn zeros(dim: usize, hidden: usize, vocab: usize) -> Self {
        ProbeParams {
            dim,
            hidden,
            vocab,
            w1: vec![0.0; hidden * dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; vocab * hidden],
            b2: vec![0.0; vocab],
            vocab_hash: [0; 32],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(dim: usize, hidden: usize, vocab: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(dim, hidden, vocab);
        let a1 = (6.0 / (dim + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + vocab) as f64).sqrt();
        p.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        p.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        p
    }

    pub fn with_vocab_hash(mut self, hash: [u8; 32]) -> Self {
        self.vocab_hash = hash;
        self
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn buffers(&self) -> [&Vec<f64>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn buffers_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Rounds every parameter through `f32`, as persisted on disk.
    pub fn quantized(&self) -> Self {
        let mut p = self.clone();
        for buf in p.buffers_mut() {
            buf.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        p
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(ProbeError::Shape(format!("input has {len} components, probe expects {}", self.dim)));
        }
        Ok(())
    }

    /// Natural-log probabilities over the vocabulary. `hidden_pre` and
    /// `out` are scratch buffers of length `hidden` and `vocab`.
    fn forward_ln_into(&self, h: &[f64], hidden_pre: &mut [f64], out: &mut [f64]) {
        for (j, z) in hidden_pre.iter_mut().enumerate() {
            let row = &self.w1[j * self.dim..(j + 1) * self.dim];
            *z = self.b1[j] + row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>();
        }
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
            *o = self.b2[k]
                + row
                    .iter()
                    .zip(hidden_pre.iter())
                    .map(|(w, &z)| if z > 0.0 { w * z } else { 0.0 })
                    .sum::<f64>();
        }
        log_softmax_in_place(out);
    }

    /// Log-probabilities in bits.
    pub fn forward_log2<T: Copy + Into<f64>>(&self, h: &[T]) -> Result<Vec<f64>> {
        self.check_input(h.len())?;
        let h: Vec<f64> = h.iter().map(|&v| v.into()).collect();
        if h.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::Shape("input contains non-finite components".into()));
        }
        let mut hidden = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.vocab];
        self.forward_ln_into(&h, &mut hidden, &mut out);
        out.iter_mut().for_each(|v| *v /= std::f64::consts::LN_2);
        Ok(out)
    }
}

fn log_softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter_mut().for_each(|l| *l -= lse);
}

/// Log-probabilities (bits) the probe assigns to each vocabulary entry.
pub fn probe_forward<T: Copy + Into<f64>>(params: &ProbeParams, h: &[T]) -> Result<Vec<f64>> {
    params.forward_log2(h)
}

/// Scratch space for one forward/backward pass.
struct Workspace {
    h: Vec<f64>,
    pre: Vec<f64>,
    logp: Vec<f64>,
    dhidden: Vec<f64>,
}

impl Workspace {
    fn new(p: &ProbeParams) -> Self {
        Workspace {
            h: vec![0.0; p.dim],
            pre: vec![0.0; p.hidden],
            logp: vec![0.0; p.vocab],
            dhidden: vec![0.0; p.hidden],
        }
    }
}

/// Mean cross-entropy (nats) over `batch` and its gradient. `batch` yields
/// `(target, input)` pairs.
pub fn loss_and_grad<'a, T, I>(params: &ProbeParams, batch: I) -> Result<(f64, ProbeParams)>
where
    T: Copy + Into<f64> + 'a,
    I: IntoIterator<Item = (u32, &'a [T])>,
{
    let mut grad = ProbeParams::zeros(params.dim, params.hidden, params.vocab);
    let mut ws = Workspace::new(params);
    let mut total = 0.0;
    let mut n = 0usize;
    for (target, x) in batch {
        params.check_input(x.len())?;
        if target as usize >= params.vocab {
            return Err(ProbeError::Shape(format!("target {target} outside vocabulary of {}", params.vocab)));
        }
        ws.h.iter_mut().zip(x).for_each(|(d, &s)| *d = s.into());
        total += accumulate_example(params, &mut grad, &mut ws, target as usize);
        n += 1;
    }
    if n == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / n as f64;
    for buf in grad.buffers_mut() {
        buf.iter_mut().for_each(|g| *g *= scale);
    }
    Ok((total * scale, grad))
}

/// Adds one example's (unnormalized) gradient into `grad`, returns its loss.
fn accumulate_example(p: &ProbeParams, grad: &mut ProbeParams, ws: &mut Workspace, target: usize) -> f64 {
    p.forward_ln_into(&ws.h, &mut ws.pre, &mut ws.logp);
    let loss = -ws.logp[target];
    ws.dhidden.iter_mut().for_each(|d| *d = 0.0);
    for k in 0..p.vocab {
        let dlogit = ws.logp[k].exp() - if k == target { 1.0 } else { 0.0 };
        grad.b2[k] += dlogit;
        let row = k * p.hidden;
        let w2 = &p.w2[row..row + p.hidden];
        let g2 = &mut grad.w2[row..row + p.hidden];
        for j in 0..p.hidden {
            let z = ws.pre[j];
            if z > 0.0 {
                g2[j] += dlogit * z;
                ws.dhidden[j] += dlogit * w2[j];
            }
        }
    }
    for j in 0..p.hidden {
        if ws.pre[j] <= 0.0 {
            continue;
        }
        let d = ws.dhidden[j];
        grad.b1[j] += d;
        let g1 = &mut grad.w1[j * p.dim..(j + 1) * p.dim];
        for (g, x) in g1.iter_mut().zip(&ws.h) {
            *g += d * x;
        }
    }
    loss
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: ProbeParams,
    v: ProbeParams,
}

impl Adam {
    pub fn new(params: &ProbeParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: ProbeParams::zeros(params.dim, params.hidden, params.vocab),
            v: ProbeParams::zeros(params.dim, params.hidden, params.vocab),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut ProbeParams, grad: &ProbeParams) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .buffers_mut()
            .into_iter()
            .zip(grad.buffers())
            .zip(self.m.buffers_mut())
            .zip(self.v.buffers_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeHyper {
    pub hidden_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Visit records in a seeded random order each epoch instead of store order.
    pub shuffle: bool,
}

impl Default for ProbeHyper {
    fn default() -> Self {
        ProbeHyper {
            hidden_size: DEFAULT_HIDDEN_SIZE,
            epochs: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl ProbeHyper {
    fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(ProbeError::Hyper("hidden size, epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ProbeError::Hyper(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Masked-state records held in memory for multi-pass training.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSet {
    pub dim: usize,
    pub targets: Vec<u32>,
    data: Vec<f32>,
}

impl MaskedSet {
    pub fn new(dim: usize) -> Self {
        MaskedSet {
            dim,
            targets: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, target: u32, x: &[f32]) {
        assert_eq!(x.len(), self.dim, "record dimension");
        self.targets.push(target);
        self.data.extend_from_slice(x);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn get(&self, i: usize) -> (u32, &[f32]) {
        (self.targets[i], &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f32])> + '_ {
        self.targets.iter().copied().zip(self.data.chunks_exact(self.dim))
    }

    pub fn from_reader<R: Read>(reader: &mut StoreReader<R>) -> Result<Self> {
        check_masked(reader.header())?;
        let dim = reader.header().dim as usize;
        let mut set = MaskedSet::new(dim);
        let mut v = vec![0f32; dim];
        while let Some(id) = reader.read_into(&mut v)? {
            set.push(id, &v);
        }
        Ok(set)
    }
}

fn check_masked(header: &StoreHeader) -> Result<()> {
    if header.kind != StoreKind::MaskedStates {
        return Err(ProbeError::WrongKind {
            expected: StoreKind::MaskedStates,
            found: header.kind,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainedProbe {
    pub params: ProbeParams,
    /// Mean training cross-entropy per epoch, in bits.
    pub epoch_loss_bits: Vec<f64>,
    pub steps: u64,
}

/// Trains a probe on a MaskedStates set. Single-threaded and bit-reproducible
/// for a fixed seed.
pub fn train_probe(header: &StoreHeader, data: &MaskedSet, hyper: &ProbeHyper) -> Result<TrainedProbe> {
    check_masked(header)?;
    hyper.validate()?;
    if data.is_empty() {
        return Err(ProbeError::EmptyStore);
    }
    if data.dim != header.dim as usize {
        return Err(ProbeError::Shape(format!("records have dim {}, header {}", data.dim, header.dim)));
    }
    let vocab = header.vocab.len();
    if let Some(&bad) = data.targets.iter().find(|&&t| t as usize >= vocab) {
        return Err(ProbeError::Shape(format!("target {bad} outside vocabulary of {vocab}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut params = ProbeParams::init(data.dim, hyper.hidden_size, vocab, &mut rng).with_vocab_hash(header.vocab_hash());
    let mut adam = Adam::new(&params, hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.eps);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_loss_bits = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        if hyper.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(hyper.batch_size).enumerate() {
            let (loss, grad) = loss_and_grad(&params, idx.iter().map(|&i| data.get(i)))?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(ProbeError::NonFiniteLoss {
                    epoch,
                    batch,
                    step: adam.steps(),
                    loss,
                });
            }
            adam.update(&mut params, &grad);
            loss_sum += loss * idx.len() as f64;
        }
        let mean_bits = loss_sum / data.len() as f64 / std::f64::consts::LN_2;
        info!("epoch {}: mean training cross-entropy {mean_bits:.4} bits", epoch + 1);
        epoch_loss_bits.push(mean_bits);
    }
    debug!("trained probe with {} parameters in {} steps", params.num_params(), adam.steps());
    Ok(TrainedProbe {
        params,
        epoch_loss_bits,
        steps: adam.steps(),
    })
}

/// Mean contextual surprisal of one word type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextualScore {
    pub word_id: u32,
    pub n_contexts: u64,
    pub ctx_surprisal_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalTable {
    pub scores: Vec<ContextualScore>,
    /// `(word_id, n_contexts)` for observed types below the context threshold.
    pub omitted: Vec<(u32, u64)>,
}

/// Per-type running sum of `-log2 q(w | c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalSums {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl SurprisalSums {
    pub fn new(vocab: usize) -> Self {
        SurprisalSums {
            sums: vec![0.0; vocab],
            counts: vec![0; vocab],
        }
    }

    pub fn add(&mut self, word_id: u32, bits: f64) {
        self.sums[word_id as usize] += bits;
        self.counts[word_id as usize] += 1;
    }

    pub fn merge(&mut self, other: &SurprisalSums) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn finish(&self, min_contexts: u64) -> SurprisalTable {
        let mut scores = Vec::new();
        let mut omitted = Vec::new();
        for (id, (&sum, &n)) in self.sums.iter().zip(&self.counts).enumerate() {
            if n == 0 {
                continue;
            }
            if n < min_contexts {
                omitted.push((id as u32, n));
                continue;
            }
            scores.push(ContextualScore {
                word_id: id as u32,
                n_contexts: n,
                ctx_surprisal_bits: sum / n as f64,
            });
        }
        SurprisalTable { scores, omitted }
    }
}

/// Mean per-type cross-entropy of the probe over a MaskedStates store.
pub fn score_surprisal<R: Read>(params: &ProbeParams, reader: &mut StoreReader<R>, min_contexts: u64) -> Result<SurprisalTable> {
    let header = reader.header().clone();
    check_masked(&header)?;
    check_compatible(params, &header)?;
    let mut sums = SurprisalSums::new(params.vocab);
    let mut ws = Workspace::new(params);
    let mut v = vec![0f32; params.dim];
    while let Some(id) = reader.read_into(&mut v)? {
        ws.h.iter_mut().zip(&v).for_each(|(d, &s)| *d = s.into());
        params.forward_ln_into(&ws.h, &mut ws.pre, &mut ws.logp);
        sums.add(id, -ws.logp[id as usize] / std::f64::consts::LN_2);
    }
    Ok(sums.finish(min_contexts))
}

pub fn check_compatible(params: &ProbeParams, header: &StoreHeader) -> Result<()> {
    if params.vocab_hash != header.vocab_hash() {
        return Err(ProbeError::VocabMismatch);
    }
    if params.dim != header.dim as usize || params.vocab != header.vocab.len() {
        return Err(ProbeError::Shape(format!(
            "probe is {}-dim over {} types, store is {}-dim over {}",
            params.dim,
            params.vocab,
            header.dim,
            header.vocab.len()
        )));
    }
    Ok(())
}

/// `-log2 p(w)` under the maximum-likelihood unigram distribution of the header counts.
pub fn unigram_surprisal(header: &StoreHeader, word_id: u32) -> Option<f64> {
    let count = header.vocab.get(word_id as usize)?.count as f64;
    let total = header.total_count() as f64;
    Some(-(count / total).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Informativeness {
    pub bits: f64,
    pub flagged: bool,
}

pub fn informativeness(unigram_bits: f64, ctx_bits: f64) -> Informativeness {
    let bits = unigram_bits - ctx_bits;
    Informativeness {
        bits,
        flagged: bits < INFORMATIVENESS_FLAG_BITS,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeScores {
    pub word_id: u32,
    pub n_contexts: u64,
    pub ctx_surprisal_bits: f64,
    pub unigram_surprisal_bits: f64,
    pub informativeness_bits: f64,
    pub flagged: bool,
}

/// Joins contextual scores with unigram surprisal from `header`'s counts.
pub fn type_scores(header: &StoreHeader, table: &SurprisalTable) -> Vec<TypeScores> {
    table
        .scores
        .iter()
        .filter_map(|s| {
            let unigram = unigram_surprisal(header, s.word_id)?;
            let info = informativeness(unigram, s.ctx_surprisal_bits);
            Some(TypeScores {
                word_id: s.word_id,
                n_contexts: s.n_contexts,
                ctx_surprisal_bits: s.ctx_surprisal_bits,
                unigram_surprisal_bits: unigram,
                informativeness_bits: info.bits,
                flagged: info.flagged,
            })
        })
        .collect()
}

/// Writes parameters as packed little-endian `f32` behind a shape header.
pub fn save_params<W: Write>(params: &ProbeParams, mut sink: W) -> Result<u64> {
    let mut buf = Vec::with_capacity(50 + 4 * params.num_params());
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    for n in [params.dim, params.hidden, params.vocab] {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    buf.extend_from_slice(&params.vocab_hash);
    for b in params.buffers() {
        for v in b {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len() as u64)
}

pub fn load_params<R: Read>(mut source: R) -> Result<ProbeParams> {
    let mut head = [0u8; 50];
    source
        .read_exact(&mut head)
        .map_err(|_| ProbeError::Format("truncated header".into()))?;
    if &head[..4] != PARAMS_MAGIC {
        return Err(ProbeError::Format("bad magic, expected \"LEXP\"".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != PARAMS_VERSION {
        return Err(ProbeError::Format(format!("unsupported version {version}")));
    }
    let word = |i: usize| u32::from_le_bytes(head[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
    let mut params = ProbeParams::zeros(word(0), word(1), word(2));
    params.vocab_hash.copy_from_slice(&head[18..50]);
    let mut raw = [0u8; 4];
    for buf in params.buffers_mut() {
        for v in buf.iter_mut() {
            source
                .read_exact(&mut raw)
                .map_err(|_| ProbeError::Format("truncated parameter data".into()))?;
            *v = f32::from_le_bytes(raw) as f64;
        }
    }
    if source.read(&mut raw)? != 0 {
        return Err(ProbeError::Format("trailing bytes after parameters".into()));
    }
    if !params.is_finite() {
        return Err(ProbeError::Format("non-finite parameter".into()));
    }
    Ok(params)
}
