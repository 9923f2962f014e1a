#![allow(dead_code)]

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lexamb_core::embedstore::{write_store, EmbeddingRecord, StoreHeader, StoreKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn lexamb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexamb")).args(args).output().expect("spawn lexamb")
}

pub fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn write(path: &Path, kind: StoreKind, dim: u32, vocab: &[(String, u64)], records: Vec<EmbeddingRecord>) {
    let header = StoreHeader::from_pairs(kind, dim, vocab.iter().cloned()).unwrap();
    let f = BufWriter::new(File::create(path).unwrap());
    write_store(&header, records, f).unwrap();
}

pub fn words(n: usize) -> Vec<(String, u64)> {
    (0..n).map(|i| (format!("t{i:02}"), 1000)).collect()
}

/// Masked records where word `i` sits at a distinct well-separated centre,
/// or at pure noise when `separable` is false.
pub fn masked_records(vocab: usize, dim: usize, per_word: usize, separable: bool, seed: u64) -> Vec<EmbeddingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..vocab)
        .map(|_| (0..dim).map(|_| 3.0 * normal(&mut rng)).collect())
        .collect();
    let mut out = Vec::new();
    for i in 0..vocab * per_word {
        let w = i % vocab;
        let v = (0..dim)
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if separable {
                    (centers[w][j] + 0.3 * z) as f32
                } else {
                    z as f32
                }
            })
            .collect();
        out.push(EmbeddingRecord::new(w as u32, v));
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn tsv_column(path: &Path, name: &str) -> Vec<String> {
    let text = String::from_utf8(read(path)).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let idx = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split('\t').nth(idx).unwrap().to_string()).collect()
}

/// Ambiguity and surprisal tables for `n` words whose values are given
/// directly, written in the formats `estimate` and `probe` produce.
pub fn write_tables(dir: &Path, tag: &str, xs: &[f64], ys: &[f64], order: &[usize]) -> (PathBuf, PathBuf) {
    let amb = dir.join(format!("{tag}.ambiguity.tsv"));
    let sur = dir.join(format!("{tag}.surprisal.tsv"));
    let mut a = String::from("word\tn_contexts\tentropy_bits\tfloored_dims\n");
    let mut s = String::from(
        "word\tn_contexts\tctx_surprisal_bits\tunigram_surprisal_bits\tinformativeness_bits\tcorpus_count\tflagged\n",
    );
    for &i in order {
        let count = 100 + (i * 37 % 1000) as u64;
        a.push_str(&format!("w{i:05}\t{count}\t{}\t0\n", xs[i]));
        s.push_str(&format!("w{i:05}\t{count}\t{}\t10\t{}\t{count}\tfalse\n", ys[i], 10.0 - ys[i]));
    }
    std::fs::write(&amb, a).unwrap();
    std::fs::write(&sur, s).unwrap();
    (amb, sur)
}

pub fn planted(n: usize, rho: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| 50.0 + 5.0 * normal(&mut rng)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&a| {
            let z: f64 = StandardNormal.sample(&mut rng);
            5.0 + rho * (a - 50.0) / 5.0 + (1.0 - rho * rho).sqrt() * z
        })
        .collect();
    (x, y)
}

pub fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    v
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&read(path)).unwrap()
}

/// The Pearson row comparing the continuous ambiguity with contextual surprisal.
pub fn continuous_pearson(report: &serde_json::Value) -> &serde_json::Value {
    report["correlations"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["method"] == "Pearson" && c["x"] == "ambiguity_bits" && c["y"] == "ctx_surprisal_bits")
        .expect("pearson row")
}
