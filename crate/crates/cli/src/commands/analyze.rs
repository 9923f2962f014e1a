use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::PathBuf;

use lexamb_core::ambiguity::{wordnet_ambiguity, SenseTable};
use lexamb_core::stats::{
    bh_adjust, huber_fit, ols_standardized, pearson, significance_mark, spearman, white_test,
    CorrelationResult, HeteroTestResult, HuberFit, RegressionResult,
};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, Result};
use crate::manifest::write_manifest;
use crate::tsv::{read_rows, write_rows, AmbiguityRow, JoinedRow, SurprisalRow};

pub const MIN_JOINED: usize = 10;

/// How p-values are grouped for Benjamini-Hochberg adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BhFamily {
    /// One family per analysis table.
    PerTable,
    /// Every test in the report forms a single family.
    Joint,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeConfig {
    pub ambiguity: PathBuf,
    pub surprisal: PathBuf,
    pub senses: Option<PathBuf>,
    pub out: PathBuf,
    pub joined_out: PathBuf,
    pub alpha: f64,
    pub bh_family: BhFamily,
}

#[derive(Debug, Clone, Serialize)]
pub struct JoinSummary {
    pub ambiguity_rows: usize,
    pub surprisal_rows: usize,
    pub joined: usize,
    pub ambiguity_only: Vec<String>,
    pub surprisal_only: Vec<String>,
    pub wordnet_covered: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedCorrelation {
    pub family: &'static str,
    pub x: &'static str,
    pub y: &'static str,
    #[serde(flatten)]
    pub result: CorrelationResult,
    pub rejected: bool,
    pub mark: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedRegression {
    pub family: &'static str,
    pub response: &'static str,
    pub terms: Vec<&'static str>,
    #[serde(flatten)]
    pub result: RegressionResult,
    /// `None` for the intercept, which is not part of any test family.
    pub p_adjusted: Vec<Option<f64>>,
    pub rejected: Vec<bool>,
    pub marks: Vec<&'static str>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedWhite {
    pub family: &'static str,
    pub response: &'static str,
    pub predictor: &'static str,
    #[serde(flatten)]
    pub result: HeteroTestResult,
    pub rejected: bool,
    pub mark: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedHuber {
    pub measure: &'static str,
    pub x: &'static str,
    pub y: &'static str,
    pub n: usize,
    #[serde(flatten)]
    pub fit: HuberFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub alpha: f64,
    pub bh_family: BhFamily,
    pub join: JoinSummary,
    pub correlations: Vec<NamedCorrelation>,
    pub regression: Option<NamedRegression>,
    pub heteroscedasticity: Vec<NamedWhite>,
    pub robust_fits: Vec<NamedHuber>,
}

const FAMILY_UNCERTAINTY: &str = "ambiguity_vs_uncertainty";
const FAMILY_VALIDATION: &str = "wordnet_vs_continuous";
const FAMILY_REGRESSION: &str = "ambiguity_regression";
const FAMILY_WHITE: &str = "heteroscedasticity";

/// Inner-joins the tables on word, sorted by word so results do not depend on input row order.
pub fn join_tables(
    ambiguity: &[AmbiguityRow],
    surprisal: &[SurprisalRow],
    senses: Option<&SenseTable>,
) -> Result<(Vec<JoinedRow>, JoinSummary)> {
    let mut amb: BTreeMap<&str, &AmbiguityRow> = BTreeMap::new();
    for r in ambiguity {
        if amb.insert(&r.word, r).is_some() {
            return Err(CliError::Data(format!("duplicate word {:?} in ambiguity table", r.word)));
        }
    }
    let mut sur: BTreeMap<&str, &SurprisalRow> = BTreeMap::new();
    for r in surprisal {
        if sur.insert(&r.word, r).is_some() {
            return Err(CliError::Data(format!("duplicate word {:?} in surprisal table", r.word)));
        }
    }
    let amb_words: BTreeSet<&str> = amb.keys().copied().collect();
    let sur_words: BTreeSet<&str> = sur.keys().copied().collect();
    let joined: Vec<JoinedRow> = amb_words
        .intersection(&sur_words)
        .map(|w| {
            let a = amb[w];
            let s = sur[w];
            let wordnet_bits = match senses {
                Some(t) => wordnet_ambiguity(t, w),
                None => a.wordnet_bits,
            };
            JoinedRow {
                word: w.to_string(),
                n_contexts: a.n_contexts,
                ambiguity_bits: a.entropy_bits,
                wordnet_bits,
                ctx_surprisal_bits: s.ctx_surprisal_bits,
                unigram_surprisal_bits: s.unigram_surprisal_bits,
                informativeness_bits: s.informativeness_bits,
                corpus_count: s.corpus_count,
            }
        })
        .collect();
    let summary = JoinSummary {
        ambiguity_rows: ambiguity.len(),
        surprisal_rows: surprisal.len(),
        joined: joined.len(),
        ambiguity_only: amb_words.difference(&sur_words).map(|w| w.to_string()).collect(),
        surprisal_only: sur_words.difference(&amb_words).map(|w| w.to_string()).collect(),
        wordnet_covered: joined.iter().filter(|r| r.wordnet_bits.is_some()).count(),
    };
    Ok((joined, summary))
}

/// Runs every analysis over an already-joined table.
pub fn analyze_joined(rows: &[JoinedRow], join: JoinSummary, alpha: f64, bh_family: BhFamily) -> Result<AnalysisReport> {
    if rows.len() < MIN_JOINED {
        return Err(CliError::Data(format!(
            "join produced {} rows; at least {MIN_JOINED} are required",
            rows.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    let amb: Vec<f64> = rows.iter().map(|r| r.ambiguity_bits).collect();
    let ctx: Vec<f64> = rows.iter().map(|r| r.ctx_surprisal_bits).collect();

    let covered: Vec<&JoinedRow> = rows.iter().filter(|r| r.wordnet_bits.is_some()).collect();
    let use_wordnet = covered.len() >= MIN_JOINED;
    if !covered.is_empty() && !use_wordnet {
        warn!("only {} joined types have sense counts; skipping sense-based analyses", covered.len());
    }
    let wn: Vec<f64> = covered.iter().map(|r| r.wordnet_bits.unwrap()).collect();
    let wn_amb: Vec<f64> = covered.iter().map(|r| r.ambiguity_bits).collect();
    let wn_ctx: Vec<f64> = covered.iter().map(|r| r.ctx_surprisal_bits).collect();
    let wn_freq: Vec<f64> = covered.iter().map(|r| (r.corpus_count as f64).log2()).collect();

    let corr = |family, x, y, r: CorrelationResult| NamedCorrelation {
        family,
        x,
        y,
        result: r,
        rejected: false,
        mark: "",
    };
    let mut correlations = vec![
        corr(FAMILY_UNCERTAINTY, "ambiguity_bits", "ctx_surprisal_bits", pearson(&amb, &ctx)?),
        corr(FAMILY_UNCERTAINTY, "ambiguity_bits", "ctx_surprisal_bits", spearman(&amb, &ctx)?),
    ];
    let white = |family, predictor, r: HeteroTestResult| NamedWhite {
        family,
        response: "ctx_surprisal_bits",
        predictor,
        result: r,
        rejected: false,
        mark: "",
    };
    let mut heteroscedasticity = vec![white(FAMILY_WHITE, "ambiguity_bits", white_test(&ctx, &[&amb])?)];
    let mut robust_fits = vec![NamedHuber {
        measure: "continuous",
        x: "ambiguity_bits",
        y: "ctx_surprisal_bits",
        n: amb.len(),
        fit: huber_fit(&amb, &ctx)?,
    }];
    let mut regression = None;

    if use_wordnet {
        correlations.push(corr(FAMILY_UNCERTAINTY, "wordnet_bits", "ctx_surprisal_bits", pearson(&wn, &wn_ctx)?));
        correlations.push(corr(FAMILY_UNCERTAINTY, "wordnet_bits", "ctx_surprisal_bits", spearman(&wn, &wn_ctx)?));
        correlations.push(corr(FAMILY_VALIDATION, "wordnet_bits", "ambiguity_bits", pearson(&wn, &wn_amb)?));
        correlations.push(corr(FAMILY_VALIDATION, "wordnet_bits", "ambiguity_bits", spearman(&wn, &wn_amb)?));
        heteroscedasticity.push(white(FAMILY_WHITE, "wordnet_bits", white_test(&wn_ctx, &[&wn])?));
        robust_fits.push(NamedHuber {
            measure: "wordnet",
            x: "wordnet_bits",
            y: "ctx_surprisal_bits",
            n: wn.len(),
            fit: huber_fit(&wn, &wn_ctx)?,
        });
        let result = ols_standardized(&wn_amb, &[&wn, &wn_freq])?;
        let k = result.coefficients.len();
        regression = Some(NamedRegression {
            family: FAMILY_REGRESSION,
            response: "ambiguity_bits",
            terms: vec!["intercept", "log2_senses", "log2_frequency"],
            result,
            p_adjusted: vec![None; k],
            rejected: vec![false; k],
            marks: vec![""; k],
        });
    }

    let mut report = AnalysisReport {
        alpha,
        bh_family,
        join,
        correlations,
        regression,
        heteroscedasticity,
        robust_fits,
    };
    apply_bh(&mut report)?;
    Ok(report)
}

enum Slot {
    Corr(usize),
    Coef(usize),
    White(usize),
}

fn apply_bh(report: &mut AnalysisReport) -> Result<()> {
    let mut families: BTreeMap<&'static str, Vec<(Slot, f64)>> = BTreeMap::new();
    let key = |f: &'static str| if report.bh_family == BhFamily::Joint { "all" } else { f };
    for (i, c) in report.correlations.iter().enumerate() {
        families.entry(key(c.family)).or_default().push((Slot::Corr(i), c.result.p_value));
    }
    if let Some(r) = &report.regression {
        for j in 1..r.result.p_values.len() {
            families.entry(key(r.family)).or_default().push((Slot::Coef(j), r.result.p_values[j]));
        }
    }
    for (i, w) in report.heteroscedasticity.iter().enumerate() {
        families.entry(key(w.family)).or_default().push((Slot::White(i), w.result.p_value));
    }
    for (name, tests) in families {
        let p: Vec<f64> = tests.iter().map(|t| t.1).collect();
        let bh = bh_adjust(&p, report.alpha)?;
        info!("BH family {name}: {} tests, {} rejected", p.len(), bh.rejected.iter().filter(|r| **r).count());
        for ((slot, _), (adj, rej)) in tests.iter().zip(bh.adjusted.iter().zip(&bh.rejected)) {
            match *slot {
                Slot::Corr(i) => {
                    let c = &mut report.correlations[i];
                    c.result.p_adjusted = Some(*adj);
                    c.rejected = *rej;
                    c.mark = significance_mark(*adj);
                }
                Slot::Coef(j) => {
                    let r = report.regression.as_mut().expect("regression present");
                    r.p_adjusted[j] = Some(*adj);
                    r.rejected[j] = *rej;
                    r.marks[j] = significance_mark(*adj);
                }
                Slot::White(i) => {
                    let w = &mut report.heteroscedasticity[i];
                    w.result.p_adjusted = Some(*adj);
                    w.rejected = *rej;
                    w.mark = significance_mark(*adj);
                }
            }
        }
    }
    Ok(())
}

pub fn run(config: &AnalyzeConfig) -> Result<AnalysisReport> {
    let ambiguity: Vec<AmbiguityRow> = read_rows(&config.ambiguity)?;
    let surprisal: Vec<SurprisalRow> = read_rows(&config.surprisal)?;
    let senses = config
        .senses
        .as_ref()
        .map(|p| {
            let f = File::open(p).map_err(|e| CliError::io(p, e))?;
            Ok::<_, CliError>(SenseTable::from_tsv(f)?)
        })
        .transpose()?;
    let (joined, summary) = join_tables(&ambiguity, &surprisal, senses.as_ref())?;
    info!(
        "joined {} of {} ambiguity rows and {} surprisal rows ({} ambiguity-only, {} surprisal-only)",
        summary.joined,
        summary.ambiguity_rows,
        summary.surprisal_rows,
        summary.ambiguity_only.len(),
        summary.surprisal_only.len()
    );
    let report = analyze_joined(&joined, summary, config.alpha, config.bh_family)?;

    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&config.out, text).map_err(|e| CliError::io(&config.out, e))?;
    write_rows(&config.joined_out, &joined)?;

    let mut inputs = vec![config.ambiguity.as_path(), config.surprisal.as_path()];
    if let Some(p) = &config.senses {
        inputs.push(p.as_path());
    }
    write_manifest(
        "analyze",
        config,
        &inputs,
        &[config.out.as_path(), config.joined_out.as_path()],
        json!({
            "joined": report.join.joined,
            "ambiguity_only": report.join.ambiguity_only.len(),
            "surprisal_only": report.join.surprisal_only.len(),
            "wordnet_covered": report.join.wordnet_covered,
        }),
    )?;
    Ok(report)
}
