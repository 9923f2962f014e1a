use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lexamb_core::ambiguity::{DEFAULT_MIN_CONTEXTS, DEFAULT_VARIANCE_FLOOR};
use lexamb_core::probe::{ProbeHyper, DEFAULT_BATCH_SIZE, DEFAULT_HIDDEN_SIZE, DEFAULT_LEARNING_RATE};

use crate::commands::analyze::{self, AnalyzeConfig, BhFamily};
use crate::commands::estimate::{self, EstimateConfig};
use crate::commands::plot::{self, Measure, PlotConfig};
use crate::commands::probe::{self, ProbeConfig};
use crate::commands::validate::{self, ValidateConfig};
use crate::error::{CliError, Result};
use crate::synth::{write_synthetic, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "lexamb", version, about = "Lexical ambiguity vs contextual uncertainty toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-type Gaussian entropy bound from a TokenStates store.
    Estimate(EstimateArgs),
    /// Train the cloze probe and score per-type contextual surprisal.
    Probe(ProbeArgs),
    /// Correlations, regression, heteroscedasticity test and robust fits.
    Analyze(AnalyzeArgs),
    /// SVG scatter of ambiguity against contextual uncertainty.
    Plot(PlotArgs),
    /// Scan a store and report per-type record counts.
    Validate(ValidateArgs),
    /// Write synthetic stub stores for demos and smoke tests.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// TokenStates store.
    #[arg(long)]
    pub store: PathBuf,
    /// Output TSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Two-column word/sense-count TSV; adds a wordnet_bits column.
    #[arg(long)]
    pub senses: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MIN_CONTEXTS)]
    pub min_contexts: u64,
    #[arg(long, default_value_t = DEFAULT_VARIANCE_FLOOR)]
    pub variance_floor: f64,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// MaskedStates training store.
    #[arg(long)]
    pub train: PathBuf,
    /// MaskedStates analysis store to score.
    #[arg(long, required_unless_present = "score_on_train")]
    pub score: Option<PathBuf>,
    /// Score the training store itself.
    #[arg(long, conflicts_with = "score")]
    pub score_on_train: bool,
    /// Where to write the trained parameters.
    #[arg(long)]
    pub params_out: PathBuf,
    /// Output surprisal TSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_CONTEXTS)]
    pub min_contexts: u64,
    #[arg(long, default_value_t = DEFAULT_HIDDEN_SIZE)]
    pub hidden_size: usize,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Visit training records in store order.
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Ambiguity TSV from `estimate`.
    #[arg(long)]
    pub ambiguity: PathBuf,
    /// Surprisal TSV from `probe`.
    #[arg(long)]
    pub surprisal: PathBuf,
    /// Sense-count TSV; overrides any wordnet_bits column in the ambiguity table.
    #[arg(long)]
    pub senses: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Joined per-type table [default: <out>.joined.tsv].
    #[arg(long)]
    pub joined_out: Option<PathBuf>,
    /// FDR level for Benjamini-Hochberg rejections.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = BhFamily::PerTable)]
    pub bh_family: BhFamily,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// JSON report from `analyze`.
    #[arg(long)]
    pub report: PathBuf,
    /// Joined TSV from `analyze`.
    #[arg(long)]
    pub joined: PathBuf,
    /// Output SVG.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Measure::Continuous)]
    pub measure: Measure,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_CONTEXTS)]
    pub min_contexts: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_tokens: PathBuf,
    #[arg(long)]
    pub out_masked: PathBuf,
    #[arg(long)]
    pub out_masked_train: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub vocab: usize,
    #[arg(long, default_value_t = 20_000)]
    pub records: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn default_joined(out: &std::path::Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".joined.tsv");
    out.with_file_name(name)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(a) => {
            let summary = estimate::run(&EstimateConfig {
                store: a.store,
                out: a.out,
                senses: a.senses,
                min_contexts: a.min_contexts,
                variance_floor: a.variance_floor,
            })?;
            eprintln!(
                "estimate: {} types scored, {} omitted, {} warnings",
                summary.rows, summary.omitted, summary.warnings
            );
        }
        Command::Probe(a) => {
            let summary = probe::run(&ProbeConfig {
                train: a.train,
                score: a.score,
                score_on_train: a.score_on_train,
                params_out: a.params_out,
                out: a.out,
                min_contexts: a.min_contexts,
                hyper: ProbeHyper {
                    hidden_size: a.hidden_size,
                    epochs: a.epochs,
                    batch_size: a.batch_size,
                    learning_rate: a.learning_rate,
                    seed: a.seed,
                    shuffle: !a.no_shuffle,
                    ..ProbeHyper::default()
                },
            })?;
            eprintln!(
                "probe: {} types scored, mean contextual surprisal {:.4} bits, {} flagged",
                summary.rows, summary.mean_ctx_surprisal_bits, summary.flagged
            );
        }
        Command::Analyze(a) => {
            let joined_out = a.joined_out.unwrap_or_else(|| default_joined(&a.out));
            let report = analyze::run(&AnalyzeConfig {
                ambiguity: a.ambiguity,
                surprisal: a.surprisal,
                senses: a.senses,
                out: a.out,
                joined_out,
                alpha: a.alpha,
                bh_family: a.bh_family,
            })?;
            for c in &report.correlations {
                eprintln!(
                    "{:?} {} vs {}: rho={:.4} p_adj={:.3e}{}",
                    c.result.method,
                    c.x,
                    c.y,
                    c.result.rho,
                    c.result.p_adjusted.unwrap_or(f64::NAN),
                    c.mark
                );
            }
        }
        Command::Plot(a) => {
            let n = plot::run(&PlotConfig {
                report: a.report,
                joined: a.joined,
                out: a.out,
                measure: a.measure,
            })?;
            eprintln!("plot: {n} points");
        }
        Command::Validate(a) => {
            if a.min_contexts < 2 {
                return Err(CliError::Usage("--min-contexts must be at least 2".into()));
            }
            let report = validate::run(&ValidateConfig {
                store: a.store,
                min_contexts: a.min_contexts,
                out: a.out,
            })?;
            eprintln!(
                "validate: {} records, {} types below {} contexts",
                report.record_count,
                report.flagged.len(),
                report.min_contexts
            );
        }
        Command::Synth(a) => {
            write_synthetic(
                &SynthConfig {
                    vocab: a.vocab,
                    records: a.records,
                    dim: a.dim,
                    seed: a.seed,
                },
                &a.out_tokens,
                &a.out_masked,
                &a.out_masked_train,
            )?;
        }
    }
    Ok(())
}
