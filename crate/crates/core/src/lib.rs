//! Per-word-type lexical ambiguity and contextual uncertainty estimators over
//! contextual embedding stores, with the statistics used to relate them.
//!
//! - [`embedstore`]: binary record format shared by all stages
//! - [`ambiguity`]: diagonal-Gaussian entropy bound and sense-count entropy
//! - [`probe`]: cloze probe training and surprisal scoring
//! - [`stats`]: correlations, BH adjustment, OLS, White's test, Huber fit

pub mod ambiguity;
pub mod embedstore;
pub mod probe;
pub mod stats;
