//! Pipeline front-end: stores go through `estimate` and `probe`, the resulting
//! score tables through `analyze`, and the joined table through `plot`.

pub mod cli;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod synth;
pub mod tsv;

pub use error::{CliError, Result};
