pub mod analyze;
pub mod estimate;
pub mod plot;
pub mod probe;
pub mod validate;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use lexamb_core::embedstore::StoreReader;

use crate::error::{CliError, Result};

pub(crate) fn open_store(path: &Path) -> Result<StoreReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(StoreReader::new(BufReader::new(file))?)
}
