//! The six subcommands: `genfix`, `classify`, `eval`, `losses`, `simstats`
//! and `hierarchy`.

pub mod classify;
pub mod eval;
pub mod genfix;
pub mod hierarchy;
pub mod losses;
pub mod simstats;

use crate::error::{CliError, CliResult};
use serde::Serialize;
use std::path::Path;

/// Manifest schema version.
pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let bytes = crate::json::to_canonical_file_bytes(value)?;
    std::fs::write(path, bytes)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Float formatting shared by the CSV outputs (17 significant digits, same
/// as the JSON writer).
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}
