//! One module per subcommand. Each `run` takes its parsed arguments,
//! returns `CliResult<()>`, and prints a short human-readable summary of
//! what it wrote.

pub mod case;
pub mod evaluate;
pub mod gendata;
pub mod track;
pub mod train;

use crate::config::{CliError, CliResult};
use gridopf::grid::NetworkCase;
use std::path::{Path, PathBuf};

/// Effective output directory: the flag wins over the config.
pub fn resolve_out(flag: Option<PathBuf>, configured: &Path) -> PathBuf {
    flag.unwrap_or_else(|| configured.to_path_buf())
}

/// Effective dataset directory: the flag wins over `<out>/data`.
pub fn resolve_data(flag: Option<PathBuf>, out_dir: &Path) -> PathBuf {
    flag.unwrap_or_else(|| out_dir.join("data"))
}

/// Attaches the offending path to a load error, which otherwise surfaces
/// as a bare OS message.
pub fn with_path<T>(what: &str, path: &Path, r: gridopf::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Domain(format!("cannot load {what} {}: {e}", path.display())))
}

/// Finds the parsed case backing a dataset network by name.
pub fn case_by_name<'a>(cases: &'a [NetworkCase], name: &str) -> CliResult<&'a NetworkCase> {
    cases.iter().find(|c| c.name == name).ok_or_else(|| {
        CliError::Domain(format!(
            "dataset network {name} has no matching case in the config"
        ))
    })
}
