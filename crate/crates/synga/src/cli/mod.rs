//! Run orchestration shared by the `synga` binary: config loading,
//! atomic file output, manifests, and the subcommand implementations.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::Result;

mod commands;
mod config;
mod manifest;

pub use commands::{
    dispatch, exit_code, main, render_error, run, Cli, Command, CommonArgs, ReportRow, RunSummary,
};
pub use config::{
    build_filter, build_oracle, data_dir, load_catalog, load_config, require_file, AnalogConfig,
    CatalogPaths, DatasetConfig, FilterKind, FilterSpec, LoadedConfig, OracleKind, OracleSpec,
    RunConfig, SampleConfig, Task, DATA_DIR_ENV,
};
pub use manifest::{Manifest, Versions};

/// Writes `bytes` to `path` through a sibling temp file and an atomic
/// rename, so concurrent readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = temp_sibling(path);
    let mut file = std::fs::File::create(&tmp)?;
    file.write_all(bytes)?;
    file.sync_all()?;
    drop(file);
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

// ---------------------------------------------------------------------------
