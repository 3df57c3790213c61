//! Per-run manifest: command, seed, versions, wall time, config echo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::{Error, Result};

/// Everything needed to reproduce a run: passing a manifest back to the
/// same subcommand as `--config` replays it (bit-identically with one
/// worker). Scalar fields precede the tables so the TOML serializer
/// accepts the layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Subcommand that produced the run, e.g. "ga run".
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    /// Informational; reruns differ here and nowhere else.
    pub wall_time_seconds: f64,
    /// Input paths of commands that take positional inputs (`report`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
    pub versions: Versions,
    /// The effective configuration, all overrides applied.
    pub config: RunConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Versions {
    pub package: String,
    pub model_format: u32,
}

impl Versions {
    pub fn current() -> Versions {
        Versions {
            package: env!("CARGO_PKG_VERSION").to_owned(),
            model_format: crate::neural::MODEL_VERSION,
        }
    }
}

impl Manifest {
    pub fn new(command: &str, config: RunConfig, wall_time_seconds: f64) -> Manifest {
        Manifest {
            command: command.to_owned(),
            seed: config.seed,
            workers: config.workers,
            wall_time_seconds,
            inputs: Vec::new(),
            versions: Versions::current(),
            config,
        }
    }

    /// Serializes and atomically writes `manifest.toml` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("unserializable manifest: {e}")))?;
        let path = dir.join("manifest.toml");
        super::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_is_detected() {
        let mut manifest = Manifest::new("ga run", RunConfig::default(), 1.25);
        manifest.inputs.push(PathBuf::from("runs/a"));
        let text = toml::to_string_pretty(&manifest).unwrap();
        let back: Manifest = toml::from_str(&text).unwrap();
        assert_eq!(back.command, "ga run");
        assert_eq!(back.inputs, vec![PathBuf::from("runs/a")]);
        assert_eq!(back.config.seed, manifest.config.seed);

        // The config loader treats the same text as a manifest.
        let dir = std::env::temp_dir().join(format!("synga-manifest-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = manifest.write(&dir).unwrap();
        let loaded = super::super::config::load_config(Some(&path)).unwrap();
        assert_eq!(loaded.manifest_inputs, vec![PathBuf::from("runs/a")]);
        assert_eq!(loaded.config.workers, 1);
    }
}
