//! Run configuration: schema, defaults, file loading, and the oracle /
//! filter builders shared by the subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blockfilter::{
    classifier_block_filter, nam_block_filter, sim_block_filter, BlockFilter, ClassifierConfig,
    ClassifierModel, DEFAULT_EPSILON, DEFAULT_NAM_TOP_K,
};
use crate::catalog::Catalog;
use crate::chem::{morgan_count_fp, parse_smiles};
use crate::genetic::GaConfig;
use crate::neural::{NamModel, NamTrainConfig};
use crate::oracles::{
    additive_block_oracle, analog_fitness, formula_oracle, parse_formula, Oracle,
    ANALOG_FP_DIM, ANALOG_FP_RADIUS,
};
use crate::surrogate::GboConfig;
use crate::synthesis::MAX_INTERNAL_NODES;
use crate::{Error, Result};

/// Environment variable naming the default catalog directory.
pub const DATA_DIR_ENV: &str = "SYNGA_DATA_DIR";

/// `$SYNGA_DATA_DIR`, falling back to `data/` under the working directory.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

/// What a configuration is for; checked against the invoked subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Ga,
    Gbo,
    Analog,
    Dataset,
    TrainFilter,
    TrainNam,
    Eval,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Ga => "ga",
            Task::Gbo => "gbo",
            Task::Analog => "analog",
            Task::Dataset => "dataset",
            Task::TrainFilter => "train-filter",
            Task::TrainNam => "train-nam",
            Task::Eval => "eval",
        }
    }
}

/// Catalog file locations; unset paths resolve under [`data_dir`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
}

impl CatalogPaths {
    pub fn resolve(&self) -> (PathBuf, PathBuf) {
        let dir = data_dir();
        (
            self.blocks.clone().unwrap_or_else(|| dir.join("blocks.smi")),
            self.templates.clone().unwrap_or_else(|| dir.join("templates.tsv")),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Analog,
    Formula,
    AdditiveBlock,
}

/// Which fitness function to optimize.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub kind: OracleKind,
    /// Query SMILES for the analog oracle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    /// Target formula for the formula oracle, e.g. "C9H8O4".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    /// Instance seed for the synthetic additive oracle; part of the
    /// problem definition, not the run's random stream.
    pub seed: u64,
}

impl Default for OracleSpec {
    fn default() -> OracleSpec {
        OracleSpec { kind: OracleKind::AdditiveBlock, query: None, formula: None, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    None,
    Sim,
    Classifier,
    Nam,
}

/// Which building-block filter the optimizer samples through.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Escape mass: probability of sampling from the unfiltered space.
    pub epsilon: f64,
    /// Trained model file for classifier / nam filters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Similarity-ratio / membership-probability threshold.
    pub threshold: f64,
    /// Blocks kept by the nam filter.
    pub top_k: usize,
    /// Query SMILES for sim / classifier filters; defaults to the
    /// oracle's analog query.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
}

impl Default for FilterSpec {
    fn default() -> FilterSpec {
        FilterSpec {
            kind: FilterKind::None,
            epsilon: DEFAULT_EPSILON,
            model: None,
            threshold: 0.5,
            top_k: DEFAULT_NAM_TOP_K,
            query: None,
        }
    }
}

/// `routes sample` settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub n_routes: usize,
    pub max_steps: usize,
}

impl Default for SampleConfig {
    fn default() -> SampleConfig {
        SampleConfig { n_routes: 100, max_steps: MAX_INTERNAL_NODES }
    }
}

/// `dataset gen` settings, plus the dataset location consumed by
/// `filter train`, `filter eval`, and `nam train`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_products: usize,
    pub max_steps: usize,
    pub holdout_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> DatasetConfig {
        DatasetConfig {
            n_products: 5000,
            max_steps: MAX_INTERNAL_NODES,
            holdout_fraction: 0.1,
            path: None,
        }
    }
}

/// `analog search` settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalogConfig {
    /// Ranked analogs written to analogs.jsonl.
    pub top_n: usize,
}

impl Default for AnalogConfig {
    fn default() -> AnalogConfig {
        AnalogConfig { top_n: 50 }
    }
}

/// Complete run configuration; every field has a default, unknown keys
/// are rejected, and the effective (post-override) value is echoed into
/// the run manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional task tag; when present it must match the subcommand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    /// Master seed for the run's random stream.
    pub seed: u64,
    /// Worker threads; results are identical for any count, 1 is the
    /// reference.
    pub workers: usize,
    /// Output directory; `--out` overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub catalog: CatalogPaths,
    pub oracle: OracleSpec,
    pub filter: FilterSpec,
    pub sample: SampleConfig,
    pub dataset: DatasetConfig,
    pub classifier: ClassifierConfig,
    pub nam: NamTrainConfig,
    pub ga: GaConfig,
    pub gbo: GboConfig,
    pub analog: AnalogConfig,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            task: None,
            seed: 0,
            workers: 1,
            out: None,
            catalog: CatalogPaths::default(),
            oracle: OracleSpec::default(),
            filter: FilterSpec::default(),
            sample: SampleConfig::default(),
            dataset: DatasetConfig::default(),
            classifier: ClassifierConfig::default(),
            nam: NamTrainConfig::default(),
            ga: GaConfig::default(),
            gbo: GboConfig::default(),
            analog: AnalogConfig::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// A parsed `--config` argument: either a bare [`RunConfig`] or a manifest
/// from a previous run (recognized by its `command` key).
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Input paths recorded in a manifest (`report` reuses them).
    pub manifest_inputs: Vec<PathBuf>,
}

/// Reads a text input, naming the path on failure.
pub fn read_input_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

/// Fails (naming the path) unless `path` is an existing readable file.
pub fn require_file(path: &Path, what: &str) -> Result<()> {
    match std::fs::metadata(path) {
        Ok(m) if m.is_file() => Ok(()),
        Ok(_) => Err(Error::Config(format!("{what} {} is not a file", path.display()))),
        Err(e) => Err(Error::Config(format!("{what} {}: {e}", path.display()))),
    }
}

pub fn load_config(path: Option<&Path>) -> Result<LoadedConfig> {
    let Some(path) = path else {
        return Ok(LoadedConfig { config: RunConfig::default(), manifest_inputs: Vec::new() });
    };
    require_file(path, "config file")?;
    let text = read_input_text(path)?;
    let value: toml::Value = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if value.get("command").is_some() {
        let manifest: super::Manifest = value
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        return Ok(LoadedConfig {
            config: manifest.config,
            manifest_inputs: manifest.inputs,
        });
    }
    let config: RunConfig =
        value.try_into().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig { config, manifest_inputs: Vec::new() })
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Loads the catalog named by `paths`, pre-checking both files so a
/// missing input fails with its path.
pub fn load_catalog(paths: &CatalogPaths) -> Result<(Catalog, crate::catalog::LoadReport)> {
    let (blocks, templates) = paths.resolve();
    require_file(&blocks, "blocks file")?;
    require_file(&templates, "templates file")?;
    Catalog::load(&blocks, &templates)
}

pub fn build_oracle(spec: &OracleSpec, catalog: &Catalog) -> Result<Oracle> {
    match spec.kind {
        OracleKind::Analog => {
            let query = spec.query.as_deref().ok_or_else(|| {
                Error::Config("oracle.kind = \"analog\" needs oracle.query".to_owned())
            })?;
            analog_fitness(query)
        }
        OracleKind::Formula => {
            let formula = spec.formula.as_deref().ok_or_else(|| {
                Error::Config("oracle.kind = \"formula\" needs oracle.formula".to_owned())
            })?;
            formula_oracle(parse_formula(formula)?)
        }
        OracleKind::AdditiveBlock => Ok(additive_block_oracle(spec.seed, catalog.n_blocks())),
    }
}

/// The query a similarity-style filter centers on: its own, or the
/// analog oracle's.
fn filter_query<'a>(spec: &'a FilterSpec, oracle: &'a OracleSpec) -> Result<&'a str> {
    spec.query
        .as_deref()
        .or(match oracle.kind {
            OracleKind::Analog => oracle.query.as_deref(),
            _ => None,
        })
        .ok_or_else(|| {
            Error::Config(
                "this filter kind needs filter.query (or an analog oracle query)".to_owned(),
            )
        })
}

pub fn build_filter(
    spec: &FilterSpec,
    oracle: &OracleSpec,
    catalog: &Catalog,
) -> Result<BlockFilter> {
    match spec.kind {
        FilterKind::None => Ok(BlockFilter::unfiltered(catalog.n_blocks())),
        FilterKind::Sim => {
            let mol = parse_smiles(filter_query(spec, oracle)?)?;
            let fp = morgan_count_fp(&mol, ANALOG_FP_RADIUS, ANALOG_FP_DIM);
            sim_block_filter(catalog, &fp, ANALOG_FP_RADIUS, spec.threshold, spec.epsilon)
        }
        FilterKind::Classifier => {
            let path = spec.model.as_deref().ok_or_else(|| {
                Error::Config("filter.kind = \"classifier\" needs filter.model".to_owned())
            })?;
            require_file(path, "filter model")?;
            let model = ClassifierModel::load(path)?;
            let mol = parse_smiles(filter_query(spec, oracle)?)?;
            let fp = morgan_count_fp(&mol, model.fp_radius(), model.fp_dim());
            classifier_block_filter(&model, catalog, &fp, spec.threshold, spec.epsilon)
        }
        FilterKind::Nam => {
            let path = spec.model.as_deref().ok_or_else(|| {
                Error::Config("filter.kind = \"nam\" needs filter.model".to_owned())
            })?;
            require_file(path, "filter model")?;
            let nam = NamModel::load(path)?;
            nam_block_filter(&nam, catalog, spec.top_k, spec.epsilon)
        }
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = toml::to_string_pretty(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(toml::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("frobnicate = 1").unwrap_err();
        assert!(err.to_string().contains("frobnicate"));
        assert!(toml::from_str::<RunConfig>("[ga]\nbanana = 2").is_err());
        assert!(toml::from_str::<RunConfig>("[oracle]\nkind = \"warp\"").is_err());
    }

    #[test]
    fn task_tags_use_kebab_case() {
        let config: RunConfig = toml::from_str("task = \"train-filter\"").unwrap();
        assert_eq!(config.task, Some(Task::TrainFilter));
        assert_eq!(Task::TrainNam.as_str(), "train-nam");
    }

    #[test]
    fn oracle_specs_validate_their_inputs() {
        let (cat, _) = crate::catalog::Catalog::from_lines(
            ["CC(=O)O", "NCC"],
            vec![crate::chem::parse_reaction(
                "amide",
                "[C:1](=O)[OH].[N;H2:2]>>[C:1](=O)[N:2]",
            )
            .unwrap()],
        )
        .unwrap();
        let spec = OracleSpec { kind: OracleKind::Analog, ..OracleSpec::default() };
        assert!(matches!(build_oracle(&spec, &cat), Err(Error::Config(_))));
        let spec = OracleSpec {
            kind: OracleKind::Formula,
            formula: Some("C4H9NO2".to_owned()),
            ..OracleSpec::default()
        };
        assert_eq!(build_oracle(&spec, &cat).unwrap().name(), "formula");
        let spec = OracleSpec::default();
        let oracle = build_oracle(&spec, &cat).unwrap();
        assert_eq!(oracle.block_weights().unwrap().len(), 2);
    }

    #[test]
    fn filter_query_falls_back_to_analog_oracle() {
        let filter = FilterSpec { kind: FilterKind::Sim, ..FilterSpec::default() };
        let oracle = OracleSpec {
            kind: OracleKind::Analog,
            query: Some("CCO".to_owned()),
            ..OracleSpec::default()
        };
        assert_eq!(filter_query(&filter, &oracle).unwrap(), "CCO");
        let plain = OracleSpec::default();
        assert!(filter_query(&filter, &plain).is_err());
    }

    #[test]
    fn missing_files_name_their_paths() {
        let err = require_file(Path::new("/nonexistent/blocks.smi"), "blocks file").unwrap_err();
        assert_eq!(err.code(), "E_CONFIG");
        assert!(err.to_string().contains("/nonexistent/blocks.smi"));
    }
}
