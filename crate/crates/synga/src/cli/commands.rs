//! The `synga` subcommands: argument surface, dispatch, and execution.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{
    build_filter, build_oracle, load_catalog, load_config, require_file, FilterKind,
    OracleKind, OracleSpec, RunConfig, Task,
};
use super::Manifest;
use crate::blockfilter::{evaluate_classifier, train_block_classifier, ClassifierModel, RouteDataset};
use crate::catalog::Catalog;
use crate::chem::morgan_count_fp;
use crate::genetic::{run_synga, HistoryEntry, RunHistory};
use crate::neural::{train_nam, NamExample, NamTrainReport};
use crate::oracles::{mean_pairwise_diversity, top_k_auc, Oracle};
use crate::surrogate::run_syngbo;
use crate::synthesis::{sample_route_filtered, RouteRepr};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

/// Synthesis-constrained molecular optimization over building-block
/// reaction trees.
#[derive(Parser, Debug)]
#[command(name = "synga", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a building-block catalog and emit the cleaned block list
    #[command(subcommand)]
    Blocks(BlocksCmd),
    /// Sample random synthesis routes
    #[command(subcommand)]
    Routes(RoutesCmd),
    /// Generate product-to-building-block datasets
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train or evaluate the block-membership filter
    #[command(subcommand)]
    Filter(FilterCmd),
    /// Train the additive per-block scoring model
    #[command(subcommand)]
    Nam(NamCmd),
    /// Genetic optimization over synthesis routes
    #[command(subcommand)]
    Ga(GaCmd),
    /// Surrogate-guided optimization with periodic filter refits
    #[command(subcommand)]
    Gbo(GboCmd),
    /// Rank catalog-reachable analogs of a query structure
    #[command(subcommand)]
    Analog(AnalogCmd),
    /// Summarize finished runs into one table
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
pub enum BlocksCmd {
    Prepare(BlocksPrepareArgs),
}

#[derive(Subcommand, Debug)]
pub enum RoutesCmd {
    Sample(RoutesSampleArgs),
}

#[derive(Subcommand, Debug)]
pub enum DatasetCmd {
    Gen(DatasetGenArgs),
}

#[derive(Subcommand, Debug)]
pub enum FilterCmd {
    Train(FilterTrainArgs),
    Eval(FilterEvalArgs),
}

#[derive(Subcommand, Debug)]
pub enum NamCmd {
    Train(NamTrainArgs),
}

#[derive(Subcommand, Debug)]
pub enum GaCmd {
    Run(OptimizeArgs),
}

#[derive(Subcommand, Debug)]
pub enum GboCmd {
    Run(OptimizeArgs),
}

#[derive(Subcommand, Debug)]
pub enum AnalogCmd {
    Search(AnalogArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// Run configuration (TOML), or a previous run's manifest.toml
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; any count yields identical results
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct BlocksPrepareArgs {
    /// Block list (one SMILES per line); overrides the config
    #[arg(long, value_name = "FILE")]
    pub blocks: Option<PathBuf>,
    /// Template table (name<TAB>pattern); overrides the config
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct RoutesSampleArgs {
    /// Routes to sample; overrides sample.n_routes
    #[arg(short, long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct DatasetGenArgs {
    /// Unique products to collect; overrides dataset.n_products
    #[arg(short, long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct FilterTrainArgs {
    /// Dataset JSONL from `dataset gen`; overrides dataset.path
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct FilterEvalArgs {
    /// Trained model file; overrides filter.model
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Dataset JSONL from `dataset gen`; overrides dataset.path
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct NamTrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// Also write summary.csv (and iterations.csv for gbo)
    #[arg(long)]
    pub csv: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct AnalogArgs {
    /// Query SMILES; overrides oracle.query
    #[arg(long)]
    pub query: Option<String>,
    /// Ranked analogs to keep; overrides analog.top_n
    #[arg(long)]
    pub top: Option<usize>,
    /// Also write summary.csv
    #[arg(long)]
    pub csv: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Finished run directories (each holding a summary.json)
    #[arg(value_name = "RUN_DIR")]
    pub runs: Vec<PathBuf>,
    /// Also write report.csv
    #[arg(long)]
    pub csv: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Parses the process arguments and runs; returns the exit code.
pub fn main() -> i32 {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let detail = e.to_string();
            eprintln!("{}", render_error(&e));
            if detail.contains('\n') {
                eprintln!("{detail}");
            }
            exit_code(&e)
        }
    }
}

/// First stderr line: `error[CODE]: message` with newlines flattened.
pub fn render_error(e: &Error) -> String {
    format!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "))
}

/// 2 for rejected inputs and configuration, 1 for runtime failures.
pub fn exit_code(e: &Error) -> i32 {
    match e.code() {
        "E_CONFIG" | "E_PARSE" | "E_CATALOG" | "E_MOLECULE" | "E_IO" => 2,
        _ => 1,
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Blocks(BlocksCmd::Prepare(args)) => blocks_prepare(args),
        Command::Routes(RoutesCmd::Sample(args)) => routes_sample(args),
        Command::Dataset(DatasetCmd::Gen(args)) => dataset_gen(args),
        Command::Filter(FilterCmd::Train(args)) => filter_train(args),
        Command::Filter(FilterCmd::Eval(args)) => filter_eval(args),
        Command::Nam(NamCmd::Train(args)) => nam_train_cmd(args),
        Command::Ga(GaCmd::Run(args)) => optimize(args, OptimizeKind::Ga),
        Command::Gbo(GboCmd::Run(args)) => optimize(args, OptimizeKind::Gbo),
        Command::Analog(AnalogCmd::Search(args)) => analog_search(args),
        Command::Report(args) => report(args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct Prepared {
    config: RunConfig,
    manifest_inputs: Vec<PathBuf>,
    started: Instant,
}

/// Loads the config, applies flag overrides, and checks the task tag.
fn prepare(common: &CommonArgs, task: Option<Task>) -> Result<Prepared> {
    let loaded = load_config(common.config.as_deref())?;
    let mut config = loaded.config;
    if let (Some(expected), Some(found)) = (task, config.task) {
        if expected != found {
            return Err(Error::Config(format!(
                "config is for task \"{}\" but this subcommand runs \"{}\"",
                found.as_str(),
                expected.as_str()
            )));
        }
    }
    if task.is_some() {
        config.task = task;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    if config.workers == 0 {
        return Err(Error::Config("workers must be at least 1".to_owned()));
    }
    Ok(Prepared { config, manifest_inputs: loaded.manifest_inputs, started: Instant::now() })
}

/// The run's output directory (default `runs/<slug>`), echoed back into
/// the config so manifests record where outputs went.
fn resolve_out(config: &mut RunConfig, slug: &str) -> PathBuf {
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(slug));
    config.out = Some(dir.clone());
    dir
}

/// Output directory with clobber protection: every planned file is
/// checked before any work runs.
struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    fn create(dir: PathBuf, force: bool, files: &[&str]) -> Result<OutDir> {
        for name in files {
            let path = dir.join(name);
            if path.exists() && !force {
                return Err(Error::Config(format!(
                    "output {} exists (pass --force to overwrite)",
                    path.display()
                )));
            }
        }
        std::fs::create_dir_all(&dir)?;
        Ok(OutDir { dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// Writes the manifest; the final act of every command.
fn finish(
    command: &str,
    out: &OutDir,
    config: RunConfig,
    inputs: Vec<PathBuf>,
    started: Instant,
) -> Result<()> {
    let mut manifest = Manifest::new(command, config, started.elapsed().as_secs_f64());
    manifest.inputs = inputs;
    manifest.write(&out.dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("unserializable output: {e}")))?;
    text.push('\n');
    super::write_atomic(path, text.as_bytes())
}

fn write_jsonl<T: Serialize>(path: &Path, lines: impl IntoIterator<Item = T>) -> Result<()> {
    let mut buf = Vec::new();
    for line in lines {
        serde_json::to_writer(&mut buf, &line)
            .map_err(|e| Error::Config(format!("unserializable output: {e}")))?;
        buf.push(b'\n');
    }
    super::write_atomic(path, &buf)
}

/// Runs `f` on a dedicated worker pool of the configured width.
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Run(format!("worker pool: {e}")))?;
    pool.install(f)
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

// ---------------------------------------------------------------------------
// Run summaries
// ---------------------------------------------------------------------------

/// The summary.json shape shared by `ga run`, `gbo run`, and
/// `analog search`; `report` aggregates these.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: String,
    pub oracle: String,
    pub seed: u64,
    pub workers: usize,
    pub budget: usize,
    pub calls: usize,
    pub best_fitness: f64,
    pub best_product: String,
    pub top_10_mean: f64,
    pub top_10_auc: f64,
    pub diversity_top_100: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_iterations: Option<usize>,
}

const SUMMARY_CSV_HEADER: &str = "task,oracle,seed,workers,budget,calls,best_fitness,\
best_product,top_10_mean,top_10_auc,diversity_top_100,outer_iterations";

fn summary_csv_row(s: &RunSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        csv_field(&s.task),
        csv_field(&s.oracle),
        s.seed,
        s.workers,
        s.budget,
        s.calls,
        s.best_fitness,
        csv_field(&s.best_product),
        s.top_10_mean,
        s.top_10_auc,
        s.diversity_top_100,
        s.outer_iterations.map(|n| n.to_string()).unwrap_or_default(),
    )
}

fn make_run_summary(
    task: &str,
    oracle: &Oracle,
    config: &RunConfig,
    budget: usize,
    history: &RunHistory,
    catalog: &Catalog,
    outer_iterations: Option<usize>,
) -> Result<RunSummary> {
    let best = history.best().ok_or_else(|| Error::Run("empty run history".to_owned()))?;
    let scores = history.scores();
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let take = sorted.len().min(10);
    let top_10_mean = sorted[..take].iter().sum::<f64>() / take as f64;
    // Diversity over the 100 fittest products (stable sort keeps
    // discovery order among ties).
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let fps: Vec<_> = order
        .iter()
        .take(100)
        .map(|&i| morgan_count_fp(history.entries()[i].route.product_mol(catalog), 2, 2048))
        .collect();
    Ok(RunSummary {
        task: task.to_owned(),
        oracle: oracle.name().to_owned(),
        seed: config.seed,
        workers: config.workers,
        budget,
        calls: history.len(),
        best_fitness: best.fitness,
        best_product: best.key.as_str().to_owned(),
        top_10_mean,
        top_10_auc: top_k_auc(&scores, 10, 1),
        diversity_top_100: mean_pairwise_diversity(&fps),
        outer_iterations,
    })
}

#[derive(Serialize)]
struct ResultLine<'a> {
    index: u64,
    product: &'a str,
    fitness: f64,
    route: RouteRepr,
}

fn write_results(path: &Path, history: &RunHistory, catalog: &Catalog) -> Result<()> {
    write_jsonl(
        path,
        history.entries().iter().map(|e| ResultLine {
            index: e.index,
            product: e.key.as_str(),
            fitness: e.fitness,
            route: e.route.to_repr(catalog),
        }),
    )
}

// ---------------------------------------------------------------------------
// blocks prepare
// ---------------------------------------------------------------------------

fn blocks_prepare(args: BlocksPrepareArgs) -> Result<()> {
    let mut p = prepare(&args.common, None)?;
    if let Some(blocks) = &args.blocks {
        p.config.catalog.blocks = Some(blocks.clone());
    }
    if let Some(templates) = &args.templates {
        p.config.catalog.templates = Some(templates.clone());
    }
    let (blocks_path, templates_path) = p.config.catalog.resolve();
    p.config.catalog.blocks = Some(blocks_path);
    p.config.catalog.templates = Some(templates_path);

    let dir = resolve_out(&mut p.config, "blocks-prepare");
    let out = OutDir::create(
        dir,
        args.common.force,
        &["blocks_prepared.smi", "load_report.json", "manifest.toml"],
    )?;
    let (catalog, report) = load_catalog(&p.config.catalog)?;

    let mut listing = String::new();
    for b in 0..catalog.n_blocks() as u32 {
        listing += &format!("{}\tb{:03}\n", catalog.block(b).key().as_str(), b);
    }
    super::write_atomic(&out.path("blocks_prepared.smi"), listing.as_bytes())?;
    write_json(
        &out.path("load_report.json"),
        &serde_json::json!({
            "lines_read": report.lines_read,
            "blocks_kept": report.blocks_kept,
            "duplicates": report.duplicates,
            "unmatched": report.unmatched,
            "parse_errors": report.parse_errors,
            "n_templates": catalog.n_templates(),
        }),
    )?;
    println!(
        "kept {} of {} blocks ({} duplicates, {} unmatched, {} parse errors), {} templates",
        report.blocks_kept,
        report.lines_read,
        report.duplicates,
        report.unmatched,
        report.parse_errors.len(),
        catalog.n_templates(),
    );
    finish("blocks prepare", &out, p.config, Vec::new(), p.started)
}

// ---------------------------------------------------------------------------
// routes sample
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RouteLine<'a> {
    index: usize,
    product: &'a str,
    n_internal: usize,
    weight: f64,
    route: RouteRepr,
}

fn routes_sample(args: RoutesSampleArgs) -> Result<()> {
    let mut p = prepare(&args.common, None)?;
    if let Some(n) = args.n {
        p.config.sample.n_routes = n;
    }
    if p.config.sample.n_routes == 0 {
        return Err(Error::Config("sample.n_routes must be at least 1".to_owned()));
    }
    let dir = resolve_out(&mut p.config, "routes-sample");
    let out =
        OutDir::create(dir, args.common.force, &["routes.jsonl", "summary.json", "manifest.toml"])?;
    let (catalog, _) = load_catalog(&p.config.catalog)?;
    let filter = build_filter(&p.config.filter, &p.config.oracle, &catalog)?;
    let picker = match p.config.filter.kind {
        FilterKind::None => None,
        _ => Some(filter.picker()),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(p.config.seed);
    let routes: Vec<_> = (0..p.config.sample.n_routes)
        .map(|_| sample_route_filtered(&mut rng, &catalog, p.config.sample.max_steps, picker))
        .collect();

    write_jsonl(
        &out.path("routes.jsonl"),
        routes.iter().enumerate().map(|(i, route)| RouteLine {
            index: i + 1,
            product: route.product_key().as_str(),
            n_internal: route.n_internal(),
            weight: crate::chem::molecular_weight(route.product_mol(&catalog)),
            route: route.to_repr(&catalog),
        }),
    )?;

    let unique: std::collections::HashSet<_> =
        routes.iter().map(|r| r.product_key().clone()).collect();
    let internals: Vec<usize> = routes.iter().map(|r| r.n_internal()).collect();
    write_json(
        &out.path("summary.json"),
        &serde_json::json!({
            "task": "sample",
            "n_routes": routes.len(),
            "unique_products": unique.len(),
            "mean_internal": internals.iter().sum::<usize>() as f64 / routes.len() as f64,
            "max_internal": internals.iter().max().copied().unwrap_or(0),
        }),
    )?;
    println!("sampled {} routes ({} unique products)", routes.len(), unique.len());
    finish("routes sample", &out, p.config, Vec::new(), p.started)
}

// ---------------------------------------------------------------------------
// dataset gen
// ---------------------------------------------------------------------------

fn dataset_gen(args: DatasetGenArgs) -> Result<()> {
    let mut p = prepare(&args.common, Some(Task::Dataset))?;
    if let Some(n) = args.n {
        p.config.dataset.n_products = n;
    }
    let dir = resolve_out(&mut p.config, "dataset-gen");
    let out = OutDir::create(
        dir,
        args.common.force,
        &["dataset.jsonl", "summary.json", "manifest.toml"],
    )?;
    let dataset_path = out.path("dataset.jsonl");
    p.config.dataset.path = Some(dataset_path.clone());
    let (catalog, _) = load_catalog(&p.config.catalog)?;

    let mut rng = ChaCha8Rng::seed_from_u64(p.config.seed);
    let target = p.config.dataset.n_products;
    let step = (target / 10).max(1);
    let ds = crate::blockfilter::generate_route_dataset_with(
        &mut rng,
        &catalog,
        target,
        p.config.dataset.max_steps,
        p.config.dataset.holdout_fraction,
        |collected, total| {
            if collected % step == 0 || collected == total {
                eprintln!("dataset: {collected}/{total} unique products");
            }
        },
    )?;
    ds.save(&dataset_path)?;

    let blocks_per: Vec<usize> = ds.examples().iter().map(|ex| ex.blocks.len()).collect();
    write_json(
        &out.path("summary.json"),
        &serde_json::json!({
            "task": "dataset",
            "n_products": ds.len(),
            "holdout": ds.holdout().len(),
            "mean_blocks": blocks_per.iter().sum::<usize>() as f64 / ds.len() as f64,
            "max_blocks": blocks_per.iter().max().copied().unwrap_or(0),
        }),
    )?;
    println!("wrote {} examples to {}", ds.len(), dataset_path.display());
    finish("dataset gen", &out, p.config, Vec::new(), p.started)
}

// ---------------------------------------------------------------------------
// filter train / eval
// ---------------------------------------------------------------------------

/// The dataset consumed by training commands: flag, then config.
fn dataset_path(flag: Option<PathBuf>, config: &RunConfig, what: &str) -> Result<PathBuf> {
    let path = flag.or_else(|| config.dataset.path.clone()).ok_or_else(|| {
        Error::Config(format!("{what} needs a dataset (--dataset or dataset.path in the config)"))
    })?;
    require_file(&path, "dataset file")?;
    Ok(path)
}

fn filter_train(args: FilterTrainArgs) -> Result<()> {
    let mut p = prepare(&args.common, Some(Task::TrainFilter))?;
    let ds_path = dataset_path(args.dataset.clone(), &p.config, "filter train")?;
    p.config.dataset.path = Some(ds_path.clone());
    let dir = resolve_out(&mut p.config, "filter-train");
    let out = OutDir::create(
        dir,
        args.common.force,
        &["filter.bin", "train_report.json", "manifest.toml"],
    )?;
    let (catalog, _) = load_catalog(&p.config.catalog)?;

    let mut master = ChaCha8Rng::seed_from_u64(p.config.seed);
    let split_seed: u64 = master.gen();
    p.config.classifier.seed = master.gen();

    let mut ds = RouteDataset::load(&ds_path, &catalog)?;
    ds.split(p.config.dataset.holdout_fraction, split_seed)?;
    let (model, report) = train_block_classifier(&catalog, &ds, &p.config.classifier)?;
    model.save(&out.path("filter.bin"))?;
    write_json(&out.path("train_report.json"), &report)?;
    println!(
        "held-out AUROC {:.4}, AUPRC {:.4} ({} train / {} held-out examples)",
        report.holdout_auroc, report.holdout_auprc, report.n_train, report.n_holdout,
    );
    finish("filter train", &out, p.config, Vec::new(), p.started)
}

fn filter_eval(args: FilterEvalArgs) -> Result<()> {
    let mut p = prepare(&args.common, Some(Task::Eval))?;
    let model_path = args.model.clone().or_else(|| p.config.filter.model.clone()).ok_or_else(
        || Error::Config("filter eval needs a model (--model or filter.model in the config)".to_owned()),
    )?;
    require_file(&model_path, "filter model")?;
    p.config.filter.model = Some(model_path.clone());
    let ds_path = dataset_path(args.dataset.clone(), &p.config, "filter eval")?;
    p.config.dataset.path = Some(ds_path.clone());
    let dir = resolve_out(&mut p.config, "filter-eval");
    let out = OutDir::create(dir, args.common.force, &["eval.json", "manifest.toml"])?;
    let (catalog, _) = load_catalog(&p.config.catalog)?;

    // Same first draw as `filter train`, so equal seeds evaluate the
    // split the model was held out from.
    let mut master = ChaCha8Rng::seed_from_u64(p.config.seed);
    let split_seed: u64 = master.gen();
    let mut ds = RouteDataset::load(&ds_path, &catalog)?;
    ds.split(p.config.dataset.holdout_fraction, split_seed)?;

    let model = ClassifierModel::load(&model_path)?;
    let (auroc, auprc) = evaluate_classifier(&model, &catalog, &ds)?;
    write_json(
        &out.path("eval.json"),
        &serde_json::json!({
            "task": "eval",
            "model": model_path.display().to_string(),
            "dataset": ds_path.display().to_string(),
            "n_holdout": ds.holdout().len(),
            "holdout_auroc": auroc,
            "holdout_auprc": auprc,
        }),
    )?;
    println!("held-out AUROC {auroc:.4}, AUPRC {auprc:.4}");
    finish("filter eval", &out, p.config, Vec::new(), p.started)
}

// ---------------------------------------------------------------------------
// nam train
// ---------------------------------------------------------------------------

fn nam_train_cmd(args: NamTrainArgs) -> Result<()> {
    let mut p = prepare(&args.common, Some(Task::TrainNam))?;
    let dir = resolve_out(&mut p.config, "nam-train");
    let out = OutDir::create(
        dir,
        args.common.force,
        &["nam.bin", "metrics.txt", "train_report.json", "manifest.toml"],
    )?;
    let (catalog, _) = load_catalog(&p.config.catalog)?;
    let oracle = build_oracle(&p.config.oracle, &catalog)?;

    let mut master = ChaCha8Rng::seed_from_u64(p.config.seed);
    p.config.nam.seed = master.gen();

    // Scored route dataset: unique products with their leaf block sets.
    let target = p.config.dataset.n_products;
    let cap = 1_000_000usize.max(target.saturating_mul(2000));
    let step = (target / 10).max(1);
    let mut seen = std::collections::HashSet::new();
    let mut examples: Vec<NamExample> = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while examples.len() < target {
        if attempts == cap {
            return Err(Error::Run(format!(
                "collected only {} of {target} unique products after {cap} route samples",
                examples.len()
            )));
        }
        attempts += 1;
        let route = sample_route_filtered(&mut master, &catalog, p.config.dataset.max_steps, None);
        if !seen.insert(route.product_key().clone()) {
            continue;
        }
        let fitness = oracle.evaluate_route(&catalog, &route)?;
        let mut blocks = route.leaf_blocks();
        blocks.sort_unstable();
        blocks.dedup();
        examples.push(NamExample { product: route.product_key().clone(), blocks, target: fitness });
        if examples.len() % step == 0 || examples.len() == target {
            eprintln!("scored routes: {}/{target}", examples.len());
        }
    }

    let (model, report) = train_nam(&catalog, &examples, &p.config.nam)?;
    model.save(&out.path("nam.bin"))?;
    super::write_atomic(&out.path("metrics.txt"), nam_metrics_text(&report).as_bytes())?;
    write_json(&out.path("train_report.json"), &report)?;
    println!(
        "best validation Spearman {:.4} at epoch {}",
        report.best_val_spearman, report.best_epoch,
    );
    finish("nam train", &out, p.config, Vec::new(), p.started)
}

fn nam_metrics_text(report: &NamTrainReport) -> String {
    let mut text = String::new();
    for e in &report.epochs {
        text += &format!(
            "epoch {} train_loss {:.6} val_spearman {:.6}\n",
            e.epoch, e.train_loss, e.val_spearman,
        );
    }
    text += &format!(
        "best_epoch {} best_val_spearman {:.6}\n",
        report.best_epoch, report.best_val_spearman,
    );
    if let Some(w) = &report.warning {
        text += &format!("warning: {w}\n");
    }
    text
}

// ---------------------------------------------------------------------------
// ga run / gbo run
// ---------------------------------------------------------------------------

enum OptimizeKind {
    Ga,
    Gbo,
}

fn optimize(args: OptimizeArgs, kind: OptimizeKind) -> Result<()> {
    let (task, slug, command) = match kind {
        OptimizeKind::Ga => (Task::Ga, "ga-run", "ga run"),
        OptimizeKind::Gbo => (Task::Gbo, "gbo-run", "gbo run"),
    };
    let mut p = prepare(&args.common, Some(task))?;
    let mut files = vec!["results.jsonl", "summary.json", "manifest.toml"];
    if matches!(kind, OptimizeKind::Gbo) {
        files.push("iterations.jsonl");
        if args.csv {
            files.push("iterations.csv");
        }
    }
    if args.csv {
        files.push("summary.csv");
    }
    let dir = resolve_out(&mut p.config, slug);
    let out = OutDir::create(dir, args.common.force, &files)?;
    let (catalog, _) = load_catalog(&p.config.catalog)?;
    let oracle = build_oracle(&p.config.oracle, &catalog)?;

    let summary = match kind {
        OptimizeKind::Ga => {
            p.config.ga.seed = p.config.seed;
            let config = &p.config;
            let filter = build_filter(&config.filter, &config.oracle, &catalog)?;
            let picker = match config.filter.kind {
                FilterKind::None => None,
                _ => Some(filter.picker()),
            };
            let (_, history) =
                with_pool(config.workers, || run_synga(&config.ga, &oracle, &catalog, picker))?;
            write_results(&out.path("results.jsonl"), &history, &catalog)?;
            make_run_summary("ga", &oracle, config, config.ga.budget, &history, &catalog, None)?
        }
        OptimizeKind::Gbo => {
            p.config.gbo.seed = p.config.seed;
            let config = &p.config;
            let (history, logs) =
                with_pool(config.workers, || run_syngbo(&config.gbo, &oracle, &catalog))?;
            write_results(&out.path("results.jsonl"), &history, &catalog)?;
            write_jsonl(&out.path("iterations.jsonl"), logs.iter())?;
            if args.csv {
                let mut csv = String::from(
                    "iteration,history_len,beta,filter_size,gp_size,best_acquisition,n_proposals\n",
                );
                for log in &logs {
                    csv += &format!(
                        "{},{},{},{},{},{},{}\n",
                        log.iteration,
                        log.history_len,
                        log.beta,
                        log.filter_size,
                        log.gp_size,
                        log.best_acquisition,
                        log.proposal_scores.len(),
                    );
                }
                super::write_atomic(&out.path("iterations.csv"), csv.as_bytes())?;
            }
            make_run_summary(
                "gbo",
                &oracle,
                config,
                config.gbo.budget,
                &history,
                &catalog,
                Some(logs.len()),
            )?
        }
    };

    write_json(&out.path("summary.json"), &summary)?;
    if args.csv {
        let csv = format!("{SUMMARY_CSV_HEADER}\n{}\n", summary_csv_row(&summary));
        super::write_atomic(&out.path("summary.csv"), csv.as_bytes())?;
    }
    println!(
        "best {} fitness {:.4} after {} unique evaluations (top-10 AUC {:.4})",
        summary.best_product, summary.best_fitness, summary.calls, summary.top_10_auc,
    );
    finish(command, &out, p.config, Vec::new(), p.started)
}

// ---------------------------------------------------------------------------
// analog search
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AnalogLine<'a> {
    rank: usize,
    product: &'a str,
    similarity: f64,
    route: RouteRepr,
}

fn analog_search(args: AnalogArgs) -> Result<()> {
    let mut p = prepare(&args.common, Some(Task::Analog))?;
    if let Some(query) = &args.query {
        p.config.oracle =
            OracleSpec { kind: OracleKind::Analog, query: Some(query.clone()), ..p.config.oracle };
    }
    if p.config.oracle.kind != OracleKind::Analog || p.config.oracle.query.is_none() {
        return Err(Error::Config(
            "analog search needs --query or an analog oracle in the config".to_owned(),
        ));
    }
    if let Some(top) = args.top {
        p.config.analog.top_n = top;
    }
    p.config.ga.seed = p.config.seed;

    let mut files = vec!["analogs.jsonl", "results.jsonl", "summary.json", "manifest.toml"];
    if args.csv {
        files.push("summary.csv");
    }
    let dir = resolve_out(&mut p.config, "analog-search");
    let out = OutDir::create(dir, args.common.force, &files)?;
    let (catalog, _) = load_catalog(&p.config.catalog)?;
    let oracle = build_oracle(&p.config.oracle, &catalog)?;
    let config = &p.config;
    let filter = build_filter(&config.filter, &config.oracle, &catalog)?;
    let picker = match config.filter.kind {
        FilterKind::None => None,
        _ => Some(filter.picker()),
    };
    let (_, history) =
        with_pool(config.workers, || run_synga(&config.ga, &oracle, &catalog, picker))?;

    write_results(&out.path("results.jsonl"), &history, &catalog)?;
    let mut ranked: Vec<&HistoryEntry> = history.entries().iter().collect();
    ranked.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.index.cmp(&b.index)));
    write_jsonl(
        &out.path("analogs.jsonl"),
        ranked.iter().take(config.analog.top_n).enumerate().map(|(i, e)| AnalogLine {
            rank: i + 1,
            product: e.key.as_str(),
            similarity: e.fitness,
            route: e.route.to_repr(&catalog),
        }),
    )?;

    let summary =
        make_run_summary("analog", &oracle, config, config.ga.budget, &history, &catalog, None)?;
    write_json(&out.path("summary.json"), &summary)?;
    if args.csv {
        let csv = format!("{SUMMARY_CSV_HEADER}\n{}\n", summary_csv_row(&summary));
        super::write_atomic(&out.path("summary.csv"), csv.as_bytes())?;
    }
    println!(
        "closest analog {} similarity {:.4} ({} candidates ranked)",
        summary.best_product,
        summary.best_fitness,
        config.analog.top_n.min(history.len()),
    );
    finish("analog search", &out, p.config, Vec::new(), p.started)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct ReportRow {
    pub dir: String,
    #[serde(flatten)]
    pub summary: RunSummary,
}

fn report(args: ReportArgs) -> Result<()> {
    let mut p = prepare(&args.common, None)?;
    let runs = if args.runs.is_empty() { p.manifest_inputs.clone() } else { args.runs.clone() };
    if runs.is_empty() {
        return Err(Error::Config("report needs at least one run directory".to_owned()));
    }
    let mut files = vec!["report.json", "manifest.toml"];
    if args.csv {
        files.push("report.csv");
    }
    let dir = resolve_out(&mut p.config, "report");
    let out = OutDir::create(dir, args.common.force, &files)?;

    let mut rows = Vec::with_capacity(runs.len());
    for run_dir in &runs {
        let path = run_dir.join("summary.json");
        require_file(&path, "run summary")?;
        let text = super::config::read_input_text(&path)?;
        let summary: RunSummary = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("{} is not an optimization-run summary: {e}", path.display()))
        })?;
        rows.push(ReportRow { dir: run_dir.display().to_string(), summary });
    }

    write_json(&out.path("report.json"), &serde_json::json!({ "runs": rows }))?;
    if args.csv {
        let mut csv = format!("dir,{SUMMARY_CSV_HEADER}\n");
        for row in &rows {
            csv += &format!("{},{}\n", csv_field(&row.dir), summary_csv_row(&row.summary));
        }
        super::write_atomic(&out.path("report.csv"), csv.as_bytes())?;
    }
    println!("summarized {} runs into {}", rows.len(), out.path("report.json").display());
    finish("report", &out, p.config, runs, p.started)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("synga-cmd-{}-{name}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    /// Eight bifunctional-heavy blocks and one template: a small but
    /// multi-step-capable space.
    fn write_catalog(dir: &Path) -> (PathBuf, PathBuf) {
        let blocks = dir.join("blocks.smi");
        let templates = dir.join("templates.tsv");
        std::fs::write(
            &blocks,
            "CC(=O)O acetic\nCCC(=O)O propionic\nOC(=O)CC(=O)O malonic\nOC(=O)CN glycine\n\
             NCC ethylamine\nNCCC propylamine\nNCCN ethylenediamine\nNCCO ethanolamine\n",
        )
        .unwrap();
        std::fs::write(&templates, "amide\t[C:1](=O)[OH].[N;H2:2]>>[C:1](=O)[N:2]\n").unwrap();
        (blocks, templates)
    }

    fn write_config(dir: &Path, extra: &str) -> PathBuf {
        let (blocks, templates) = write_catalog(dir);
        let path = dir.join("config.toml");
        std::fs::write(
            &path,
            format!(
                "[catalog]\nblocks = \"{}\"\ntemplates = \"{}\"\n\n\
                 [ga]\ninitial_size = 10\npopulation_size = 10\noffspring_size = 5\n\
                 budget = 15\nmax_route_steps = 3\n{extra}",
                blocks.display(),
                templates.display(),
            ),
        )
        .unwrap();
        path
    }

    fn run(args: &[&str]) -> Result<()> {
        dispatch(Cli::try_parse_from(args).expect("argv parses"))
    }

    fn s(path: &Path) -> String {
        path.to_str().unwrap().to_owned()
    }

    #[test]
    fn ga_runs_are_byte_identical_and_replayable() {
        let dir = fixture_dir("ga-determinism");
        let config = write_config(&dir, "");
        let (out1, out2, out3) = (dir.join("r1"), dir.join("r2"), dir.join("r3"));
        for out in [&out1, &out2] {
            run(&["synga", "ga", "run", "--config", &s(&config), "--seed", "7", "--out", &s(out)])
                .unwrap();
        }
        let results = std::fs::read(out1.join("results.jsonl")).unwrap();
        assert_eq!(results, std::fs::read(out2.join("results.jsonl")).unwrap());
        assert_eq!(
            std::fs::read(out1.join("summary.json")).unwrap(),
            std::fs::read(out2.join("summary.json")).unwrap(),
        );
        assert!(!results.is_empty());

        // Replaying the manifest reproduces the results bytes.
        let manifest = out1.join("manifest.toml");
        run(&["synga", "ga", "run", "--config", &s(&manifest), "--out", &s(&out3)]).unwrap();
        assert_eq!(results, std::fs::read(out3.join("results.jsonl")).unwrap());

        // Worker count does not change the bytes.
        let out4 = dir.join("r4");
        run(&[
            "synga", "ga", "run", "--config", &s(&config), "--seed", "7", "--workers", "4",
            "--out", &s(&out4),
        ])
        .unwrap();
        let w4: RunSummary = serde_json::from_str(
            &std::fs::read_to_string(out4.join("results.jsonl")).map(|_| {
                std::fs::read_to_string(out4.join("summary.json")).unwrap()
            }).unwrap(),
        )
        .unwrap();
        assert_eq!(w4.workers, 4);
        assert_eq!(results, std::fs::read(out4.join("results.jsonl")).unwrap());
    }

    #[test]
    fn outputs_refuse_to_clobber_without_force() {
        let dir = fixture_dir("clobber");
        let config = write_config(&dir, "");
        let out = dir.join("run");
        let args =
            ["synga", "ga", "run", "--config", &s(&config), "--seed", "1", "--out", &s(&out)];
        run(&args).unwrap();
        let err = run(&args).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert!(err.to_string().contains("exists"));
        let mut forced = args.to_vec();
        forced.push("--force");
        run(&forced).unwrap();
    }

    #[test]
    fn missing_inputs_name_their_paths_and_exit_two() {
        let dir = fixture_dir("missing");
        let config = dir.join("config.toml");
        std::fs::write(&config, "[catalog]\nblocks = \"/nonexistent/blocks.smi\"\n").unwrap();
        let err = run(&[
            "synga", "ga", "run", "--config", &s(&config), "--out", &s(&dir.join("run")),
        ])
        .unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert!(err.to_string().contains("/nonexistent/blocks.smi"));
        assert!(render_error(&err).starts_with("error[E_CONFIG]: "));

        let err = run(&["synga", "ga", "run", "--config", "/nonexistent/c.toml"]).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert!(err.to_string().contains("/nonexistent/c.toml"));
    }

    #[test]
    fn task_tags_must_match_the_subcommand() {
        let dir = fixture_dir("task-tag");
        let config = write_config(&dir, "\ntask = \"gbo\"\n");
        let err = run(&[
            "synga", "ga", "run", "--config", &s(&config), "--out", &s(&dir.join("run")),
        ])
        .unwrap_err();
        assert_eq!(err.code(), "E_CONFIG");
        assert!(err.to_string().contains("task"));
    }

    #[test]
    fn blocks_prepare_reports_the_load() {
        let dir = fixture_dir("blocks-prepare");
        let (blocks, templates) = write_catalog(&dir);
        let out = dir.join("out");
        run(&[
            "synga", "blocks", "prepare", "--blocks", &s(&blocks), "--templates", &s(&templates),
            "--out", &s(&out),
        ])
        .unwrap();
        let listing = std::fs::read_to_string(out.join("blocks_prepared.smi")).unwrap();
        assert_eq!(listing.lines().count(), 8);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("load_report.json")).unwrap())
                .unwrap();
        assert_eq!(report["blocks_kept"], 8);
        assert_eq!(report["n_templates"], 1);
        assert!(out.join("manifest.toml").exists());
    }

    #[test]
    fn routes_sample_writes_replayable_routes() {
        let dir = fixture_dir("routes");
        let config = write_config(&dir, "");
        let out = dir.join("out");
        run(&[
            "synga", "routes", "sample", "--config", &s(&config), "-n", "12", "--out", &s(&out),
        ])
        .unwrap();
        let text = std::fs::read_to_string(out.join("routes.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 12);
        let (blocks, templates) = (dir.join("blocks.smi"), dir.join("templates.tsv"));
        let (catalog, _) = Catalog::load(&blocks, &templates).unwrap();
        for line in text.lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            let route =
                crate::synthesis::Route::from_json(&value["route"].to_string(), &catalog).unwrap();
            assert_eq!(route.product_key().as_str(), value["product"].as_str().unwrap());
        }
    }

    #[test]
    fn dataset_gen_output_loads_back() {
        let dir = fixture_dir("dataset");
        let config = write_config(&dir, "");
        let out = dir.join("out");
        run(&["synga", "dataset", "gen", "--config", &s(&config), "-n", "10", "--out", &s(&out)])
            .unwrap();
        let (catalog, _) =
            Catalog::load(&dir.join("blocks.smi"), &dir.join("templates.tsv")).unwrap();
        let ds = RouteDataset::load(&out.join("dataset.jsonl"), &catalog).unwrap();
        assert_eq!(ds.len(), 10);
    }

    #[test]
    fn analog_search_ranks_descending() {
        let dir = fixture_dir("analog");
        let config = write_config(&dir, "");
        let out = dir.join("out");
        run(&[
            "synga", "analog", "search", "--config", &s(&config), "--query", "CCNC(C)=O",
            "--top", "5", "--out", &s(&out),
        ])
        .unwrap();
        let text = std::fs::read_to_string(out.join("analogs.jsonl")).unwrap();
        let scores: Vec<f64> = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["similarity"]
                .as_f64()
                .unwrap())
            .collect();
        assert!(!scores.is_empty() && scores.len() <= 5);
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn report_aggregates_run_summaries() {
        let dir = fixture_dir("report");
        let config = write_config(&dir, "");
        let (run1, run2) = (dir.join("r1"), dir.join("r2"));
        for (seed, out) in [("1", &run1), ("2", &run2)] {
            run(&["synga", "ga", "run", "--config", &s(&config), "--seed", seed, "--out", &s(out)])
                .unwrap();
        }
        let out = dir.join("summary");
        run(&["synga", "report", &s(&run1), &s(&run2), "--csv", "--out", &s(&out)]).unwrap();
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap())
                .unwrap();
        assert_eq!(report["runs"].as_array().unwrap().len(), 2);
        let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().next().unwrap().starts_with("dir,task,oracle"));

        // A non-run summary is rejected with its path.
        let err = run(&[
            "synga", "report", &s(&dir), "--out", &s(&dir.join("bad")),
        ])
        .unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn gbo_smoke_runs_at_desk_scale() {
        let dir = fixture_dir("gbo-smoke");
        let config = write_config(
            &dir,
            "\n[gbo]\nproposal_size = 4\nbudget = 20\nnam_refit_min = 1000\ngp_max_full = 40\n\
             inner_seed_top = 6\ninner_seed_random = 4\ninner_population = 10\n\
             inner_offspring = 5\ninner_generations = 1\nmax_route_steps = 3\n",
        );
        let out = dir.join("out");
        run(&["synga", "gbo", "run", "--config", &s(&config), "--seed", "3", "--out", &s(&out)])
            .unwrap();
        let results = std::fs::read_to_string(out.join("results.jsonl")).unwrap();
        assert_eq!(results.lines().count(), 20);
        let iters = std::fs::read_to_string(out.join("iterations.jsonl")).unwrap();
        assert!(!iters.is_empty());
        let summary: RunSummary =
            serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary.task, "gbo");
        assert_eq!(summary.calls, 20);
        assert!(summary.outer_iterations.is_some());
    }

    #[test]
    fn training_pipeline_smoke_on_repo_fixture() {
        let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
        let dir = fixture_dir("train-pipeline");
        let config = dir.join("config.toml");
        std::fs::write(
            &config,
            format!(
                "[catalog]\nblocks = \"{}\"\ntemplates = \"{}\"\n\n\
                 [dataset]\nn_products = 50\nholdout_fraction = 0.2\n\n\
                 [classifier]\nlayers = 2\nwidth = 8\nfp_dim = 64\nbatch_size = 8\nsteps = 40\n\n\
                 [nam]\nlayers = 2\nwidth = 8\nfp_dim = 64\nbatch_size = 10\nmax_epochs = 3\npatience = 2\n",
                data.join("blocks.smi").display(),
                data.join("templates.tsv").display(),
            ),
        )
        .unwrap();
        let ds_out = dir.join("ds");
        run(&["synga", "dataset", "gen", "--config", &s(&config), "--out", &s(&ds_out)]).unwrap();
        let dataset = ds_out.join("dataset.jsonl");

        let train_out = dir.join("train");
        run(&[
            "synga", "filter", "train", "--config", &s(&config), "--dataset", &s(&dataset),
            "--out", &s(&train_out),
        ])
        .unwrap();
        let eval_out = dir.join("eval");
        run(&[
            "synga", "filter", "eval", "--config", &s(&config), "--model",
            &s(&train_out.join("filter.bin")), "--dataset", &s(&dataset), "--out", &s(&eval_out),
        ])
        .unwrap();
        let eval: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(eval_out.join("eval.json")).unwrap())
                .unwrap();
        let auroc = eval["holdout_auroc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auroc));

        let nam_out = dir.join("nam");
        run(&["synga", "nam", "train", "--config", &s(&config), "--out", &s(&nam_out)]).unwrap();
        assert!(crate::neural::NamModel::load(&nam_out.join("nam.bin")).is_ok());
        assert!(nam_out.join("metrics.txt").exists());
    }
}
