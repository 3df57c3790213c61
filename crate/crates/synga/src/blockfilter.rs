//! Building-block filters: similarity heuristic, learned classifier,
//! neighbor mining, top-K scoring, and ε-mixed sampling.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::chem::{parse_smiles, tanimoto, CanonicalKey, CountFingerprint};
use crate::neural::{
    bce_with_logits, read_model, write_model, Activation, AdamState, DenseNet, LayerSpec,
    NamModel, NetSpec,
};
use crate::synthesis::{sample_route, BlockPicker};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_SIM_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NEIGHBOR_K: usize = 100;
pub const DEFAULT_NAM_TOP_K: usize = 1000;

// ---------------------------------------------------------------------------
// Filter type
// ---------------------------------------------------------------------------

/// How a filter's member set was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterProvenance {
    None,
    Sim,
    Classifier,
    Nam,
}

/// A preferred subset of the catalog plus the ε of the two-branch
/// sampling law; ε is fixed for the lifetime of the filter.
#[derive(Clone, Debug)]
pub struct BlockFilter {
    picker: BlockPicker,
    provenance: FilterProvenance,
}

impl BlockFilter {
    /// Whole-catalog filter: every block preferred, so sampling is uniform.
    pub fn unfiltered(n_blocks: usize) -> BlockFilter {
        BlockFilter {
            picker: BlockPicker::new(vec![true; n_blocks], DEFAULT_EPSILON),
            provenance: FilterProvenance::None,
        }
    }

    pub fn from_ids(
        ids: impl IntoIterator<Item = u32>,
        n_blocks: usize,
        epsilon: f64,
        provenance: FilterProvenance,
    ) -> Result<BlockFilter> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1]")));
        }
        let mut allowed = vec![false; n_blocks];
        for id in ids {
            let slot = allowed.get_mut(id as usize).ok_or_else(|| {
                Error::Config(format!("filter id {id} outside catalog of {n_blocks} blocks"))
            })?;
            *slot = true;
        }
        Ok(BlockFilter { picker: BlockPicker::new(allowed, epsilon), provenance })
    }

    pub fn provenance(&self) -> FilterProvenance {
        self.provenance
    }

    pub fn epsilon(&self) -> f64 {
        self.picker.epsilon()
    }

    pub fn contains(&self, b: u32) -> bool {
        self.picker.allowed().get(b as usize).copied().unwrap_or(false)
    }

    /// Member ids, ascending.
    pub fn members(&self) -> Vec<u32> {
        self.picker
            .allowed()
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i as u32))
            .collect()
    }

    pub fn n_members(&self) -> usize {
        self.picker.allowed().iter().filter(|&&m| m).count()
    }

    /// The sampling bridge consumed by route sampling and mutation.
    pub fn picker(&self) -> &BlockPicker {
        &self.picker
    }
}

/// ε-mixed draw from `space`: with probability 1−ε uniform over the
/// nonempty intersection with the filter, otherwise uniform over `space`.
pub fn epsilon_sample<R: Rng>(
    space: &[u32],
    filter: &BlockFilter,
    rng: &mut R,
) -> Option<u32> {
    filter.picker.pick(rng, space)
}

// ---------------------------------------------------------------------------
// Similarity heuristic
// ---------------------------------------------------------------------------

/// Fraction of the block's counted environments present in the query:
/// ‖min(b, q)‖₁ / ‖b‖₁. An empty block fingerprint scores 0.
pub fn sim_ratio(block: &CountFingerprint, query: &CountFingerprint) -> f64 {
    assert_eq!(block.dim(), query.dim(), "fingerprint dimensions differ");
    let total = block.total();
    if total == 0 {
        return 0.0;
    }
    let shared: u64 = block
        .counts()
        .iter()
        .map(|(k, &c)| u64::from(c.min(query.counts().get(k).copied().unwrap_or(0))))
        .sum();
    shared as f64 / total as f64
}

/// Blocks whose containment ratio strictly exceeds `threshold`.
pub fn sim_filter(
    catalog: &Catalog,
    query: &CountFingerprint,
    radius: u32,
    threshold: f64,
) -> Vec<u32> {
    (0..catalog.n_blocks() as u32)
        .filter(|&b| {
            sim_ratio(&catalog.block_fingerprint(b, radius, query.dim()), query) > threshold
        })
        .collect()
}

pub fn sim_block_filter(
    catalog: &Catalog,
    query: &CountFingerprint,
    radius: u32,
    threshold: f64,
    epsilon: f64,
) -> Result<BlockFilter> {
    BlockFilter::from_ids(
        sim_filter(catalog, query, radius, threshold),
        catalog.n_blocks(),
        epsilon,
        FilterProvenance::Sim,
    )
}

// ---------------------------------------------------------------------------
// Route dataset
// ---------------------------------------------------------------------------

/// One product with the set of blocks that built it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RouteExample {
    pub product: CanonicalKey,
    /// Sorted, deduplicated leaf block ids.
    pub blocks: Vec<u32>,
}

/// Product–block-set pairs with a held-out index split.
#[derive(Clone, Debug, Default)]
pub struct RouteDataset {
    examples: Vec<RouteExample>,
    holdout: Vec<usize>,
}

impl RouteDataset {
    pub fn examples(&self) -> &[RouteExample] {
        &self.examples
    }

    pub fn holdout(&self) -> &[usize] {
        &self.holdout
    }

    pub fn train_indices(&self) -> Vec<usize> {
        let held: HashSet<usize> = self.holdout.iter().copied().collect();
        (0..self.examples.len()).filter(|i| !held.contains(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Reassigns the held-out split: a seeded shuffle takes
    /// ⌈fraction·n⌉ examples (at least one when the fraction is positive).
    pub fn split(&mut self, fraction: f64, seed: u64) -> Result<()> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!("holdout fraction {fraction} outside [0, 1)")));
        }
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut n_hold = (fraction * self.examples.len() as f64).ceil() as usize;
        if fraction > 0.0 {
            n_hold = n_hold.clamp(1, self.examples.len().saturating_sub(1));
        }
        self.holdout = order[..n_hold].to_vec();
        self.holdout.sort_unstable();
        Ok(())
    }

    /// JSONL, one example per line; the split is not persisted — callers
    /// re-derive it with [`RouteDataset::split`].
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for ex in &self.examples {
            serde_json::to_writer(&mut buf, ex)
                .map_err(|e| Error::Config(format!("unserializable example: {e}")))?;
            buf.push(b'\n');
        }
        crate::cli::write_atomic(path, &buf)
    }

    pub fn load(path: &Path, catalog: &Catalog) -> Result<RouteDataset> {
        let file = std::fs::File::open(path)?;
        let mut examples = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: RouteExample = serde_json::from_str(&line)
                .map_err(|e| Error::parse(i, format!("bad dataset line {}: {e}", i + 1)))?;
            if ex.blocks.is_empty() {
                return Err(Error::Config(format!("dataset line {} has no blocks", i + 1)));
            }
            if ex.blocks.iter().any(|&b| (b as usize) >= catalog.n_blocks()) {
                return Err(Error::Config(format!(
                    "dataset line {} references a block outside the catalog",
                    i + 1
                )));
            }
            if !seen.insert(ex.product.clone()) {
                return Err(Error::Config(format!("duplicate product on line {}", i + 1)));
            }
            examples.push(ex);
        }
        Ok(RouteDataset { examples, holdout: Vec::new() })
    }
}

/// Samples routes until `n_products` unique products are collected, then
/// assigns a held-out split from the same random stream. `progress` is
/// called with (collected, target) after each new product.
pub fn generate_route_dataset_with<R: Rng>(
    rng: &mut R,
    catalog: &Catalog,
    n_products: usize,
    max_steps: usize,
    holdout_fraction: f64,
    mut progress: impl FnMut(usize, usize),
) -> Result<RouteDataset> {
    if n_products == 0 {
        return Err(Error::Config("n_products must be at least 1".to_owned()));
    }
    let attempt_cap = 1_000_000usize.max(n_products.saturating_mul(2000));
    let mut seen: HashSet<CanonicalKey> = HashSet::new();
    let mut examples = Vec::with_capacity(n_products);
    for attempt in 0.. {
        if examples.len() == n_products {
            break;
        }
        if attempt == attempt_cap {
            return Err(Error::Run(format!(
                "collected only {} of {n_products} unique products after {attempt_cap} \
                 route samples; the catalog may be too small",
                examples.len()
            )));
        }
        let route = sample_route(rng, catalog, max_steps);
        if !seen.insert(route.product_key().clone()) {
            continue;
        }
        let mut blocks = route.leaf_blocks();
        blocks.sort_unstable();
        blocks.dedup();
        examples.push(RouteExample { product: route.product_key().clone(), blocks });
        progress(examples.len(), n_products);
    }
    let mut ds = RouteDataset { examples, holdout: Vec::new() };
    ds.split(holdout_fraction, rng.gen())?;
    Ok(ds)
}

pub fn generate_route_dataset<R: Rng>(
    rng: &mut R,
    catalog: &Catalog,
    n_products: usize,
    max_steps: usize,
    holdout_fraction: f64,
) -> Result<RouteDataset> {
    generate_route_dataset_with(rng, catalog, n_products, max_steps, holdout_fraction, |_, _| {})
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Linear layers in the probe (the last maps to the logit).
    pub layers: usize,
    pub width: usize,
    pub fp_radius: u32,
    pub fp_dim: u32,
    /// Normalize hidden activations (recommended for deep probes).
    pub layer_norm: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Draw half the negatives from the positive block's neighbor list.
    pub hard_negatives: bool,
    pub neighbor_k: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> ClassifierConfig {
        ClassifierConfig {
            layers: 3,
            width: 64,
            fp_radius: 2,
            fp_dim: 512,
            layer_norm: true,
            learning_rate: 5e-4,
            batch_size: 32,
            steps: 2000,
            hard_negatives: false,
            neighbor_k: DEFAULT_NEIGHBOR_K,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    /// Input is the concatenation [q, b, min(q, b)].
    pub fn net_spec(&self) -> NetSpec {
        let mut layers = Vec::with_capacity(self.layers.max(1));
        for _ in 0..self.layers.saturating_sub(1) {
            layers.push(LayerSpec {
                out_dim: self.width,
                activation: Activation::Gelu,
                layer_norm: self.layer_norm,
            });
        }
        layers.push(LayerSpec { out_dim: 1, activation: Activation::Identity, layer_norm: false });
        NetSpec { input_dim: 3 * self.fp_dim as usize, layers }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("layers", self.layers),
            ("width", self.width),
            ("batch_size", self.batch_size),
            ("steps", self.steps),
            ("neighbor_k", self.neighbor_k),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let lr_ok = self.learning_rate.is_finite() && self.learning_rate > 0.0;
        if self.fp_dim == 0 || !lr_ok {
            return Err(Error::Config("fp_dim and learning_rate must be positive".to_owned()));
        }
        Ok(())
    }
}

/// Query-conditioned block membership probe π(M, B).
#[derive(Clone, Debug)]
pub struct ClassifierModel {
    net: DenseNet,
    fp_radius: u32,
    fp_dim: u32,
}

impl ClassifierModel {
    pub fn new(net: DenseNet, fp_radius: u32, fp_dim: u32) -> Result<ClassifierModel> {
        if net.input_dim() != 3 * fp_dim as usize || net.output_dim() != 1 {
            return Err(Error::Config(format!(
                "probe must map 3·{fp_dim} features to a scalar, got {} → {}",
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(ClassifierModel { net, fp_radius, fp_dim })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn fp_radius(&self) -> u32 {
        self.fp_radius
    }

    pub fn fp_dim(&self) -> u32 {
        self.fp_dim
    }

    /// Membership probability in (0, 1).
    pub fn score(&self, query: &CountFingerprint, block: &CountFingerprint) -> f64 {
        crate::neural::sigmoid(self.logit(&query.dense(), &block.dense()))
    }

    fn logit(&self, q: &[f64], b: &[f64]) -> f64 {
        self.net.forward(&features(q, b)).output()[0]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "classifier",
            "spec": self.net.spec(),
            "fp_radius": self.fp_radius,
            "fp_dim": self.fp_dim,
        });
        write_model(path, &meta, self.net.params())
    }

    pub fn load(path: &Path) -> Result<ClassifierModel> {
        let file = read_model(path)?;
        let kind = file.meta.get("kind").and_then(|v| v.as_str());
        if kind != Some("classifier") {
            return Err(Error::Config(format!(
                "expected a block classifier model, found kind {kind:?}"
            )));
        }
        let spec: NetSpec = serde_json::from_value(
            file.meta.get("spec").cloned().ok_or_else(|| {
                Error::Config("model metadata is missing the net spec".to_owned())
            })?,
        )
        .map_err(|e| Error::Config(format!("bad net spec in model metadata: {e}")))?;
        let fp_radius = meta_u32(&file.meta, "fp_radius")?;
        let fp_dim = meta_u32(&file.meta, "fp_dim")?;
        let net = DenseNet::from_params(spec, file.params)?;
        ClassifierModel::new(net, fp_radius, fp_dim)
    }
}

fn meta_u32(meta: &serde_json::Value, key: &str) -> Result<u32> {
    meta.get(key)
        .and_then(|v| v.as_u64())
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| Error::Config(format!("model metadata is missing {key}")))
}

/// [q, b, min(q, b)].
fn features(q: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(q.len(), b.len());
    let mut out = Vec::with_capacity(3 * q.len());
    out.extend_from_slice(q);
    out.extend_from_slice(b);
    out.extend(q.iter().zip(b).map(|(x, y)| x.min(*y)));
    out
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ClassifierReport {
    /// Mean batch loss per optimization step.
    pub losses: Vec<f64>,
    pub holdout_auroc: f64,
    pub holdout_auprc: f64,
    pub n_train: usize,
    pub n_holdout: usize,
}

/// One training draw: a block id and its membership label for the given
/// example. Negatives come uniformly from outside B_M, or (in hard mode,
/// half the time) from the sampled positive's neighbor list minus B_M.
fn sample_training_pair<R: Rng>(
    rng: &mut R,
    blocks: &[u32],
    n_blocks: usize,
    neighbors: Option<&[Vec<u32>]>,
) -> (u32, f64) {
    let positive = blocks[rng.gen_range(0..blocks.len())];
    if rng.gen::<f64>() < 0.5 {
        return (positive, 1.0);
    }
    if let Some(tables) = neighbors {
        if rng.gen::<f64>() < 0.5 {
            let pool: Vec<u32> = tables[positive as usize]
                .iter()
                .copied()
                .filter(|b| blocks.binary_search(b).is_err())
                .collect();
            if !pool.is_empty() {
                return (pool[rng.gen_range(0..pool.len())], 0.0);
            }
        }
    }
    // Uniform negative; B_M is tiny next to the catalog, so rejection
    // sampling terminates fast (the caller guarantees B_M ⊂ B).
    loop {
        let b = rng.gen_range(0..n_blocks) as u32;
        if blocks.binary_search(&b).is_err() {
            return (b, 0.0);
        }
    }
}

/// Trains the membership probe with per-step example/block resampling and
/// reports averaged per-example AUROC / AUPRC on the held-out split.
pub fn train_block_classifier(
    catalog: &Catalog,
    ds: &RouteDataset,
    cfg: &ClassifierConfig,
) -> Result<(ClassifierModel, ClassifierReport)> {
    cfg.validate()?;
    if ds.holdout().is_empty() {
        return Err(Error::Config("dataset has no held-out split".to_owned()));
    }
    let train_idx = ds.train_indices();
    if train_idx.is_empty() {
        return Err(Error::Config("dataset has no training examples".to_owned()));
    }
    if ds
        .examples()
        .iter()
        .any(|ex| ex.blocks.is_empty() || ex.blocks.len() >= catalog.n_blocks())
    {
        return Err(Error::Config(
            "every example needs a nonempty block set smaller than the catalog".to_owned(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = DenseNet::init(cfg.net_spec(), &mut rng)?;
    let mut model = ClassifierModel::new(net, cfg.fp_radius, cfg.fp_dim)?;

    // Dense features computed once: per-block and per-product fingerprints.
    let block_dense: Vec<Vec<f64>> = (0..catalog.n_blocks() as u32)
        .map(|b| catalog.block_fingerprint(b, cfg.fp_radius, cfg.fp_dim).dense())
        .collect();
    let product_dense: Vec<Vec<f64>> = ds
        .examples()
        .iter()
        .map(|ex| {
            let mol = parse_smiles(ex.product.as_str())?;
            Ok(crate::chem::morgan_count_fp(&mol, cfg.fp_radius, cfg.fp_dim).dense())
        })
        .collect::<Result<_>>()?;
    let neighbors = if cfg.hard_negatives {
        Some(mine_neighbors(catalog, cfg.fp_radius, cfg.fp_dim, cfg.neighbor_k))
    } else {
        None
    };

    let mut params = model.net.params().to_vec();
    let mut adam = AdamState::with_lr(params.len(), cfg.learning_rate);
    let mut report = ClassifierReport {
        n_train: train_idx.len(),
        n_holdout: ds.holdout().len(),
        ..ClassifierReport::default()
    };

    for step in 0..cfg.steps {
        model.net.params_mut().copy_from_slice(&params);
        let mut grads = vec![0.0; params.len()];
        let mut loss_sum = 0.0;
        for _ in 0..cfg.batch_size {
            let ex_idx = train_idx[rng.gen_range(0..train_idx.len())];
            let ex = &ds.examples()[ex_idx];
            let (block, label) =
                sample_training_pair(&mut rng, &ex.blocks, catalog.n_blocks(), neighbors.as_deref());
            let trace = model
                .net
                .forward(&features(&product_dense[ex_idx], &block_dense[block as usize]));
            let (loss, d_logit) = bce_with_logits(trace.output()[0], label);
            loss_sum += loss;
            model.net.backward(&trace, &[d_logit / cfg.batch_size as f64], &mut grads);
        }
        let mean_loss = loss_sum / cfg.batch_size as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at step {step}")));
        }
        report.losses.push(mean_loss);
        adam.step(&mut params, &grads)?;
    }
    model.net.params_mut().copy_from_slice(&params);

    let (auroc_avg, auprc_avg) =
        holdout_metrics(&model, ds, &block_dense, &product_dense)?;
    report.holdout_auroc = auroc_avg;
    report.holdout_auprc = auprc_avg;
    Ok((model, report))
}

/// Per-example AUROC/AUPRC over all catalog blocks, averaged.
fn holdout_metrics(
    model: &ClassifierModel,
    ds: &RouteDataset,
    block_dense: &[Vec<f64>],
    product_dense: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let mut roc_sum = 0.0;
    let mut prc_sum = 0.0;
    let mut n = 0usize;
    for &i in ds.holdout() {
        let ex = &ds.examples()[i];
        let scores: Vec<f64> = block_dense
            .iter()
            .map(|b| model.logit(&product_dense[i], b))
            .collect();
        let labels: Vec<bool> =
            (0..block_dense.len() as u32).map(|b| ex.blocks.binary_search(&b).is_ok()).collect();
        let (Some(roc), Some(prc)) = (auroc(&scores, &labels), auprc(&scores, &labels)) else {
            return Err(Error::Config(format!(
                "held-out example {i} is single-class; cannot rank"
            )));
        };
        roc_sum += roc;
        prc_sum += prc;
        n += 1;
    }
    Ok((roc_sum / n as f64, prc_sum / n as f64))
}

/// Averaged per-example AUROC/AUPRC of a trained probe on the dataset's
/// held-out split, scoring every catalog block for each example.
pub fn evaluate_classifier(
    model: &ClassifierModel,
    catalog: &Catalog,
    ds: &RouteDataset,
) -> Result<(f64, f64)> {
    if ds.holdout().is_empty() {
        return Err(Error::Config("dataset has no held-out split".to_owned()));
    }
    let block_dense: Vec<Vec<f64>> = (0..catalog.n_blocks() as u32)
        .map(|b| catalog.block_fingerprint(b, model.fp_radius, model.fp_dim).dense())
        .collect();
    let product_dense: Vec<Vec<f64>> = ds
        .examples()
        .iter()
        .map(|ex| {
            let mol = parse_smiles(ex.product.as_str())?;
            Ok(crate::chem::morgan_count_fp(&mol, model.fp_radius, model.fp_dim).dense())
        })
        .collect::<Result<_>>()?;
    holdout_metrics(model, ds, &block_dense, &product_dense)
}

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

/// Rank-sum AUROC with tie-averaged ranks; `None` when single-class.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "length mismatch");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = crate::neural::ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Average precision over the score-descending order (ties broken by
/// index); `None` when single-class.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "length mismatch");
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    Some(ap / n_pos as f64)
}

// ---------------------------------------------------------------------------
// Filter construction from models
// ---------------------------------------------------------------------------

/// Blocks the probe scores strictly above `mu` for this query.
pub fn classifier_filter(
    model: &ClassifierModel,
    catalog: &Catalog,
    query: &CountFingerprint,
    mu: f64,
) -> Vec<u32> {
    assert_eq!(query.dim(), model.fp_dim, "query fingerprint dim mismatch");
    let q = query.dense();
    (0..catalog.n_blocks() as u32)
        .filter(|&b| {
            let fp = catalog.block_fingerprint(b, model.fp_radius, model.fp_dim);
            crate::neural::sigmoid(model.logit(&q, &fp.dense())) > mu
        })
        .collect()
}

pub fn classifier_block_filter(
    model: &ClassifierModel,
    catalog: &Catalog,
    query: &CountFingerprint,
    mu: f64,
    epsilon: f64,
) -> Result<BlockFilter> {
    BlockFilter::from_ids(
        classifier_filter(model, catalog, query, mu),
        catalog.n_blocks(),
        epsilon,
        FilterProvenance::Classifier,
    )
}

/// Per-block table of the `k` most Tanimoto-similar other blocks,
/// similarity descending with ties broken by ascending id.
pub fn mine_neighbors(catalog: &Catalog, radius: u32, dim: u32, k: usize) -> Vec<Vec<u32>> {
    let fps: Vec<_> =
        (0..catalog.n_blocks() as u32).map(|b| catalog.block_fingerprint(b, radius, dim)).collect();
    (0..catalog.n_blocks())
        .map(|b| {
            let mut others: Vec<(f64, u32)> = (0..catalog.n_blocks())
                .filter(|&o| o != b)
                .map(|o| (tanimoto(&fps[b], &fps[o]), o as u32))
                .collect();
            others.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            others.truncate(k);
            others.into_iter().map(|(_, id)| id).collect()
        })
        .collect()
}

/// The `k` highest-scoring blocks under the additive model's per-block
/// head (ties by ascending id), returned as an ascending id set.
pub fn nam_top_k_filter(nam: &NamModel, catalog: &Catalog, k: usize) -> Vec<u32> {
    let mut scored: Vec<(f64, u32)> = (0..catalog.n_blocks() as u32)
        .map(|b| {
            (nam.block_score(&catalog.block_fingerprint(b, nam.fp_radius(), nam.fp_dim())), b)
        })
        .collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    scored.truncate(k);
    let mut ids: Vec<u32> = scored.into_iter().map(|(_, id)| id).collect();
    ids.sort_unstable();
    ids
}

pub fn nam_block_filter(
    nam: &NamModel,
    catalog: &Catalog,
    k: usize,
    epsilon: f64,
) -> Result<BlockFilter> {
    BlockFilter::from_ids(
        nam_top_k_filter(nam, catalog, k),
        catalog.n_blocks(),
        epsilon,
        FilterProvenance::Nam,
    )
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_reaction;
    use std::collections::BTreeMap;

    fn fixture_catalog() -> Catalog {
        let templates = vec![
            parse_reaction("amide", "[C:1](=O)[OH].[N;H2:2]>>[C:1](=O)[N:2]").unwrap(),
            parse_reaction("ester", "[C:1](=O)[OH].[C;!H0:3][O;H1:2]>>[C:1](=O)[O:2][C:3]")
                .unwrap(),
        ];
        let lines = [
            "CC(=O)O",
            "NCCO",
            "NCC",
            "OCCO",
            "CCO",
            "OC(=O)CCC(=O)O",
            "CC(C)O",
            "NCC(C)C",
            "CCC(=O)O",
            "NCCC",
        ];
        Catalog::from_lines(lines, templates).unwrap().0
    }

    fn fp(pairs: &[(u32, u32)]) -> CountFingerprint {
        CountFingerprint::from_counts(16, pairs.iter().copied().collect::<BTreeMap<_, _>>())
    }

    #[test]
    fn sim_ratio_hand_values() {
        let query = fp(&[(0, 2), (1, 2)]);
        assert_eq!(sim_ratio(&query, &query), 1.0);
        assert_eq!(sim_ratio(&fp(&[(2, 3)]), &query), 0.0);
        // Half the block's counts fall inside the query: exactly 0.5,
        // which the strict threshold excludes.
        let half = fp(&[(0, 1), (2, 1)]);
        assert_eq!(sim_ratio(&half, &query), 0.5);
        assert_eq!(sim_ratio(&CountFingerprint::empty(16), &query), 0.0);
    }

    #[test]
    fn sim_filter_is_strict() {
        let catalog = fixture_catalog();
        let query = catalog.block_fingerprint(0, 2, 2048);
        let ids = sim_filter(&catalog, &query, 2, 0.5);
        // The query block itself always passes (ratio 1).
        assert!(ids.contains(&0));
        // Threshold 1.0 excludes even the identical block (strict >).
        assert!(!sim_filter(&catalog, &query, 2, 1.0).contains(&0));
    }

    #[test]
    fn filter_construction_validates() {
        assert!(BlockFilter::from_ids([0, 5], 6, 0.1, FilterProvenance::Sim).is_ok());
        assert!(BlockFilter::from_ids([6], 6, 0.1, FilterProvenance::Sim).is_err());
        assert!(BlockFilter::from_ids([0], 6, 1.5, FilterProvenance::Sim).is_err());
        let f = BlockFilter::from_ids([2, 0, 2], 4, 0.25, FilterProvenance::Nam).unwrap();
        assert_eq!(f.members(), vec![0, 2]);
        assert_eq!(f.n_members(), 2);
        assert!(f.contains(0) && !f.contains(1));
        assert_eq!(f.epsilon(), 0.25);
        let u = BlockFilter::unfiltered(3);
        assert_eq!(u.members(), vec![0, 1, 2]);
        assert_eq!(u.provenance(), FilterProvenance::None);
    }

    #[test]
    fn epsilon_sample_follows_the_two_branch_law() {
        let filter = BlockFilter::from_ids([0, 1, 2], 10, 0.1, FilterProvenance::Sim).unwrap();
        let space: Vec<u32> = (0..10).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut counts = [0u32; 10];
        for _ in 0..n {
            counts[epsilon_sample(&space, &filter, &mut rng).unwrap() as usize] += 1;
        }
        // Marginal: members get 0.9/3 + 0.1/10, the rest 0.1/10.
        let expect = |b: usize| if b < 3 { 0.9 / 3.0 + 0.01 } else { 0.01 };
        let tv: f64 = (0..10)
            .map(|b| (counts[b] as f64 / n as f64 - expect(b)).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
        // Fallback frequency estimated from out-of-filter draws.
        let outside: u32 = counts[3..].iter().sum();
        let fallback = (outside as f64 / n as f64) / 0.7;
        assert!((fallback - 0.1).abs() < 0.01, "fallback rate {fallback}");
    }

    #[test]
    fn epsilon_sample_edge_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // ε = 0 with nonempty intersection: always a member.
        let strict = BlockFilter::from_ids([4], 10, 0.0, FilterProvenance::Sim).unwrap();
        let space: Vec<u32> = (0..10).collect();
        for _ in 0..200 {
            assert_eq!(epsilon_sample(&space, &strict, &mut rng), Some(4));
        }
        // Empty intersection: uniform over the space regardless of ε.
        let disjoint = BlockFilter::from_ids([9], 10, 0.0, FilterProvenance::Sim).unwrap();
        let narrow = [0u32, 1, 2];
        let mut seen = HashSet::new();
        for _ in 0..200 {
            seen.insert(epsilon_sample(&narrow, &disjoint, &mut rng).unwrap());
        }
        assert_eq!(seen.len(), 3);
        assert_eq!(epsilon_sample(&[], &strict, &mut rng), None);
    }

    #[test]
    fn dataset_products_are_unique_with_bounded_block_sets() {
        let catalog = fixture_catalog();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = generate_route_dataset(&mut rng, &catalog, 40, 3, 0.1).unwrap();
        assert_eq!(ds.len(), 40);
        let keys: HashSet<_> = ds.examples().iter().map(|e| &e.product).collect();
        assert_eq!(keys.len(), 40);
        for ex in ds.examples() {
            assert!(!ex.blocks.is_empty());
            assert!(ex.blocks.len() <= 4, "3 reactions bound 4 leaves");
            assert!(ex.blocks.windows(2).all(|w| w[0] < w[1]), "sorted unique ids");
        }
        assert_eq!(ds.holdout().len(), 4);
        let train = ds.train_indices();
        assert_eq!(train.len() + ds.holdout().len(), 40);
    }

    #[test]
    fn dataset_generation_is_seed_deterministic() {
        let catalog = fixture_catalog();
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_route_dataset(&mut rng, &catalog, 25, 3, 0.2).unwrap()
        };
        let (a, b) = (gen(7), gen(7));
        assert_eq!(
            a.examples().iter().map(|e| e.product.as_str()).collect::<Vec<_>>(),
            b.examples().iter().map(|e| e.product.as_str()).collect::<Vec<_>>()
        );
        assert_eq!(a.holdout(), b.holdout());
        assert_ne!(
            gen(8).examples().iter().map(|e| e.product.as_str()).collect::<Vec<_>>(),
            a.examples().iter().map(|e| e.product.as_str()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn dataset_round_trips_through_jsonl() {
        let catalog = fixture_catalog();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ds = generate_route_dataset(&mut rng, &catalog, 15, 3, 0.2).unwrap();
        let dir = std::env::temp_dir().join(format!("synga-bf-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("routes.jsonl");
        ds.save(&path).unwrap();
        let mut loaded = RouteDataset::load(&path, &catalog).unwrap();
        assert_eq!(loaded.len(), ds.len());
        for (a, b) in loaded.examples().iter().zip(ds.examples()) {
            assert_eq!(a.product, b.product);
            assert_eq!(a.blocks, b.blocks);
        }
        assert!(loaded.holdout().is_empty());
        loaded.split(0.2, 9).unwrap();
        assert_eq!(loaded.holdout().len(), 3);
    }

    #[test]
    fn hard_negative_sampling_never_emits_a_member() {
        let catalog = fixture_catalog();
        let neighbors = mine_neighbors(&catalog, 2, 512, 5);
        let member_set = vec![1u32, 3, 6];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut saw_negative = false;
        for _ in 0..5000 {
            let (block, label) =
                sample_training_pair(&mut rng, &member_set, catalog.n_blocks(), Some(&neighbors));
            if label == 0.0 {
                saw_negative = true;
                assert!(member_set.binary_search(&block).is_err());
            } else {
                assert!(member_set.binary_search(&block).is_ok());
            }
        }
        assert!(saw_negative);
    }

    #[test]
    fn mine_neighbors_matches_brute_force_and_excludes_self() {
        let catalog = fixture_catalog();
        let k = 4;
        let table = mine_neighbors(&catalog, 2, 1024, k);
        let fps: Vec<_> =
            (0..catalog.n_blocks() as u32).map(|b| catalog.block_fingerprint(b, 2, 1024)).collect();
        for (b, row) in table.iter().enumerate() {
            assert_eq!(row.len(), k.min(catalog.n_blocks() - 1));
            assert!(!row.contains(&(b as u32)));
            let mut brute: Vec<(f64, u32)> = (0..catalog.n_blocks())
                .filter(|&o| o != b)
                .map(|o| (tanimoto(&fps[b], &fps[o]), o as u32))
                .collect();
            brute.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            let expect: Vec<u32> = brute.into_iter().take(k).map(|(_, id)| id).collect();
            assert_eq!(row, &expect);
        }
        // k beyond the catalog returns all others.
        let all = mine_neighbors(&catalog, 2, 1024, 500);
        assert!(all.iter().all(|row| row.len() == catalog.n_blocks() - 1));
    }

    fn toy_dataset(catalog: &Catalog, n: usize, seed: u64) -> RouteDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate_route_dataset(&mut rng, catalog, n, 3, 0.25).unwrap()
    }

    fn desk_cfg() -> ClassifierConfig {
        ClassifierConfig {
            width: 16,
            fp_dim: 256,
            steps: 400,
            batch_size: 16,
            learning_rate: 3e-3,
            ..ClassifierConfig::default()
        }
    }

    #[test]
    fn untrained_probe_ranks_at_chance() {
        let catalog = fixture_catalog();
        let ds = toy_dataset(&catalog, 60, 6);
        let cfg = ClassifierConfig { steps: 1, ..desk_cfg() };
        let (_, report) = train_block_classifier(&catalog, &ds, &cfg).unwrap();
        assert!(
            (report.holdout_auroc - 0.5).abs() < 0.15,
            "one-step AUROC {} far from chance",
            report.holdout_auroc
        );
    }

    #[test]
    fn training_reduces_loss_and_beats_chance() {
        let catalog = fixture_catalog();
        let ds = toy_dataset(&catalog, 60, 6);
        let (model, report) = train_block_classifier(&catalog, &ds, &desk_cfg()).unwrap();
        let early: f64 = report.losses[..20].iter().sum::<f64>() / 20.0;
        let late: f64 = report.losses[report.losses.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(late < early, "loss did not decrease: {early} → {late}");
        assert!(report.holdout_auroc > 0.75, "AUROC {}", report.holdout_auroc);
        assert!(report.holdout_auprc > 0.4, "AUPRC {}", report.holdout_auprc);
        // Round trip.
        let dir = std::env::temp_dir().join(format!("synga-bfm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("probe.bin");
        model.save(&path).unwrap();
        let loaded = ClassifierModel::load(&path).unwrap();
        assert_eq!(loaded.net().params(), model.net().params());
    }

    #[test]
    fn training_rejects_bad_datasets() {
        let catalog = fixture_catalog();
        let mut ds = toy_dataset(&catalog, 20, 6);
        ds.holdout.clear();
        assert!(matches!(
            train_block_classifier(&catalog, &ds, &desk_cfg()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn classifier_filter_is_antitone_in_mu() {
        let catalog = fixture_catalog();
        let ds = toy_dataset(&catalog, 40, 6);
        let cfg = ClassifierConfig { steps: 50, ..desk_cfg() };
        let (model, _) = train_block_classifier(&catalog, &ds, &cfg).unwrap();
        let query = catalog.block_fingerprint(0, cfg.fp_radius, cfg.fp_dim);
        assert_eq!(
            classifier_filter(&model, &catalog, &query, 0.0).len(),
            catalog.n_blocks()
        );
        assert!(classifier_filter(&model, &catalog, &query, 1.0).is_empty());
        let mut prev: Option<HashSet<u32>> = None;
        for mu in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let ids: HashSet<u32> =
                classifier_filter(&model, &catalog, &query, mu).into_iter().collect();
            if let Some(p) = &prev {
                assert!(ids.is_subset(p), "raising mu added blocks at {mu}");
            }
            prev = Some(ids);
        }
    }

    #[test]
    fn nam_top_k_matches_the_sort_oracle() {
        use crate::neural::NamTrainConfig;
        let catalog = fixture_catalog();
        let cfg = NamTrainConfig { width: 8, layers: 2, fp_dim: 128, ..NamTrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let nam = NamModel::init(&cfg, &mut rng).unwrap();
        let scores: Vec<f64> = (0..catalog.n_blocks() as u32)
            .map(|b| nam.block_score(&catalog.block_fingerprint(b, 2, 128)))
            .collect();
        let mut oracle: Vec<u32> = (0..catalog.n_blocks() as u32).collect();
        oracle.sort_by(|&a, &b| {
            scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b))
        });
        for k in [1, 3, catalog.n_blocks(), catalog.n_blocks() + 10] {
            let got = nam_top_k_filter(&nam, &catalog, k);
            let mut expect: Vec<u32> =
                oracle.iter().copied().take(k.min(catalog.n_blocks())).collect();
            expect.sort_unstable();
            assert_eq!(got, expect, "k = {k}");
        }
        // k = 1 is the argmax block.
        assert_eq!(nam_top_k_filter(&nam, &catalog, 1), vec![oracle[0]]);
    }

    #[test]
    fn ranking_metrics_hand_fixtures() {
        // Perfect separation.
        let scores = [0.9, 0.8, 0.3, 0.1];
        let labels = [true, true, false, false];
        assert_eq!(auroc(&scores, &labels), Some(1.0));
        assert_eq!(auprc(&scores, &labels), Some(1.0));
        // Reversed.
        let labels_rev = [false, false, true, true];
        assert_eq!(auroc(&scores, &labels_rev), Some(0.0));
        // One mistake: positives at ranks 1 and 3 of 4.
        let labels_mix = [true, false, true, false];
        assert_eq!(auroc(&scores, &labels_mix), Some(0.75));
        let ap = auprc(&scores, &labels_mix).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        // Ties average: all scores equal → AUROC ½.
        assert_eq!(auroc(&[0.5; 4], &labels_mix), Some(0.5));
        // Single-class is undefined.
        assert_eq!(auroc(&scores, &[true; 4]), None);
        assert_eq!(auprc(&scores, &[false; 4]), None);
    }
}
