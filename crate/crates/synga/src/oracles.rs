//! Desk-scale fitness oracles and run-evaluation metrics.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::Catalog;
use crate::chem::{
    morgan_count_fp, murcko_scaffold, tanimoto, CanonicalKey, CountFingerprint, MoleculeGraph,
};
use crate::synthesis::Route;
use crate::{Error, Result};

/// Fingerprint settings for analog search.
pub const ANALOG_FP_RADIUS: u32 = 2;
pub const ANALOG_FP_DIM: u32 = 4096;

/// Element-count map keyed by symbol; implicit hydrogens count under "H".
pub type Formula = BTreeMap<String, u32>;

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

enum Scorer {
    /// 0.9 · fingerprint similarity + 0.1 · scaffold similarity to a query.
    Analog { query_fp: CountFingerprint, query_scaffold: CountFingerprint },
    /// 1 − L1(counts − target)/L1(target), clamped to [0, 1].
    Formula { target: Formula, norm: f64 },
    /// Mean of a route's leaf-block scalars; needs the route, not just the product.
    AdditiveBlock { weights: Vec<f64> },
}

struct CacheState {
    map: HashMap<CanonicalKey, f64>,
    misses: u64,
}

/// A named fitness function with a product-keyed cache.
///
/// The call counter increments only on cache misses, so it equals the number
/// of unique products scored — the budget unit used by the optimizers.
pub struct Oracle {
    name: String,
    scorer: Scorer,
    state: Mutex<CacheState>,
}

impl Oracle {
    fn new(name: &str, scorer: Scorer) -> Oracle {
        Oracle {
            name: name.to_owned(),
            scorer,
            state: Mutex::new(CacheState { map: HashMap::new(), misses: 0 }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Unique evaluations so far (cache misses).
    pub fn calls(&self) -> u64 {
        self.state.lock().expect("oracle lock").misses
    }

    /// The per-block scalars of an additive-block oracle.
    pub fn block_weights(&self) -> Option<&[f64]> {
        match &self.scorer {
            Scorer::AdditiveBlock { weights } => Some(weights),
            _ => None,
        }
    }

    /// Score a route's product, caching by canonical key.
    pub fn evaluate_route(&self, catalog: &Catalog, route: &Route) -> Result<f64> {
        let key = route.product_key();
        if let Some(hit) = self.cached(key) {
            return Ok(hit);
        }
        let value = match &self.scorer {
            Scorer::AdditiveBlock { weights } => {
                let leaves = route.leaf_blocks();
                let mut sum = 0.0;
                for &block in &leaves {
                    sum += *weights.get(block as usize).ok_or_else(|| Error::Oracle {
                        key: key.as_str().to_owned(),
                        msg: format!("block {block} has no assigned scalar"),
                    })?;
                }
                sum / leaves.len() as f64
            }
            _ => self.score_molecule(route.product_mol(catalog)),
        };
        Ok(self.commit(key, value))
    }

    /// Score a bare molecule. Route-additive oracles cannot do this.
    pub fn evaluate_molecule(&self, key: &CanonicalKey, mol: &MoleculeGraph) -> Result<f64> {
        if matches!(self.scorer, Scorer::AdditiveBlock { .. }) {
            return Err(Error::Oracle {
                key: key.as_str().to_owned(),
                msg: "additive-block fitness needs a synthesis route".to_owned(),
            });
        }
        if let Some(hit) = self.cached(key) {
            return Ok(hit);
        }
        let value = self.score_molecule(mol);
        Ok(self.commit(key, value))
    }

    fn cached(&self, key: &CanonicalKey) -> Option<f64> {
        self.state.lock().expect("oracle lock").map.get(key).copied()
    }

    // Scores are deterministic, so a racing duplicate computes the same value;
    // only the first insert counts toward the budget.
    fn commit(&self, key: &CanonicalKey, value: f64) -> f64 {
        let mut state = self.state.lock().expect("oracle lock");
        if let Some(&prior) = state.map.get(key) {
            return prior;
        }
        state.map.insert(key.clone(), value);
        state.misses += 1;
        value
    }

    fn score_molecule(&self, mol: &MoleculeGraph) -> f64 {
        match &self.scorer {
            Scorer::Analog { query_fp, query_scaffold } => {
                let fp = morgan_count_fp(mol, ANALOG_FP_RADIUS, ANALOG_FP_DIM);
                let scaffold = scaffold_fp(mol);
                0.9 * tanimoto(&fp, query_fp)
                    + 0.1 * scaffold_term(&scaffold, query_scaffold)
            }
            Scorer::Formula { target, norm } => {
                let counts = molecular_formula(mol);
                let union: std::collections::BTreeSet<&String> =
                    target.keys().chain(counts.keys()).collect();
                let dist: f64 = union
                    .into_iter()
                    .map(|key| {
                        let t = f64::from(target.get(key).copied().unwrap_or(0));
                        let c = f64::from(counts.get(key).copied().unwrap_or(0));
                        (t - c).abs()
                    })
                    .sum();
                (1.0 - dist / norm).clamp(0.0, 1.0)
            }
            Scorer::AdditiveBlock { .. } => unreachable!("guarded by evaluate_molecule"),
        }
    }
}

impl crate::genetic::Fitness for Oracle {
    fn evaluate(&self, catalog: &Catalog, route: &Route) -> Result<f64> {
        self.evaluate_route(catalog, route)
    }
}

/// Both scaffold-free → 1; exactly one → 0; otherwise Tanimoto.
fn scaffold_term(a: &CountFingerprint, b: &CountFingerprint) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => tanimoto(a, b),
    }
}

fn scaffold_fp(mol: &MoleculeGraph) -> CountFingerprint {
    match murcko_scaffold(mol) {
        Some(scaffold) => morgan_count_fp(&scaffold, ANALOG_FP_RADIUS, ANALOG_FP_DIM),
        None => CountFingerprint::empty(ANALOG_FP_DIM),
    }
}

/// Similarity to a query molecule: 0.9 on full fingerprints, 0.1 on scaffolds.
pub fn analog_fitness(query: &str) -> Result<Oracle> {
    let mol = crate::chem::parse_smiles(query)?;
    let query_fp = morgan_count_fp(&mol, ANALOG_FP_RADIUS, ANALOG_FP_DIM);
    let query_scaffold = scaffold_fp(&mol);
    Ok(Oracle::new("analog", Scorer::Analog { query_fp, query_scaffold }))
}

/// Closeness to a target element-count formula (hydrogens included).
pub fn formula_oracle(target: Formula) -> Result<Oracle> {
    let norm: f64 = target.values().map(|&c| f64::from(c)).sum();
    if norm == 0.0 {
        return Err(Error::Config("formula target must contain at least one atom".to_owned()));
    }
    Ok(Oracle::new("formula", Scorer::Formula { target, norm }))
}

/// Ground-truth additive fitness: a seeded scalar in [0, 1) per catalog block;
/// a route scores the mean over its leaves.
pub fn additive_block_oracle(seed: u64, n_blocks: usize) -> Oracle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..n_blocks).map(|_| rng.gen::<f64>()).collect();
    additive_block_oracle_with(weights)
}

/// Additive-block oracle over explicit scalars (tests pin exact values).
pub fn additive_block_oracle_with(weights: Vec<f64>) -> Oracle {
    Oracle::new("additive-block", Scorer::AdditiveBlock { weights })
}

// ---------------------------------------------------------------------------
// Formulas
// ---------------------------------------------------------------------------

/// Element counts of a molecule, implicit hydrogens under "H".
pub fn molecular_formula(mol: &MoleculeGraph) -> Formula {
    let mut counts = Formula::new();
    for (element, count) in mol.element_counts() {
        *counts.entry(element.symbol().to_owned()).or_insert(0) += count;
    }
    let h = mol.total_h();
    if h > 0 {
        *counts.entry("H".to_owned()).or_insert(0) += h;
    }
    counts
}

/// Parse a Hill-style formula such as "C7H8" or "C2H6O" into counts.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let bytes = text.as_bytes();
    let mut counts = Formula::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_uppercase() {
            return Err(Error::parse(i, "expected an element symbol"));
        }
        let mut end = i + 1;
        if end < bytes.len() && bytes[end].is_ascii_lowercase() {
            end += 1;
        }
        let symbol = &text[i..end];
        if symbol != "H" && crate::chem::Element::from_symbol(symbol).is_none() {
            return Err(Error::parse(i, format!("unknown element `{symbol}`")));
        }
        i = end;
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let count: u32 = if start == i {
            1
        } else {
            text[start..i]
                .parse()
                .map_err(|_| Error::parse(start, "element count out of range"))?
        };
        if count == 0 {
            return Err(Error::parse(start, "element count must be positive"));
        }
        *counts.entry(symbol.to_owned()).or_insert(0) += count;
    }
    if counts.is_empty() {
        return Err(Error::parse(0, "empty formula"));
    }
    Ok(counts)
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Area under the running top-k-mean curve, trapezoidal at `interval` spacing,
/// normalized so a constant score s yields exactly s.
///
/// Scores are taken in evaluation order. Checkpoints sit at t = interval,
/// 2·interval, …, plus the final t; the first checkpoint contributes a full
/// rectangle so the estimate is defined from t = 0.
pub fn top_k_auc(scores: &[f64], k: usize, interval: usize) -> f64 {
    assert!(!scores.is_empty(), "top_k_auc needs at least one score");
    assert!(k >= 1 && interval >= 1);
    let budget = scores.len();
    let mut sorted: Vec<f64> = Vec::with_capacity(budget);
    let mut checkpoints: Vec<(usize, f64)> = Vec::new();
    for (t, &score) in scores.iter().enumerate().map(|(i, s)| (i + 1, s)) {
        let at = sorted.partition_point(|&s| s > score);
        sorted.insert(at, score);
        if t % interval == 0 || t == budget {
            let take = k.min(t);
            let mean = sorted[..take].iter().sum::<f64>() / take as f64;
            checkpoints.push((t, mean));
        }
    }
    let (t1, v1) = checkpoints[0];
    let mut area = v1 * t1 as f64;
    for pair in checkpoints.windows(2) {
        let (ta, va) = pair[0];
        let (tb, vb) = pair[1];
        area += 0.5 * (va + vb) * (tb - ta) as f64;
    }
    area / budget as f64
}

/// Greedy leader clustering over fingerprints already sorted by descending
/// score: each item joins the first founder with Tanimoto ≥ cutoff, else
/// founds a new cluster. Returns a cluster id per item, founders numbered
/// in discovery order.
pub fn greedy_cluster(fps: &[CountFingerprint], cutoff: f64) -> Vec<usize> {
    let mut founders: Vec<usize> = Vec::new();
    let mut assignment = Vec::with_capacity(fps.len());
    for (i, fp) in fps.iter().enumerate() {
        let joined = founders
            .iter()
            .position(|&rep| tanimoto(fp, &fps[rep]) >= cutoff);
        match joined {
            Some(cluster) => assignment.push(cluster),
            None => {
                founders.push(i);
                assignment.push(founders.len() - 1);
            }
        }
    }
    assignment
}

/// Mean pairwise (1 − Tanimoto) over a set; fewer than two items → 0.
pub fn mean_pairwise_diversity(fps: &[CountFingerprint]) -> f64 {
    if fps.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut pairs = 0u64;
    for i in 0..fps.len() {
        for j in i + 1..fps.len() {
            sum += 1.0 - tanimoto(&fps[i], &fps[j]);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

// ---------------------------------------------------------------------------
