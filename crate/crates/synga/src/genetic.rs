//! Crossover, mutation dispatch, inverse-rank selection, and the GA main loop.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::chem::{molecular_weight, CanonicalKey, MoleculeGraph};
use crate::synthesis::{
    enumerate_subtrees, grow_once, pick_block, rerun, sample_route_filtered, BlockPicker, Route,
    RouteNode, MAX_INTERNAL_NODES, MAX_PRODUCT_WEIGHT,
};
use crate::{Error, Result};

/// Consecutive all-failed generations tolerated before the run aborts
/// instead of spinning on an exhausted search space.
pub const STALL_LIMIT: usize = 1000;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// GA hyperparameters; defaults follow the desk-scale tuning.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    /// Routes sampled into the initial population (n₀).
    pub initial_size: usize,
    /// Survivors kept by elitist truncation (n).
    pub population_size: usize,
    /// Offspring attempted per generation (m).
    pub offspring_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Unique fitness evaluations allowed (B).
    pub budget: usize,
    /// Weights for Grow, Shrink, Rerun, ChangeInternal, ChangeLeaf.
    pub mutation_weights: [f64; 5],
    /// Attempts per sampled mutation action.
    pub retry_limit: usize,
    /// Growth-step cap when sampling initial routes.
    pub max_route_steps: usize,
    /// Generations to run after the initial population; 0 means until the
    /// budget is spent.
    pub max_generations: u64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> GaConfig {
        GaConfig {
            initial_size: 500,
            population_size: 500,
            offspring_size: 5,
            crossover_rate: 0.8,
            mutation_rate: 0.5,
            budget: 1000,
            mutation_weights: [1.0, 1.0, 2.0, 2.0, 2.0],
            retry_limit: 10,
            max_route_steps: MAX_INTERNAL_NODES,
            max_generations: 0,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_size", self.initial_size),
            ("population_size", self.population_size),
            ("offspring_size", self.offspring_size),
            ("budget", self.budget),
            ("retry_limit", self.retry_limit),
            ("max_route_steps", self.max_route_steps),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, rate) in
            [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)]
        {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {rate}")));
            }
        }
        let sum: f64 = self.mutation_weights.iter().sum();
        if self.mutation_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || sum <= 0.0 {
            return Err(Error::Config(
                "mutation_weights must be nonnegative with a positive sum".to_owned(),
            ));
        }
        if self.budget < self.initial_size {
            return Err(Error::Config(format!(
                "budget {} is below the initial population size {}",
                self.budget, self.initial_size
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Fitness
// ---------------------------------------------------------------------------

/// A fitness function over routes; consulted once per unique product.
pub trait Fitness: Sync {
    fn evaluate(&self, catalog: &Catalog, route: &Route) -> Result<f64>;
}

impl<F> Fitness for F
where
    F: Fn(&Catalog, &Route) -> Result<f64> + Sync,
{
    fn evaluate(&self, catalog: &Catalog, route: &Route) -> Result<f64> {
        self(catalog, route)
    }
}

// ---------------------------------------------------------------------------
// Population and history
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Individual {
    pub route: Route,
    pub fitness: f64,
    /// Oracle-call index at which this product was first scored (1-based).
    pub discovery: u64,
}

/// Individuals sorted by descending fitness, ties by earlier discovery.
#[derive(Clone, Debug, Default)]
pub struct Population {
    members: Vec<Individual>,
}

impl Population {
    pub fn from_members(mut members: Vec<Individual>) -> Population {
        sort_members(&mut members);
        Population { members }
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&Individual> {
        self.members.first()
    }

    /// Elitist update: merge offspring, keep the n fittest.
    pub fn merge_truncate(&mut self, offspring: Vec<Individual>, n: usize) {
        self.members.extend(offspring);
        sort_members(&mut self.members);
        self.members.truncate(n);
    }
}

fn sort_members(members: &mut [Individual]) {
    members.sort_by(|a, b| {
        b.fitness.total_cmp(&a.fitness).then(a.discovery.cmp(&b.discovery))
    });
}

#[derive(Clone, Debug)]
pub struct HistoryEntry {
    /// 1-based oracle-call index.
    pub index: u64,
    pub key: CanonicalKey,
    pub fitness: f64,
    pub route: Route,
}

/// Insertion-ordered record of every unique fitness evaluation.
#[derive(Clone, Debug, Default)]
pub struct RunHistory {
    entries: Vec<HistoryEntry>,
    by_key: HashMap<CanonicalKey, usize>,
}

impl RunHistory {
    pub fn new() -> RunHistory {
        RunHistory::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &CanonicalKey) -> bool {
        self.by_key.contains_key(key)
    }

    pub fn get(&self, key: &CanonicalKey) -> Option<&HistoryEntry> {
        self.by_key.get(key).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    /// Fitness values in evaluation order.
    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.fitness).collect()
    }

    /// Highest-fitness entry, earliest on ties.
    pub fn best(&self) -> Option<&HistoryEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.fitness.total_cmp(&b.fitness).then(b.index.cmp(&a.index)))
    }

    pub(crate) fn record(&mut self, key: CanonicalKey, fitness: f64, route: Route) -> u64 {
        debug_assert!(!self.by_key.contains_key(&key), "history keys are unique");
        let index = self.entries.len() as u64 + 1;
        self.by_key.insert(key.clone(), self.entries.len());
        self.entries.push(HistoryEntry { index, key, fitness, route });
        index
    }
}

// ---------------------------------------------------------------------------
// Parent selection
// ---------------------------------------------------------------------------

/// Draws k distinct members, each round weighted by 1/rank in the full
/// sorted population; returns indices in draw order.
pub fn inverse_rank_sample<R: Rng>(
    pop: &Population,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if k > pop.len() {
        return Err(Error::Run(format!(
            "cannot draw {k} distinct parents from a population of {}",
            pop.len()
        )));
    }
    let mut remaining: Vec<usize> = (0..pop.len()).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = remaining.iter().map(|&i| 1.0 / (i + 1) as f64).sum();
        let mut x = rng.gen::<f64>() * total;
        let mut chosen = remaining.len() - 1;
        for (pos, &i) in remaining.iter().enumerate() {
            let w = 1.0 / (i + 1) as f64;
            if x < w {
                chosen = pos;
                break;
            }
            x -= w;
        }
        out.push(remaining.remove(chosen));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Crossover
// ---------------------------------------------------------------------------

/// Products of `t` on `inputs` that respect the weight cap.
fn admissible_products(
    catalog: &Catalog,
    t: u32,
    inputs: &[(&CanonicalKey, &MoleculeGraph)],
) -> Vec<(CanonicalKey, MoleculeGraph)> {
    match catalog.apply(t, inputs) {
        Ok(products) => products
            .iter()
            .filter(|(_, m)| molecular_weight(m) <= MAX_PRODUCT_WEIGHT)
            .cloned()
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// Joins a uniformly chosen compatible subtree pair under a new binary
/// reaction root with a uniformly chosen (template, product); `None` when
/// no pair admits a reaction within the depth and weight caps.
pub fn crossover<R: Rng>(
    t1: &Route,
    t2: &Route,
    rng: &mut R,
    catalog: &Catalog,
) -> Option<Route> {
    let subs1 = enumerate_subtrees(t1);
    let subs2 = enumerate_subtrees(t2);
    let binary: Vec<u32> =
        (0..catalog.n_templates() as u32).filter(|&t| catalog.template(t).arity() == 2).collect();
    if binary.is_empty() {
        return None;
    }
    let mut eligible: Vec<(usize, usize)> = Vec::new();
    for (i, s1) in subs1.iter().enumerate() {
        for (j, s2) in subs2.iter().enumerate() {
            if s1.n_internal() + s2.n_internal() + 1 > MAX_INTERNAL_NODES {
                continue;
            }
            let inputs =
                [(s1.product_key(), s1.product_mol(catalog)), (s2.product_key(), s2.product_mol(catalog))];
            if binary.iter().any(|&t| !admissible_products(catalog, t, &inputs).is_empty()) {
                eligible.push((i, j));
            }
        }
    }
    if eligible.is_empty() {
        return None;
    }
    let (i, j) = eligible[rng.gen_range(0..eligible.len())];
    let (s1, s2) = (&subs1[i], &subs2[j]);
    let inputs =
        [(s1.product_key(), s1.product_mol(catalog)), (s2.product_key(), s2.product_mol(catalog))];
    let mut combos: Vec<(u32, CanonicalKey)> = Vec::new();
    for &t in &binary {
        for (key, _) in admissible_products(catalog, t, &inputs) {
            combos.push((t, key));
        }
    }
    let (t, product) = combos[rng.gen_range(0..combos.len())].clone();
    Route::reaction(catalog, t, vec![s1.clone(), s2.clone()], &product).ok()
}

// ---------------------------------------------------------------------------
// Mutation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MutationAction {
    Grow,
    Shrink,
    Rerun,
    ChangeInternal,
    ChangeLeaf,
}

pub const MUTATION_ACTIONS: [MutationAction; 5] = [
    MutationAction::Grow,
    MutationAction::Shrink,
    MutationAction::Rerun,
    MutationAction::ChangeInternal,
    MutationAction::ChangeLeaf,
];

/// Samples an action proportionally to its weight.
pub fn sample_action<R: Rng>(rng: &mut R, weights: &[f64; 5]) -> MutationAction {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0);
    let x = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (&action, &w) in MUTATION_ACTIONS.iter().zip(weights) {
        acc += w;
        if x < acc {
            return action;
        }
    }
    // Float-rounding tail: fall back to the last positively weighted action.
    MUTATION_ACTIONS
        .iter()
        .zip(weights)
        .rev()
        .find(|(_, &w)| w > 0.0)
        .map(|(&a, _)| a)
        .expect("weights have a positive sum")
}

/// Samples one action by weight and retries it up to `retries` times;
/// `None` when every attempt fails its boundary conditions.
pub fn mutate<R: Rng>(
    route: &Route,
    rng: &mut R,
    catalog: &Catalog,
    filter: Option<&BlockPicker>,
    weights: &[f64; 5],
    retries: usize,
) -> Option<Route> {
    let action = sample_action(rng, weights);
    for _ in 0..retries {
        if let Some(t) = apply_mutation(route, rng, catalog, filter, action) {
            return Some(t);
        }
    }
    None
}

/// One attempt of one mutation action.
pub fn apply_mutation<R: Rng>(
    route: &Route,
    rng: &mut R,
    catalog: &Catalog,
    filter: Option<&BlockPicker>,
    action: MutationAction,
) -> Option<Route> {
    match action {
        MutationAction::Grow => grow_once(route, rng, catalog, filter),
        MutationAction::Shrink => shrink_once(route, rng),
        MutationAction::Rerun => rerun_once(route, rng, catalog),
        MutationAction::ChangeInternal => change_internal_once(route, rng, catalog),
        MutationAction::ChangeLeaf => change_leaf_once(route, rng, catalog, filter),
    }
}

/// Replaces the tree by a uniformly chosen child of an internal root.
fn shrink_once<R: Rng>(route: &Route, rng: &mut R) -> Option<Route> {
    let children = match route.root().as_ref() {
        RouteNode::Reaction { children, .. } => children,
        RouteNode::Block { .. } => return None,
    };
    let child = &children[rng.gen_range(0..children.len())];
    Some(Route::from_root(Arc::clone(child)))
}

/// Re-draws intermediate products; an unchanged root product is a failure.
fn rerun_once<R: Rng>(route: &Route, rng: &mut R, catalog: &Catalog) -> Option<Route> {
    let alt = rerun(route, rng, catalog);
    (alt.product_key() != route.product_key()).then_some(alt)
}

/// Swaps one internal node's template for a different one compatible with
/// its children, then re-derives products on the path to the root.
fn change_internal_once<R: Rng>(route: &Route, rng: &mut R, catalog: &Catalog) -> Option<Route> {
    let paths = route.node_paths();
    let internal: Vec<&Vec<usize>> =
        paths.iter().filter(|p| !route.node_at(p).is_leaf()).collect();
    if internal.is_empty() {
        return None;
    }
    let path = internal[rng.gen_range(0..internal.len())];
    let RouteNode::Reaction { template: current, children, .. } = route.node_at(path).as_ref()
    else {
        unreachable!("internal paths select reaction nodes");
    };
    let inputs: Vec<(&CanonicalKey, &MoleculeGraph)> =
        children.iter().map(|c| (c.key(), c.mol(catalog))).collect();
    let options: Vec<u32> = (0..catalog.n_templates() as u32)
        .filter(|&t| {
            t != *current
                && catalog.template(t).arity() == children.len()
                && !admissible_products(catalog, t, &inputs).is_empty()
        })
        .collect();
    if options.is_empty() {
        return None;
    }
    let t = options[rng.gen_range(0..options.len())];
    let products = admissible_products(catalog, t, &inputs);
    let (key, mol) = products[rng.gen_range(0..products.len())].clone();
    let node =
        Arc::new(RouteNode::Reaction { template: t, key, mol, children: children.clone() });
    route.replace_at(catalog, rng, path, node)
}

/// Swaps one leaf for a different block that still reacts with its parent
/// template and sibling (ε-filtered), then re-derives products upward.
fn change_leaf_once<R: Rng>(
    route: &Route,
    rng: &mut R,
    catalog: &Catalog,
    filter: Option<&BlockPicker>,
) -> Option<Route> {
    let paths = route.node_paths();
    let leaves: Vec<&Vec<usize>> = paths.iter().filter(|p| route.node_at(p).is_leaf()).collect();
    let path = leaves[rng.gen_range(0..leaves.len())];
    let RouteNode::Block { block: current, .. } = route.node_at(path).as_ref() else {
        unreachable!("leaf paths select block nodes");
    };
    let candidates: Vec<u32> = if path.is_empty() {
        // A bare-leaf route has no parent constraint: any other block works.
        (0..catalog.n_blocks() as u32)
            .filter(|&b| b != *current && catalog.block(b).weight() <= MAX_PRODUCT_WEIGHT)
            .collect()
    } else {
        let parent = route.node_at(&path[..path.len() - 1]);
        let RouteNode::Reaction { template, children, .. } = parent.as_ref() else {
            unreachable!("leaf parents are reaction nodes");
        };
        let leaf_idx = *path.last().expect("nonempty path");
        let sibling = children.iter().enumerate().find(|(i, _)| *i != leaf_idx).map(|(_, c)| c);
        let mut pool: Vec<u32> = (0..catalog.template(*template).arity() as u8)
            .flat_map(|s| catalog.compatible_blocks(*template, s).iter().copied())
            .collect();
        pool.sort_unstable();
        pool.dedup();
        pool.into_iter()
            .filter(|&b| b != *current && catalog.block(b).weight() <= MAX_PRODUCT_WEIGHT)
            .filter(|&b| {
                let entry = catalog.block(b);
                let inputs: Vec<(&CanonicalKey, &MoleculeGraph)> = match sibling {
                    Some(sib) => {
                        vec![(entry.key(), entry.mol()), (sib.key(), sib.mol(catalog))]
                    }
                    None => vec![(entry.key(), entry.mol())],
                };
                !admissible_products(catalog, *template, &inputs).is_empty()
            })
            .collect()
    };
    let replacement = pick_block(rng, &candidates, filter)?;
    let leaf = Route::leaf(catalog, replacement);
    route.replace_at(catalog, rng, path, Arc::clone(leaf.root()))
}

// ---------------------------------------------------------------------------
// Main loop
// ---------------------------------------------------------------------------

struct OffspringPlan {
    t1: Route,
    t2: Route,
    do_cross: bool,
    do_mut: bool,
    seed: u64,
}

/// Elitist GA over synthesis routes; runs until exactly `budget` unique
/// products have been scored. Deterministic for a fixed seed regardless of
/// worker count: all stochastic choices flow from the master stream or
/// per-offspring child streams, and commits happen in offspring order.
pub fn run_synga(
    cfg: &GaConfig,
    fitness: &dyn Fitness,
    catalog: &Catalog,
    filter: Option<&BlockPicker>,
) -> Result<(Population, RunHistory)> {
    run_synga_seeded(cfg, fitness, catalog, filter, &[])
}

/// [`run_synga`] with a warm-started initial population: `seeds` are scored
/// first (duplicates folded), then random routes top the population up to
/// `initial_size`.
pub fn run_synga_seeded(
    cfg: &GaConfig,
    fitness: &dyn Fitness,
    catalog: &Catalog,
    filter: Option<&BlockPicker>,
    seeds: &[Route],
) -> Result<(Population, RunHistory)> {
    cfg.validate()?;
    if seeds.len() > cfg.initial_size {
        return Err(Error::Config(format!(
            "{} seed routes exceed the initial population size {}",
            seeds.len(),
            cfg.initial_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = RunHistory::new();

    let fill = cfg.initial_size - seeds.len();
    let child_seeds: Vec<u64> = (0..fill).map(|_| rng.gen()).collect();
    let sampled: Vec<Route> = child_seeds
        .into_par_iter()
        .map(|s| {
            let mut child = ChaCha8Rng::seed_from_u64(s);
            sample_route_filtered(&mut child, catalog, cfg.max_route_steps, filter)
        })
        .collect();
    let mut members = Vec::new();
    for route in seeds.iter().cloned().chain(sampled) {
        if history.contains(route.product_key()) || history.len() >= cfg.budget {
            continue;
        }
        let fit = fitness.evaluate(catalog, &route)?;
        let discovery = history.record(route.product_key().clone(), fit, route.clone());
        members.push(Individual { route, fitness: fit, discovery });
    }
    let mut population = Population::from_members(members);
    population.merge_truncate(Vec::new(), cfg.population_size);

    let mut stalled = 0usize;
    let mut generation = 0u64;
    while history.len() < cfg.budget {
        if cfg.max_generations > 0 && generation >= cfg.max_generations {
            break;
        }
        generation += 1;
        let mut plans = Vec::with_capacity(cfg.offspring_size);
        for _ in 0..cfg.offspring_size {
            let k = 2.min(population.len());
            let picks = inverse_rank_sample(&population, k, &mut rng)?;
            let t1 = population.members()[picks[0]].route.clone();
            let t2 = population.members()[*picks.get(1).unwrap_or(&picks[0])].route.clone();
            let do_cross = rng.gen::<f64>() < cfg.crossover_rate;
            let do_mut = do_cross && rng.gen::<f64>() < cfg.mutation_rate;
            plans.push(OffspringPlan { t1, t2, do_cross, do_mut, seed: rng.gen() });
        }
        let candidates: Vec<Option<Route>> = plans
            .into_par_iter()
            .map(|plan| {
                let mut child = ChaCha8Rng::seed_from_u64(plan.seed);
                if plan.do_cross {
                    let t = crossover(&plan.t1, &plan.t2, &mut child, catalog);
                    if plan.do_mut {
                        t.and_then(|x| {
                            mutate(
                                &x,
                                &mut child,
                                catalog,
                                filter,
                                &cfg.mutation_weights,
                                cfg.retry_limit,
                            )
                        })
                    } else {
                        t
                    }
                } else {
                    mutate(
                        &plan.t1,
                        &mut child,
                        catalog,
                        filter,
                        &cfg.mutation_weights,
                        cfg.retry_limit,
                    )
                }
            })
            .collect();

        let mut offspring = Vec::new();
        for cand in candidates.into_iter().flatten() {
            if history.len() >= cfg.budget {
                break;
            }
            if history.contains(cand.product_key()) {
                continue;
            }
            let fit = fitness.evaluate(catalog, &cand)?;
            let discovery = history.record(cand.product_key().clone(), fit, cand.clone());
            offspring.push(Individual { route: cand, fitness: fit, discovery });
        }
        if offspring.is_empty() {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                return Err(Error::Run(format!(
                    "no admissible offspring for {STALL_LIMIT} consecutive generations \
                     ({} of {} evaluations used)",
                    history.len(),
                    cfg.budget
                )));
            }
        } else {
            stalled = 0;
        }
        population.merge_truncate(offspring, cfg.population_size);
    }
    Ok((population, history))
}

// ---------------------------------------------------------------------------
