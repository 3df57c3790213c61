//! Tanimoto-kernel GP surrogate, UCB acquisition, and the surrogate-guided outer loop.

use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockfilter::{nam_block_filter, BlockFilter, DEFAULT_EPSILON};
use crate::catalog::Catalog;
use crate::chem::{morgan_count_fp, tanimoto, CountFingerprint};
use crate::genetic::{run_synga_seeded, Fitness, GaConfig, HistoryEntry, RunHistory};
use crate::neural::{train_nam, NamExample, NamTrainConfig};
use crate::synthesis::{sample_route_filtered, Route, MAX_INTERNAL_NODES};
use crate::{Error, Result};

/// First diagonal jitter tried when the Gram factorization fails.
const JITTER_FIRST: f64 = 1e-8;
/// Largest jitter tried before giving up.
const JITTER_MAX: f64 = 1e-2;
/// Route samples allowed per missing product when seeding the history.
const SEED_ATTEMPT_FACTOR: usize = 1000;
/// Route samples allowed per outer iteration to top up the proposal set.
const REFILL_ATTEMPT_FACTOR: usize = 200;
/// Consecutive outer iterations tolerated with no new unique product.
pub const OUTER_STALL_LIMIT: usize = 50;

// ---------------------------------------------------------------------------
// Kernel
// ---------------------------------------------------------------------------

/// MinMax kernel over count fingerprints: Tanimoto similarity scaled by the
/// signal variance, so k(x, x) = signal for any nonzero x.
pub fn minmax_kernel(x: &CountFingerprint, y: &CountFingerprint, signal: f64) -> f64 {
    signal * tanimoto(x, y)
}

// ---------------------------------------------------------------------------
// Packed triangular algebra
// ---------------------------------------------------------------------------

/// Offset of row i in packed lower-triangular storage.
fn tri(i: usize) -> usize {
    i * (i + 1) / 2
}

/// In-place Cholesky of a packed lower-triangular matrix; reports the first
/// non-positive pivot instead of factoring past it.
fn packed_cholesky(a: &mut [f64], n: usize) -> std::result::Result<(), (usize, f64)> {
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[tri(i) + j];
            for k in 0..j {
                s -= a[tri(i) + k] * a[tri(j) + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err((i, s));
                }
                a[tri(i) + i] = s.sqrt();
            } else {
                a[tri(i) + j] = s / a[tri(j) + j];
            }
        }
    }
    Ok(())
}

/// Solve L v = b for packed lower-triangular L.
fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for i in 0..n {
        let row = &l[tri(i)..tri(i) + i];
        let s: f64 = row.iter().zip(v.iter()).map(|(a, x)| a * x).sum();
        v[i] = (b[i] - s) / l[tri(i) + i];
    }
    v
}

/// Solve Lᵀ w = v for packed lower-triangular L.
fn backward_sub(l: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = v[i];
        for k in i + 1..n {
            s -= l[tri(k) + i] * w[k];
        }
        w[i] = s / l[tri(i) + i];
    }
    w
}

// ---------------------------------------------------------------------------
// GP regression
// ---------------------------------------------------------------------------

/// Exact GP regression with the MinMax kernel. Targets are standardized
/// internally (population moments; zero spread maps to unit scale) and the
/// noise variance lives on that standardized scale.
#[derive(Clone, Debug)]
pub struct GpModel {
    x: Vec<Arc<CountFingerprint>>,
    y: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    noise: f64,
    signal: f64,
    /// Diagonal jitter the factorization needed (0 when none).
    jitter: f64,
    /// Packed lower-triangular Cholesky factor of K + (noise + jitter)·I.
    chol: Vec<f64>,
    /// (K + (noise + jitter)·I)⁻¹ applied to the standardized targets.
    weights: Vec<f64>,
}

fn standardize_params(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std < 1e-12 { 1.0 } else { std })
}

/// Fit a GP to fingerprints and targets, escalating diagonal jitter through
/// doublings of 10⁻⁸ up to 10⁻² before reporting failure.
pub fn fit_gp(
    x: Vec<Arc<CountFingerprint>>,
    y: &[f64],
    noise: f64,
    signal: f64,
) -> Result<GpModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Config(format!(
            "GP needs matching nonempty inputs, got {} fingerprints and {} targets",
            x.len(),
            y.len()
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) || !(signal.is_finite() && signal > 0.0) {
        return Err(Error::Config(format!(
            "GP noise must be finite and nonnegative and signal finite and positive, \
             got {noise} and {signal}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("GP targets must be finite".to_owned()));
    }
    let dim = x[0].dim();
    if x.iter().any(|fp| fp.dim() != dim) {
        return Err(Error::Config("GP fingerprints must share one dimension".to_owned()));
    }

    let (y_mean, y_std) = standardize_params(y);
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();

    let n = x.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| minmax_kernel(&x[i], &x[j], signal)).collect())
        .collect();
    let gram: Vec<f64> = rows.into_iter().flatten().collect();

    let mut jitter = 0.0;
    loop {
        let mut a = gram.clone();
        for i in 0..n {
            a[tri(i) + i] += noise + jitter;
        }
        match packed_cholesky(&mut a, n) {
            Ok(()) => {
                let v = forward_sub(&a, n, &ys);
                let weights = backward_sub(&a, n, &v);
                return Ok(GpModel {
                    x,
                    y: y.to_vec(),
                    y_mean,
                    y_std,
                    noise,
                    signal,
                    jitter,
                    chol: a,
                    weights,
                });
            }
            Err((pivot, value)) => {
                jitter = if jitter == 0.0 { JITTER_FIRST } else { jitter * 2.0 };
                if jitter > JITTER_MAX {
                    return Err(Error::Numeric(format!(
                        "Gram factorization failed for n = {n}: pivot {pivot} reached \
                         {value:.3e} with noise {noise:.3e} and jitter up to {JITTER_MAX:.0e}"
                    )));
                }
            }
        }
    }
}

impl GpModel {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn k_star(&self, q: &CountFingerprint) -> Vec<f64> {
        self.x.iter().map(|xi| minmax_kernel(xi, q, self.signal)).collect()
    }

    /// Re-standardize targets and re-solve weights against the current factor.
    fn refresh_weights(&mut self) {
        let (mean, std) = standardize_params(&self.y);
        self.y_mean = mean;
        self.y_std = std;
        let ys: Vec<f64> = self.y.iter().map(|v| (v - mean) / std).collect();
        let v = forward_sub(&self.chol, self.n(), &ys);
        self.weights = backward_sub(&self.chol, self.n(), &v);
    }

    /// Append one observation by extending the factorization a row; a
    /// non-positive pivot falls back to a fresh fit with jitter escalation.
    pub fn extend(&mut self, x_new: Arc<CountFingerprint>, y_new: f64) -> Result<()> {
        if !y_new.is_finite() {
            return Err(Error::Config("GP targets must be finite".to_owned()));
        }
        let n = self.n();
        let k_vec = self.k_star(&x_new);
        let k_self = minmax_kernel(&x_new, &x_new, self.signal);
        let v = forward_sub(&self.chol, n, &k_vec);
        let d2 = k_self + self.noise + self.jitter - v.iter().map(|a| a * a).sum::<f64>();
        self.x.push(x_new);
        self.y.push(y_new);
        if d2 <= 0.0 || !d2.is_finite() {
            let x = std::mem::take(&mut self.x);
            let y = std::mem::take(&mut self.y);
            *self = fit_gp(x, &y, self.noise, self.signal)?;
            return Ok(());
        }
        self.chol.extend_from_slice(&v);
        self.chol.push(d2.sqrt());
        self.refresh_weights();
        Ok(())
    }
}

/// Posterior (mean, variance) at a query fingerprint; the mean is on the
/// original target scale and the variance is clamped at 0.
pub fn posterior(model: &GpModel, x: &CountFingerprint) -> (f64, f64) {
    let k_star = model.k_star(x);
    let mean_std: f64 = k_star.iter().zip(model.weights.iter()).map(|(a, w)| a * w).sum();
    let v = forward_sub(&model.chol, model.n(), &k_star);
    let var_std = minmax_kernel(x, x, model.signal) - v.iter().map(|a| a * a).sum::<f64>();
    debug_assert!(
        var_std > -1e-6 * (model.signal + model.noise),
        "posterior variance {var_std} past the clamp tolerance"
    );
    let mean = model.y_mean + model.y_std * mean_std;
    (mean, model.y_std * model.y_std * var_std.max(0.0))
}

/// Upper confidence bound mean + √(β·variance); β = 0 is exactly the mean.
pub fn ucb(model: &GpModel, x: &CountFingerprint, beta: f64) -> f64 {
    debug_assert!(beta >= 0.0, "beta must be nonnegative");
    let (mean, var) = posterior(model, x);
    mean + (beta * var).sqrt()
}

// ---------------------------------------------------------------------------
// Subset rule and acquisition temperature
// ---------------------------------------------------------------------------

/// Indices to fit when the history outgrows `max_full`: everything when it
/// still fits, otherwise the `top` fittest plus `rand` of the rest sampled
/// without replacement. Returned ascending.
pub fn gp_subset_indices<R: Rng>(
    scores: &[f64],
    max_full: usize,
    top: usize,
    rand: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = scores.len();
    if n <= max_full {
        return (0..n).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut rest = order.split_off(top.min(n));
    let take = rand.min(rest.len());
    for i in 0..take {
        let j = rng.gen_range(i..rest.len());
        rest.swap(i, j);
    }
    order.extend_from_slice(&rest[..take]);
    order.sort_unstable();
    order
}

/// Log-uniform draw from [lo, hi].
fn sample_beta<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Outer-loop hyperparameters; defaults follow the full-scale settings. The
/// nested `nam` block governs the periodic block-ranking refit (its seed is
/// redrawn from the master stream at every refit).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GboConfig {
    /// True-oracle evaluations per outer iteration (m).
    pub proposal_size: usize,
    /// Unique true-oracle evaluations allowed (B).
    pub budget: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// History size at which β pins to 0 and the mean is maximized.
    pub exploit_after: usize,
    /// Outer iterations between block-ranking refits.
    pub nam_refit_period: usize,
    /// History size required before the first refit.
    pub nam_refit_min: usize,
    /// Blocks the refit filter keeps.
    pub nam_top_k: usize,
    /// Escape mass of the block filter.
    pub epsilon: f64,
    /// Largest history fitted whole; past it the top/random subset applies.
    pub gp_max_full: usize,
    /// Fittest samples always kept by the subset rule.
    pub gp_top: usize,
    /// Additional random samples kept by the subset rule.
    pub gp_rand: usize,
    /// Observation-noise variance on standardized targets.
    pub gp_noise: f64,
    /// Kernel signal variance.
    pub gp_signal: f64,
    pub gp_fp_radius: u32,
    pub gp_fp_dim: u32,
    /// Fittest history routes seeding the inner population.
    pub inner_seed_top: usize,
    /// Fresh random routes appended to the inner seeds.
    pub inner_seed_random: usize,
    pub inner_population: usize,
    pub inner_offspring: usize,
    pub inner_generations: u64,
    /// Growth-step cap for sampled routes.
    pub max_route_steps: usize,
    pub seed: u64,
    pub nam: NamTrainConfig,
}

impl Default for GboConfig {
    fn default() -> GboConfig {
        GboConfig {
            proposal_size: 10,
            budget: 2000,
            beta_min: 0.01,
            beta_max: 1.0,
            exploit_after: 5000,
            nam_refit_period: 25,
            nam_refit_min: 500,
            nam_top_k: 1000,
            epsilon: DEFAULT_EPSILON,
            gp_max_full: 5000,
            gp_top: 2500,
            gp_rand: 2500,
            gp_noise: 1e-4,
            gp_signal: 1.0,
            gp_fp_radius: 2,
            gp_fp_dim: 2048,
            inner_seed_top: 1000,
            inner_seed_random: 500,
            inner_population: 1000,
            inner_offspring: 100,
            inner_generations: 5,
            max_route_steps: MAX_INTERNAL_NODES,
            seed: 0,
            nam: NamTrainConfig::default(),
        }
    }
}

impl GboConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("proposal_size", self.proposal_size),
            ("budget", self.budget),
            ("nam_refit_period", self.nam_refit_period),
            ("nam_refit_min", self.nam_refit_min),
            ("nam_top_k", self.nam_top_k),
            ("gp_max_full", self.gp_max_full),
            ("gp_top", self.gp_top),
            ("gp_rand", self.gp_rand),
            ("inner_seed_top", self.inner_seed_top),
            ("inner_seed_random", self.inner_seed_random),
            ("inner_population", self.inner_population),
            ("inner_offspring", self.inner_offspring),
            ("inner_generations", self.inner_generations as usize),
            ("max_route_steps", self.max_route_steps),
            ("gp_fp_dim", self.gp_fp_dim as usize),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.budget < self.proposal_size {
            return Err(Error::Config(format!(
                "budget {} is below the proposal size {}",
                self.budget, self.proposal_size
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        let beta_ok = self.beta_min.is_finite()
            && self.beta_min > 0.0
            && self.beta_max.is_finite()
            && self.beta_max >= self.beta_min;
        if !beta_ok {
            return Err(Error::Config(format!(
                "beta range must satisfy 0 < beta_min <= beta_max, got [{}, {}]",
                self.beta_min, self.beta_max
            )));
        }
        if !(self.gp_noise.is_finite() && self.gp_noise >= 0.0) {
            return Err(Error::Config(format!(
                "gp_noise must be finite and nonnegative, got {}",
                self.gp_noise
            )));
        }
        if !(self.gp_signal.is_finite() && self.gp_signal > 0.0) {
            return Err(Error::Config(format!(
                "gp_signal must be finite and positive, got {}",
                self.gp_signal
            )));
        }
        self.nam.validate()
    }
}

/// Per-outer-iteration telemetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GboIterLog {
    /// 1-based outer iteration.
    pub iteration: usize,
    /// History size entering the iteration.
    pub history_len: usize,
    pub beta: f64,
    /// Blocks the active filter admits (the whole catalog before any refit).
    pub filter_size: usize,
    /// Training points in this iteration's surrogate.
    pub gp_size: usize,
    /// Best acquisition value the inner loop reached.
    pub best_acquisition: f64,
    /// True-oracle scores committed this iteration, in evaluation order.
    pub proposal_scores: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

fn commit(
    history: &mut RunHistory,
    fps: &mut Vec<Arc<CountFingerprint>>,
    fitness: &dyn Fitness,
    catalog: &Catalog,
    route: Route,
    radius: u32,
    dim: u32,
) -> Result<f64> {
    let fit = fitness.evaluate(catalog, &route)?;
    fps.push(Arc::new(morgan_count_fp(route.product_mol(catalog), radius, dim)));
    history.record(route.product_key().clone(), fit, route);
    Ok(fit)
}

/// Surrogate-guided optimization: alternates GP fits over the history with an
/// inner GA maximizing UCB, spending the true-oracle budget `proposal_size`
/// evaluations at a time. Outer iterations are strictly sequential;
/// deterministic for a fixed seed regardless of worker count.
pub fn run_syngbo(
    cfg: &GboConfig,
    fitness: &dyn Fitness,
    catalog: &Catalog,
) -> Result<(RunHistory, Vec<GboIterLog>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = RunHistory::new();
    let mut fps: Vec<Arc<CountFingerprint>> = Vec::new();
    let mut logs = Vec::new();

    // --- seed the history with unique random routes
    let target = cfg.proposal_size.min(cfg.budget);
    let mut attempts = 0usize;
    while history.len() < target {
        attempts += 1;
        if attempts > SEED_ATTEMPT_FACTOR.saturating_mul(target) {
            return Err(Error::Run(format!(
                "could not sample {target} unique products to seed the run"
            )));
        }
        let route = sample_route_filtered(&mut rng, catalog, cfg.max_route_steps, None);
        if history.contains(route.product_key()) {
            continue;
        }
        commit(&mut history, &mut fps, fitness, catalog, route, cfg.gp_fp_radius, cfg.gp_fp_dim)?;
    }

    let mut filter: Option<BlockFilter> = None;
    let mut last_refit: Option<usize> = None;
    let mut full_gp: Option<GpModel> = None;
    let mut iteration = 0usize;
    let mut stalled = 0usize;

    while history.len() < cfg.budget {
        iteration += 1;
        let start_len = history.len();

        // --- block-ranking refit on cadence
        let due = last_refit.map_or(true, |t| iteration - t >= cfg.nam_refit_period);
        if start_len >= cfg.nam_refit_min && due {
            let examples: Vec<NamExample> = history
                .entries()
                .iter()
                .map(|e| {
                    let mut blocks = e.route.leaf_blocks();
                    blocks.sort_unstable();
                    blocks.dedup();
                    NamExample { product: e.key.clone(), blocks, target: e.fitness }
                })
                .collect();
            let mut nam_cfg = cfg.nam.clone();
            nam_cfg.seed = rng.gen();
            let (model, _) = train_nam(catalog, &examples, &nam_cfg)?;
            filter = Some(nam_block_filter(&model, catalog, cfg.nam_top_k, cfg.epsilon)?);
            last_refit = Some(iteration);
        }
        let picker = filter.as_ref().map(|f| f.picker());

        // --- surrogate over the history (subset rule past gp_max_full)
        let scores = history.scores();
        let subset_gp;
        let model: &GpModel = if start_len <= cfg.gp_max_full {
            let fresh = full_gp.as_ref().map_or(true, |m| m.n() > start_len);
            if fresh {
                full_gp = Some(fit_gp(fps.clone(), &scores, cfg.gp_noise, cfg.gp_signal)?);
            } else {
                let m = full_gp.as_mut().expect("full model present");
                for i in m.n()..start_len {
                    m.extend(Arc::clone(&fps[i]), scores[i])?;
                }
            }
            full_gp.as_ref().expect("full model present")
        } else {
            full_gp = None;
            let idx =
                gp_subset_indices(&scores, cfg.gp_max_full, cfg.gp_top, cfg.gp_rand, &mut rng);
            let sub_x: Vec<Arc<CountFingerprint>> =
                idx.iter().map(|&i| Arc::clone(&fps[i])).collect();
            let sub_y: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            subset_gp = fit_gp(sub_x, &sub_y, cfg.gp_noise, cfg.gp_signal)?;
            &subset_gp
        };

        // --- acquisition temperature
        let beta = if start_len >= cfg.exploit_after {
            0.0
        } else {
            sample_beta(&mut rng, cfg.beta_min, cfg.beta_max)
        };

        // --- inner GA maximizing UCB under the filter
        let mut order: Vec<usize> = (0..start_len).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut seeds: Vec<Route> = order
            .iter()
            .take(cfg.inner_seed_top)
            .map(|&i| history.entries()[i].route.clone())
            .collect();
        for _ in 0..cfg.inner_seed_random {
            seeds.push(sample_route_filtered(&mut rng, catalog, cfg.max_route_steps, picker));
        }
        let inner_cfg = GaConfig {
            initial_size: seeds.len(),
            population_size: cfg.inner_population,
            offspring_size: cfg.inner_offspring,
            budget: seeds.len() + cfg.inner_generations as usize * cfg.inner_offspring,
            max_generations: cfg.inner_generations,
            max_route_steps: cfg.max_route_steps,
            seed: rng.gen(),
            ..GaConfig::default()
        };
        let inner_fitness = |cat: &Catalog, route: &Route| {
            let fp = morgan_count_fp(route.product_mol(cat), cfg.gp_fp_radius, cfg.gp_fp_dim);
            Ok(ucb(model, &fp, beta))
        };
        let (_, inner) = run_synga_seeded(&inner_cfg, &inner_fitness, catalog, picker, &seeds)?;
        let best_acquisition = inner.best().map_or(f64::NEG_INFINITY, |e| e.fitness);

        // --- the fittest unseen inner products, topped up with random routes
        let mut unseen: Vec<&HistoryEntry> =
            inner.entries().iter().filter(|e| !history.contains(&e.key)).collect();
        unseen.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.index.cmp(&b.index)));
        let mut proposals: Vec<Route> =
            unseen.iter().take(cfg.proposal_size).map(|e| e.route.clone()).collect();
        let mut proposed: HashSet<_> =
            proposals.iter().map(|r| r.product_key().clone()).collect();
        let mut refill = 0usize;
        while proposals.len() < cfg.proposal_size
            && refill < REFILL_ATTEMPT_FACTOR.saturating_mul(cfg.proposal_size)
        {
            refill += 1;
            let route = sample_route_filtered(&mut rng, catalog, cfg.max_route_steps, picker);
            if history.contains(route.product_key()) || proposed.contains(route.product_key()) {
                continue;
            }
            proposed.insert(route.product_key().clone());
            proposals.push(route);
        }

        // --- true-oracle evaluations, strictly serial
        let mut proposal_scores = Vec::new();
        for route in proposals {
            if history.len() >= cfg.budget {
                break;
            }
            proposal_scores.push(commit(
                &mut history,
                &mut fps,
                fitness,
                catalog,
                route,
                cfg.gp_fp_radius,
                cfg.gp_fp_dim,
            )?);
        }
        let gp_size = model.n();
        if proposal_scores.is_empty() {
            stalled += 1;
            if stalled >= OUTER_STALL_LIMIT {
                return Err(Error::Run(format!(
                    "no unseen products for {OUTER_STALL_LIMIT} consecutive iterations \
                     ({} of {} evaluations used)",
                    history.len(),
                    cfg.budget
                )));
            }
        } else {
            stalled = 0;
        }
        logs.push(GboIterLog {
            iteration,
            history_len: start_len,
            beta,
            filter_size: filter.as_ref().map_or(catalog.n_blocks(), |f| f.n_members()),
            gp_size,
            best_acquisition,
            proposal_scores,
        });
    }
    Ok((history, logs))
}

// ---------------------------------------------------------------------------
