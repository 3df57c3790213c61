//! Additive route-scoring head, RankNet training, and Spearman correlation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::chem::{CanonicalKey, CountFingerprint};
use crate::neural::net::{bce_with_logits, sigmoid, Activation, AdamState, DenseNet, LayerSpec, NetSpec};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Additive model: ρ(B_M) = (α + (1−α)/|B_M|) · Σ s(B), with s a dense net
/// over block fingerprints and α ∈ [0,1] stored through a logistic squash.
#[derive(Clone, Debug)]
pub struct NamModel {
    net: DenseNet,
    alpha_raw: f64,
    fp_radius: u32,
    fp_dim: u32,
}

impl NamModel {
    pub fn new(net: DenseNet, fp_radius: u32, fp_dim: u32) -> Result<NamModel> {
        if net.input_dim() != fp_dim as usize || net.output_dim() != 1 {
            return Err(Error::Config(format!(
                "block net must map fingerprint dim {fp_dim} to a scalar, got {} → {}",
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(NamModel { net, alpha_raw: 0.0, fp_radius, fp_dim })
    }

    /// Fresh model from an architecture config; α initialized to 0.5.
    pub fn init<R: Rng>(cfg: &NamTrainConfig, rng: &mut R) -> Result<NamModel> {
        let net = DenseNet::init(cfg.net_spec(), rng)?;
        NamModel::new(net, cfg.fp_radius, cfg.fp_dim)
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn alpha(&self) -> f64 {
        sigmoid(self.alpha_raw)
    }

    pub fn alpha_raw(&self) -> f64 {
        self.alpha_raw
    }

    pub fn set_alpha_raw(&mut self, raw: f64) {
        self.alpha_raw = raw;
    }

    pub fn fp_radius(&self) -> u32 {
        self.fp_radius
    }

    pub fn fp_dim(&self) -> u32 {
        self.fp_dim
    }

    /// Net parameters followed by the raw α parameter.
    pub fn n_params(&self) -> usize {
        self.net.n_params() + 1
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        p.push(self.alpha_raw);
        p
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "parameter shape mismatch");
        let (net_params, alpha) = params.split_at(params.len() - 1);
        self.net.params_mut().copy_from_slice(net_params);
        self.alpha_raw = alpha[0];
    }

    /// Per-block score s(B).
    pub fn block_score(&self, fp: &CountFingerprint) -> f64 {
        self.net.forward(&fp.dense()).output()[0]
    }

    /// Route score over a nonempty block multiset.
    pub fn score_blocks(&self, fps: &[&CountFingerprint]) -> Result<f64> {
        nam_score(self, fps)
    }
}

/// Exact additive head: (α + (1−α)/n) Σ s(B); repeated blocks count again.
pub fn nam_score(nam: &NamModel, block_fps: &[&CountFingerprint]) -> Result<f64> {
    if block_fps.is_empty() {
        return Err(Error::Config("additive score needs at least one block".to_owned()));
    }
    let sum: f64 = block_fps.iter().map(|fp| nam.block_score(fp)).sum();
    let alpha = nam.alpha();
    let n = block_fps.len() as f64;
    Ok((alpha + (1.0 - alpha) / n) * sum)
}

// ---------------------------------------------------------------------------
// RankNet loss
// ---------------------------------------------------------------------------

fn pair_label(t1: f64, t2: f64, tie_label_half: bool) -> f64 {
    if t1 > t2 {
        1.0
    } else if t1 < t2 {
        0.0
    } else if tie_label_half {
        0.5
    } else {
        0.0
    }
}

/// Logistic BCE on the score difference of an example pair, with exact
/// gradients over the net parameters and raw α (last slot).
pub fn ranknet_loss(
    nam: &NamModel,
    a: (&[&CountFingerprint], f64),
    b: (&[&CountFingerprint], f64),
    tie_label_half: bool,
) -> Result<(f64, Vec<f64>)> {
    let mut grads = vec![0.0; nam.n_params()];
    let score = |fps: &[&CountFingerprint]| -> Result<(Vec<crate::neural::ForwardTrace>, f64)> {
        if fps.is_empty() {
            return Err(Error::Config("additive score needs at least one block".to_owned()));
        }
        let traces: Vec<_> = fps.iter().map(|fp| nam.net.forward(&fp.dense())).collect();
        let sum = traces.iter().map(|t| t.output()[0]).sum();
        Ok((traces, sum))
    };
    let (traces1, sum1) = score(a.0)?;
    let (traces2, sum2) = score(b.0)?;
    let alpha = nam.alpha();
    let (n1, n2) = (a.0.len() as f64, b.0.len() as f64);
    let (c1, c2) = (alpha + (1.0 - alpha) / n1, alpha + (1.0 - alpha) / n2);
    let diff = c1 * sum1 - c2 * sum2;
    let label = pair_label(a.1, b.1, tie_label_half);
    let (loss, d_diff) = bce_with_logits(diff, label);

    let net_len = nam.net.n_params();
    for trace in &traces1 {
        nam.net.backward(trace, &[d_diff * c1], &mut grads[..net_len]);
    }
    for trace in &traces2 {
        nam.net.backward(trace, &[-d_diff * c2], &mut grads[..net_len]);
    }
    // dc/dα = 1 − 1/n; dα/draw = α(1−α).
    let d_alpha = d_diff * ((1.0 - 1.0 / n1) * sum1 - (1.0 - 1.0 / n2) * sum2);
    grads[net_len] = d_alpha * alpha * (1.0 - alpha);
    Ok((loss, grads))
}

// ---------------------------------------------------------------------------
// Spearman
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpearmanResult {
    pub rho: f64,
    /// True when either input is constant; rho is then defined as 0.
    pub degenerate: bool,
}

/// Fractional ranks, ties averaged.
pub(crate) fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation of fractional ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> SpearmanResult {
    assert_eq!(xs.len(), ys.len(), "length mismatch");
    assert!(xs.len() >= 2, "need at least two points");
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in rx.iter().zip(&ry) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return SpearmanResult { rho: 0.0, degenerate: true };
    }
    SpearmanResult { rho: cov / (vx * vy).sqrt(), degenerate: false }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One route-level training example: the product, its leaf-block multiset,
/// and the true property value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamExample {
    pub product: CanonicalKey,
    pub blocks: Vec<u32>,
    pub target: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamLoss {
    Rank,
    Mse,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NamTrainConfig {
    pub width: usize,
    /// Linear layers in s (the last maps to the scalar output).
    pub layers: usize,
    pub fp_radius: u32,
    pub fp_dim: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub loss: NamLoss,
    /// Ties label ½ instead of the bare indicator's 0.
    pub tie_label_half: bool,
    pub seed: u64,
}

impl Default for NamTrainConfig {
    fn default() -> NamTrainConfig {
        NamTrainConfig {
            width: 64,
            layers: 5,
            fp_radius: 2,
            fp_dim: 2048,
            learning_rate: 5e-4,
            batch_size: 50,
            patience: 5,
            max_epochs: 100,
            loss: NamLoss::Rank,
            tie_label_half: true,
            seed: 0,
        }
    }
}

impl NamTrainConfig {
    pub fn net_spec(&self) -> NetSpec {
        let mut layers = Vec::with_capacity(self.layers.max(1));
        for _ in 0..self.layers.saturating_sub(1) {
            layers.push(LayerSpec {
                out_dim: self.width,
                activation: Activation::Gelu,
                layer_norm: false,
            });
        }
        layers.push(LayerSpec { out_dim: 1, activation: Activation::Identity, layer_norm: false });
        NetSpec { input_dim: self.fp_dim as usize, layers }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width", self.width),
            ("layers", self.layers),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
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

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_spearman: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct NamTrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_spearman: f64,
    pub warning: Option<String>,
}

/// Trains the additive model with minibatch Adam, early-stopping on the
/// validation Spearman (9:1 split) and returning the best checkpoint.
pub fn train_nam(
    catalog: &Catalog,
    examples: &[NamExample],
    cfg: &NamTrainConfig,
) -> Result<(NamModel, NamTrainReport)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = NamModel::init(cfg, &mut rng)?;
    let mut report = NamTrainReport::default();

    if examples.iter().any(|e| e.blocks.is_empty()) {
        return Err(Error::Config("every example needs at least one block".to_owned()));
    }
    let constant =
        examples.windows(2).all(|w| w[0].target == w[1].target);
    if constant || examples.len() < 2 {
        report.warning = Some("constant or insufficient targets; returning the initialized model".to_owned());
        return Ok((model, report));
    }

    // Dense block fingerprints, computed once.
    let mut dense: std::collections::HashMap<u32, Vec<f64>> = std::collections::HashMap::new();
    for e in examples {
        for &b in &e.blocks {
            dense.entry(b).or_insert_with(|| {
                catalog.block_fingerprint(b, cfg.fp_radius, cfg.fp_dim).dense()
            });
        }
    }

    // 9:1 shuffled split; validation gets at least one example.
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (examples.len() / 10).max(1);
    let (val_idx, train_idx) = order.split_at(n_val);
    if train_idx.len() < 2 {
        report.warning = Some("fewer than two training examples; returning the initialized model".to_owned());
        return Ok((model, report));
    }

    let mut params = model.flat_params();
    let mut adam = AdamState::with_lr(params.len(), cfg.learning_rate);
    let mut best_params = params.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;

    let mut shuffled: Vec<usize> = train_idx.to_vec();
    for epoch in 1..=cfg.max_epochs {
        shuffled.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0u32;
        for batch in shuffled.chunks(cfg.batch_size) {
            model.set_flat_params(&params);
            let (loss, grads) = batch_loss_and_grads(&model, catalog, examples, &dense, batch, cfg)?;
            if let Some((loss, grads)) = loss.map(|l| (l, grads)) {
                adam.step(&mut params, &grads)?;
                epoch_loss += loss;
                epoch_batches += 1;
            }
        }
        model.set_flat_params(&params);
        let val_rho = validation_spearman(&model, examples, &dense, val_idx);
        let train_loss =
            if epoch_batches > 0 { epoch_loss / f64::from(epoch_batches) } else { 0.0 };
        report.epochs.push(EpochLog { epoch, train_loss, val_spearman: val_rho });
        if val_rho > best_val {
            best_val = val_rho;
            best_epoch = epoch;
            best_params.copy_from_slice(&params);
        }
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    model.set_flat_params(&best_params);
    report.best_epoch = best_epoch;
    report.best_val_spearman = best_val;
    Ok((model, report))
}

/// Predicted route score from cached dense fingerprints.
fn predict(
    model: &NamModel,
    dense: &std::collections::HashMap<u32, Vec<f64>>,
    blocks: &[u32],
) -> f64 {
    let sum: f64 = blocks.iter().map(|b| model.net.forward(&dense[b]).output()[0]).sum();
    let alpha = model.alpha();
    (alpha + (1.0 - alpha) / blocks.len() as f64) * sum
}

fn validation_spearman(
    model: &NamModel,
    examples: &[NamExample],
    dense: &std::collections::HashMap<u32, Vec<f64>>,
    val_idx: &[usize],
) -> f64 {
    if val_idx.len() < 2 {
        // A single validation point cannot rank; treat as no signal.
        return 0.0;
    }
    let predicted: Vec<f64> =
        val_idx.iter().map(|&i| predict(model, dense, &examples[i].blocks)).collect();
    let truth: Vec<f64> = val_idx.iter().map(|&i| examples[i].target).collect();
    spearman(&predicted, &truth).rho
}

/// Mean loss and gradients over one batch; `None` loss when the batch has
/// nothing to learn from (a single example under the rank loss).
fn batch_loss_and_grads(
    model: &NamModel,
    _catalog: &Catalog,
    examples: &[NamExample],
    dense: &std::collections::HashMap<u32, Vec<f64>>,
    batch: &[usize],
    cfg: &NamTrainConfig,
) -> Result<(Option<f64>, Vec<f64>)> {
    let net_len = model.net.n_params();
    let mut grads = vec![0.0; model.n_params()];

    // Forward every block of every example once, keeping traces.
    let mut traces: Vec<Vec<crate::neural::ForwardTrace>> = Vec::with_capacity(batch.len());
    let mut sums = Vec::with_capacity(batch.len());
    for &i in batch {
        let ts: Vec<_> =
            examples[i].blocks.iter().map(|b| model.net.forward(&dense[b])).collect();
        sums.push(ts.iter().map(|t| t.output()[0]).sum::<f64>());
        traces.push(ts);
    }
    let alpha = model.alpha();
    let coeff: Vec<f64> = batch
        .iter()
        .map(|&i| alpha + (1.0 - alpha) / examples[i].blocks.len() as f64)
        .collect();
    let scores: Vec<f64> = sums.iter().zip(&coeff).map(|(s, c)| s * c).collect();

    // d loss / d score per example, accumulated across the batch objective.
    let mut d_score = vec![0.0; batch.len()];
    let total_loss;
    match cfg.loss {
        NamLoss::Rank => {
            let mut pairs = 0u32;
            let mut loss_sum = 0.0;
            for p in 0..batch.len() {
                for q in p + 1..batch.len() {
                    pairs += 1;
                    let label =
                        pair_label(examples[batch[p]].target, examples[batch[q]].target, cfg.tie_label_half);
                    let (loss, d_diff) = bce_with_logits(scores[p] - scores[q], label);
                    loss_sum += loss;
                    d_score[p] += d_diff;
                    d_score[q] -= d_diff;
                }
            }
            if pairs == 0 {
                return Ok((None, grads));
            }
            let scale = 1.0 / f64::from(pairs);
            for d in &mut d_score {
                *d *= scale;
            }
            total_loss = loss_sum * scale;
        }
        NamLoss::Mse => {
            let n = batch.len() as f64;
            let mut loss_sum = 0.0;
            for (p, &i) in batch.iter().enumerate() {
                let err = scores[p] - examples[i].target;
                loss_sum += err * err;
                d_score[p] = 2.0 * err / n;
            }
            total_loss = loss_sum / n;
        }
    }

    let mut d_alpha_raw = 0.0;
    for (p, &i) in batch.iter().enumerate() {
        let ds = d_score[p];
        if ds == 0.0 {
            continue;
        }
        for trace in &traces[p] {
            model.net.backward(trace, &[ds * coeff[p]], &mut grads[..net_len]);
        }
        let n = examples[i].blocks.len() as f64;
        d_alpha_raw += ds * (1.0 - 1.0 / n) * sums[p];
    }
    grads[net_len] = d_alpha_raw * alpha * (1.0 - alpha);
    Ok((Some(total_loss), grads))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_reaction;
    use crate::oracles::additive_block_oracle_with;

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

    /// Desk-size training config: small net, hot learning rate, small
    /// batches so the short fixture runs take enough optimizer steps.
    fn tiny_cfg() -> NamTrainConfig {
        NamTrainConfig {
            width: 8,
            layers: 3,
            fp_dim: 128,
            learning_rate: 3e-3,
            batch_size: 16,
            patience: 25,
            max_epochs: 300,
            ..NamTrainConfig::default()
        }
    }

    /// A model whose net is a fixed affine map for hand-computable scores.
    fn constant_score_model(scores_dim: u32, value_weight: f64) -> NamModel {
        let spec = NetSpec {
            input_dim: scores_dim as usize,
            layers: vec![LayerSpec {
                out_dim: 1,
                activation: Activation::Identity,
                layer_norm: false,
            }],
        };
        let mut params = vec![0.0; spec.n_params()];
        params[0] = value_weight; // weight on the first fingerprint slot
        let net = DenseNet::from_params(spec, params).unwrap();
        NamModel::new(net, 2, scores_dim).unwrap()
    }

    fn fp_with_first(dim: u32, count: u32) -> CountFingerprint {
        let mut counts = std::collections::BTreeMap::new();
        counts.insert(0u32, count);
        CountFingerprint::from_counts(dim, counts)
    }

    #[test]
    fn single_block_score_is_independent_of_alpha() {
        let mut nam = constant_score_model(4, 1.0);
        let fp = fp_with_first(4, 3);
        for raw in [-3.0, 0.0, 2.5] {
            nam.set_alpha_raw(raw);
            let s = nam_score(&nam, &[&fp]).unwrap();
            assert!((s - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_interpolates_between_sum_and_mean() {
        let mut nam = constant_score_model(4, 1.0);
        let (a, b) = (fp_with_first(4, 1), fp_with_first(4, 3));
        nam.set_alpha_raw(100.0); // α → 1: sum
        assert!((nam_score(&nam, &[&a, &b]).unwrap() - 4.0).abs() < 1e-9);
        nam.set_alpha_raw(-100.0); // α → 0: mean
        assert!((nam_score(&nam, &[&a, &b]).unwrap() - 2.0).abs() < 1e-9);
        nam.set_alpha_raw(0.0); // α = ½ → 3.0
        assert!((nam_score(&nam, &[&a, &b]).unwrap() - 3.0).abs() < 1e-12);
        assert!(nam_score(&nam, &[]).is_err());
    }

    #[test]
    fn nam_score_is_permutation_invariant() {
        let nam = constant_score_model(4, 0.7);
        let (a, b, c) = (fp_with_first(4, 1), fp_with_first(4, 2), fp_with_first(4, 5));
        let x = nam_score(&nam, &[&a, &b, &c]).unwrap();
        let y = nam_score(&nam, &[&c, &a, &b]).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn equal_scores_give_ln2_loss() {
        let nam = constant_score_model(4, 1.0);
        let fp = fp_with_first(4, 2);
        let (loss, _) = ranknet_loss(&nam, (&[&fp], 1.0), (&[&fp], 0.0), true).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // Ties score ln 2 regardless of the label convention.
        let (loss, _) = ranknet_loss(&nam, (&[&fp], 0.5), (&[&fp], 0.5), false).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_ranking_drives_loss_to_zero() {
        let nam = constant_score_model(4, 10.0);
        let (hi, lo) = (fp_with_first(4, 9), fp_with_first(4, 1));
        let (loss, _) = ranknet_loss(&nam, (&[&hi], 1.0), (&[&lo], 0.0), true).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn ranknet_gradients_match_finite_differences() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = NamTrainConfig { width: 6, layers: 3, fp_dim: 8, ..NamTrainConfig::default() };
        let mut nam = NamModel::init(&cfg, &mut rng).unwrap();
        nam.set_alpha_raw(0.3);
        let mk = |counts: &[(u32, u32)]| {
            CountFingerprint::from_counts(8, counts.iter().copied().collect())
        };
        let fps1 = [mk(&[(0, 2), (3, 1)]), mk(&[(1, 1)])];
        let fps2 = [mk(&[(2, 3)]), mk(&[(4, 1), (5, 2)]), mk(&[(0, 1)])];
        let a: Vec<&CountFingerprint> = fps1.iter().collect();
        let b: Vec<&CountFingerprint> = fps2.iter().collect();
        let (_, grads) = ranknet_loss(&nam, (&a, 0.8), (&b, 0.2), true).unwrap();
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        let base = nam.flat_params();
        for j in 0..nam.n_params() {
            let mut probe = nam.clone();
            let mut p = base.clone();
            p[j] += h;
            probe.set_flat_params(&p);
            let (up, _) = ranknet_loss(&probe, (&a, 0.8), (&b, 0.2), true).unwrap();
            p[j] -= 2.0 * h;
            probe.set_flat_params(&p);
            let (down, _) = ranknet_loss(&probe, (&a, 0.8), (&b, 0.2), true).unwrap();
            let fd = (up - down) / (2.0 * h);
            let rel = (grads[j] - fd).abs() / grads[j].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "max relative FD error {worst}");
    }

    #[test]
    fn spearman_matches_hand_fixtures() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).rho, 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).rho, -1.0);
        let r = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]);
        assert!(r.degenerate && r.rho == 0.0);
        // Hand fixture: xs ranks (1,2,3,4,5); ys = (0.1, 0.1, 0.3, 0.2, 0.5)
        // has ranks (1.5, 1.5, 4, 3, 5); Pearson of those ranks:
        // cov = 8.5, vx = 10, vy = 9.5 → ρ = 8.5/√95.
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.1, 0.1, 0.3, 0.2, 0.5]).rho;
        assert!((rho - 8.5 / 95.0_f64.sqrt()).abs() < 1e-12);
    }

    /// Up to `n` unique-product examples from a bounded sampling sweep;
    /// a small catalog may yield fewer.
    fn additive_examples(catalog: &Catalog, n: usize, seed: u64) -> (Vec<NamExample>, Vec<f64>) {
        use crate::synthesis::sample_route;
        let weights: Vec<f64> =
            (0..catalog.n_blocks()).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let oracle = additive_block_oracle_with(weights.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for _ in 0..20_000 {
            if out.len() == n {
                break;
            }
            let route = sample_route(&mut rng, catalog, 3);
            if !seen.insert(route.product_key().clone()) {
                continue;
            }
            let target = oracle.evaluate_route(catalog, &route).unwrap();
            out.push(NamExample {
                product: route.product_key().clone(),
                blocks: route.leaf_blocks(),
                target,
            });
        }
        assert!(out.len() >= 30, "fixture catalog yielded only {} products", out.len());
        (out, weights)
    }

    #[test]
    fn training_recovers_an_additive_signal() {
        let catalog = fixture_catalog();
        let (examples, weights) = additive_examples(&catalog, 80, 11);
        let cfg = tiny_cfg();
        let (model, report) = train_nam(&catalog, &examples, &cfg).unwrap();
        assert!(report.warning.is_none());
        assert!(
            report.best_val_spearman >= 0.8,
            "validation Spearman {} too low",
            report.best_val_spearman
        );
        // Block-level ranking should track the true scalars.
        let predicted: Vec<f64> = (0..catalog.n_blocks() as u32)
            .map(|b| model.block_score(&catalog.block_fingerprint(b, cfg.fp_radius, cfg.fp_dim)))
            .collect();
        let rho = spearman(&predicted, &weights).rho;
        assert!(rho >= 0.7, "block-score Spearman {rho} too low");
    }

    #[test]
    fn training_is_seed_reproducible() {
        let catalog = fixture_catalog();
        let (examples, _) = additive_examples(&catalog, 40, 5);
        let cfg = NamTrainConfig { max_epochs: 5, ..tiny_cfg() };
        let (m1, r1) = train_nam(&catalog, &examples, &cfg).unwrap();
        let (m2, r2) = train_nam(&catalog, &examples, &cfg).unwrap();
        assert_eq!(m1.flat_params(), m2.flat_params());
        assert_eq!(r1.epochs.len(), r2.epochs.len());
    }

    #[test]
    fn constant_targets_skip_training_with_warning() {
        let catalog = fixture_catalog();
        let examples: Vec<NamExample> = (0..10)
            .map(|i| NamExample {
                product: catalog.block(i % 4).key().clone(),
                blocks: vec![i % 4],
                target: 0.5,
            })
            .collect();
        let (model, report) = train_nam(&catalog, &examples, &tiny_cfg()).unwrap();
        assert!(report.warning.is_some());
        assert!((model.alpha() - 0.5).abs() < 1e-12);
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn two_examples_train_without_error() {
        let catalog = fixture_catalog();
        let examples = vec![
            NamExample { product: catalog.block(0).key().clone(), blocks: vec![0], target: 0.1 },
            NamExample { product: catalog.block(1).key().clone(), blocks: vec![1], target: 0.9 },
            NamExample { product: catalog.block(2).key().clone(), blocks: vec![2], target: 0.4 },
        ];
        let cfg = NamTrainConfig { max_epochs: 3, ..tiny_cfg() };
        let (_, report) = train_nam(&catalog, &examples, &cfg).unwrap();
        assert!(report.warning.is_none());
        assert_eq!(report.epochs.len(), 3.min(report.epochs.len()));
    }

    #[test]
    fn mse_mode_trains_too() {
        let catalog = fixture_catalog();
        let (examples, _) = additive_examples(&catalog, 60, 7);
        let cfg = NamTrainConfig { loss: NamLoss::Mse, ..tiny_cfg() };
        let (_, report) = train_nam(&catalog, &examples, &cfg).unwrap();
        assert!(report.warning.is_none());
        assert!(report.best_val_spearman > 0.0);
    }
}
