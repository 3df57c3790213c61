//! Dense layers with hand-derived exact gradients, plus Adam and BCE.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Identity,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu_derivative(x),
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }
}

// Tanh-form GELU; the derivative is the exact derivative of this form, so
// finite differences agree to rounding error.
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Overflow-safe logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable binary cross-entropy on a logit; returns
/// (loss, d loss / d logit).
pub fn bce_with_logits(logit: f64, target: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * target + (1.0 + (-logit.abs()).exp()).ln();
    (loss, sigmoid(logit) - target)
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// One dense layer: linear map, optional layer norm, then activation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub out_dim: usize,
    pub activation: Activation,
    pub layer_norm: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }

    /// Parameters per layer: weights, biases, and norm gain/shift when used.
    pub fn n_params(&self) -> usize {
        let mut total = 0;
        let mut fan_in = self.input_dim;
        for layer in &self.layers {
            total += fan_in * layer.out_dim + layer.out_dim;
            if layer.layer_norm {
                total += 2 * layer.out_dim;
            }
            fan_in = layer.out_dim;
        }
        total
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.layers.is_empty() {
            return Err(Error::Config("network needs an input dim and ≥ 1 layer".to_owned()));
        }
        if self.layers.iter().any(|l| l.out_dim == 0) {
            return Err(Error::Config("layer widths must be at least 1".to_owned()));
        }
        Ok(())
    }
}

/// An MLP over a flat parameter vector, layout per layer:
/// weights (row-major out×in), biases, then [gain, shift] under layer norm.
#[derive(Clone, Debug)]
pub struct DenseNet {
    spec: NetSpec,
    params: Vec<f64>,
}

// (pre-norm z, normalized x̂ + inverse std when norm is on, pre-activation a)
type LayerTrace = (Vec<f64>, Option<(Vec<f64>, f64)>, Vec<f64>);

/// Per-layer intermediates retained for the backward pass.
pub struct ForwardTrace {
    input: Vec<f64>,
    layers: Vec<LayerTrace>,
    output: Vec<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl DenseNet {
    pub fn zeros(spec: NetSpec) -> Result<DenseNet> {
        spec.validate()?;
        let n = spec.n_params();
        Ok(DenseNet { spec, params: vec![0.0; n] })
    }

    /// He-style init: weights ~ N(0, √(2/fan_in)), biases 0, norm gain 1.
    pub fn init<R: Rng>(spec: NetSpec, rng: &mut R) -> Result<DenseNet> {
        let mut net = DenseNet::zeros(spec)?;
        let mut offset = 0;
        let mut fan_in = net.spec.input_dim;
        for li in 0..net.spec.layers.len() {
            let layer = net.spec.layers[li].clone();
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            for w in &mut net.params[offset..offset + fan_in * layer.out_dim] {
                *w = dist.sample(rng);
            }
            offset += fan_in * layer.out_dim + layer.out_dim;
            if layer.layer_norm {
                for g in &mut net.params[offset..offset + layer.out_dim] {
                    *g = 1.0;
                }
                offset += 2 * layer.out_dim;
            }
            fan_in = layer.out_dim;
        }
        Ok(net)
    }

    pub fn from_params(spec: NetSpec, params: Vec<f64>) -> Result<DenseNet> {
        spec.validate()?;
        if params.len() != spec.n_params() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                spec.n_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".to_owned()));
        }
        Ok(DenseNet { spec, params })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Forward pass; errors on dimension mismatch or non-finite input.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Config(format!(
                "input dim {} does not match network dim {}",
                x.len(),
                self.spec.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network input".to_owned()));
        }
        Ok(self.forward(x).output)
    }

    /// Forward pass keeping intermediates for [`DenseNet::backward`].
    pub fn forward(&self, x: &[f64]) -> ForwardTrace {
        assert_eq!(x.len(), self.spec.input_dim, "input dimension mismatch");
        let mut layers = Vec::with_capacity(self.spec.layers.len());
        let mut current = x.to_vec();
        let mut offset = 0;
        let mut fan_in = self.spec.input_dim;
        for layer in &self.spec.layers {
            let (w, rest) = self.params[offset..].split_at(fan_in * layer.out_dim);
            let b = &rest[..layer.out_dim];
            offset += fan_in * layer.out_dim + layer.out_dim;
            let mut z = vec![0.0; layer.out_dim];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                *zo = b[o] + row.iter().zip(&current).map(|(wi, xi)| wi * xi).sum::<f64>();
            }
            let (norm, pre_act) = if layer.layer_norm {
                let gain = &self.params[offset..offset + layer.out_dim];
                let shift = &self.params[offset + layer.out_dim..offset + 2 * layer.out_dim];
                offset += 2 * layer.out_dim;
                let n = layer.out_dim as f64;
                let mean = z.iter().sum::<f64>() / n;
                let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                let hat: Vec<f64> = z.iter().map(|v| (v - mean) * inv_std).collect();
                let a: Vec<f64> =
                    hat.iter().zip(gain.iter().zip(shift)).map(|(h, (g, s))| g * h + s).collect();
                (Some((hat, inv_std)), a)
            } else {
                (None, z.clone())
            };
            let out: Vec<f64> = pre_act.iter().map(|&v| layer.activation.apply(v)).collect();
            layers.push((z, norm, pre_act));
            current = out;
            fan_in = layer.out_dim;
        }
        ForwardTrace { input: x.to_vec(), layers, output: current }
    }

    /// Accumulates exact parameter gradients for upstream ∂L/∂output into
    /// `grads` (same layout as `params`) and returns ∂L/∂input.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(upstream.len(), self.output_dim(), "upstream dimension mismatch");
        assert_eq!(grads.len(), self.params.len(), "gradient buffer mismatch");

        // Walk layers in reverse, tracking each layer's parameter offset.
        let mut offsets = Vec::with_capacity(self.spec.layers.len());
        let mut offset = 0;
        let mut fan_in = self.spec.input_dim;
        for layer in &self.spec.layers {
            offsets.push((offset, fan_in));
            offset += fan_in * layer.out_dim + layer.out_dim;
            if layer.layer_norm {
                offset += 2 * layer.out_dim;
            }
            fan_in = layer.out_dim;
        }

        let mut d_out = upstream.to_vec();
        for li in (0..self.spec.layers.len()).rev() {
            let layer = &self.spec.layers[li];
            let (base, fan_in) = offsets[li];
            let (z, norm, pre_act) = &trace.layers[li];
            let below: &[f64] =
                if li == 0 { &trace.input } else { &trace.layers[li - 1].2 };
            // Activation outputs of the previous layer feed this one; the
            // trace stores pre-activations, so re-apply the activation.
            let prev_act: Vec<f64> = if li == 0 {
                below.to_vec()
            } else {
                let prev = &self.spec.layers[li - 1];
                below.iter().map(|&v| prev.activation.apply(v)).collect()
            };

            let mut d_pre: Vec<f64> = d_out
                .iter()
                .zip(pre_act)
                .map(|(du, &p)| du * layer.activation.derivative(p))
                .collect();

            if let Some((hat, inv_std)) = norm {
                let gain_base = base + fan_in * layer.out_dim + layer.out_dim;
                let n = layer.out_dim as f64;
                let gain = &self.params[gain_base..gain_base + layer.out_dim];
                // Gain/shift gradients, then the layer-norm input gradient.
                for (o, &dp) in d_pre.iter().enumerate() {
                    grads[gain_base + o] += dp * hat[o];
                    grads[gain_base + layer.out_dim + o] += dp;
                }
                let d_hat: Vec<f64> =
                    d_pre.iter().zip(gain).map(|(dp, g)| dp * g).collect();
                let mean_dhat = d_hat.iter().sum::<f64>() / n;
                let mean_dhat_hat =
                    d_hat.iter().zip(hat).map(|(d, h)| d * h).sum::<f64>() / n;
                d_pre = d_hat
                    .iter()
                    .zip(hat)
                    .map(|(d, h)| inv_std * (d - mean_dhat - h * mean_dhat_hat))
                    .collect();
                let _ = z;
            }

            let w = &self.params[base..base + fan_in * layer.out_dim];
            let mut d_below = vec![0.0; fan_in];
            for (o, &dz) in d_pre.iter().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (i, (&wi, &xi)) in row.iter().zip(&prev_act).enumerate() {
                    grads[base + o * fan_in + i] += dz * xi;
                    d_below[i] += dz * wi;
                }
                grads[base + fan_in * layer.out_dim + o] += dz;
            }
            d_out = d_below;
        }
        d_out
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> AdamState {
        AdamState::with_lr(n_params, 5e-4)
    }

    pub fn with_lr(n_params: usize, lr: f64) -> AdamState {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "parameter shape mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient shape mismatch");
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient in Adam step".to_owned()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
