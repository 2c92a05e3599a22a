//! Feed-forward network skeleton evaluated at posterior means.
//!
//! Layer `m` maps `h_{m-1}` to `σ(W_m [h_{m-1}; 1] / sqrt(V_{m-1} + 1))`; the
//! last layer is linear with the same scaling and a single output. `W_m` is
//! `V_m × (V_{m-1} + 1)` with the bias in the last column.
//!
//! All weights live in one flat vector (see [`FlatParamLayout`]); gradients
//! and variance vectors use the same order with the input coordinates
//! appended.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    /// Linear hidden layers. Only meant for exact linear-Gaussian checks.
    #[doc(hidden)]
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }

    /// Derivative given the pre-activation `a` and output `h`. ReLU at
    /// exactly zero gets derivative 0.
    #[inline]
    fn derivative(self, a: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }

    /// Whether this activation may appear in user-facing configuration.
    pub fn is_user_facing(self) -> bool {
        !matches!(self, Activation::Identity)
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::arg(format!("unknown activation '{other}' (relu|tanh)"))),
        }
    }
}

/// Layer widths `V_0..V_M` (with `V_M = 1`) and the hidden activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpecDoc", into = "SpecDoc")]
pub struct NetworkSpec {
    widths: Vec<usize>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    widths: Vec<usize>,
    activation: Activation,
}

impl TryFrom<SpecDoc> for NetworkSpec {
    type Error = Error;
    fn try_from(d: SpecDoc) -> Result<Self> {
        NetworkSpec::new(d.widths, d.activation)
    }
}

impl From<NetworkSpec> for SpecDoc {
    fn from(s: NetworkSpec) -> Self {
        SpecDoc { widths: s.widths, activation: s.activation }
    }
}

impl NetworkSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::arg("a network needs an input width and an output width"));
        }
        if widths.contains(&0) {
            return Err(Error::arg("layer widths must be positive"));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::arg("the output layer must have width 1"));
        }
        Ok(NetworkSpec { widths, activation })
    }

    /// Input width `Σ r_k`, then `hidden`, then a scalar output.
    pub fn for_ranks(ranks: &[usize], hidden: &[usize], activation: Activation) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(ranks.iter().sum());
        widths.extend_from_slice(hidden);
        widths.push(1);
        NetworkSpec::new(widths, activation)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of weight matrices `M`.
    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Total weight count `V = Σ_m V_m (V_{m-1} + 1)`.
    pub fn weight_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn layout(&self) -> FlatParamLayout {
        let mut offsets = Vec::with_capacity(self.widths.len());
        let mut acc = 0;
        for w in self.widths.windows(2) {
            offsets.push(acc);
            acc += w[1] * (w[0] + 1);
        }
        offsets.push(acc);
        FlatParamLayout { widths: self.widths.clone(), offsets }
    }
}

/// Linear order of all parameters touched by one entry: weights layer by
/// layer (row-major within each matrix, bias column last in each row),
/// followed by the `V_0` input coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatParamLayout {
    widths: Vec<usize>,
    offsets: Vec<usize>,
}

/// A position in [`FlatParamLayout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamSlot {
    /// `layer` is 0-based; `row < V_{layer+1}`; `col <= V_layer` (bias = `V_layer`).
    Weight { layer: usize, row: usize, col: usize },
    Input(usize),
}

impl FlatParamLayout {
    pub fn weight_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.weight_count() + self.widths[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn layer_offset(&self, layer: usize) -> usize {
        self.offsets[layer]
    }

    pub fn index_of(&self, slot: ParamSlot) -> Option<usize> {
        match slot {
            ParamSlot::Weight { layer, row, col } => {
                let fan_in = *self.widths.get(layer)? + 1;
                if layer + 1 >= self.widths.len() || row >= self.widths[layer + 1] || col >= fan_in {
                    return None;
                }
                Some(self.offsets[layer] + row * fan_in + col)
            }
            ParamSlot::Input(i) => (i < self.widths[0]).then(|| self.weight_count() + i),
        }
    }

    pub fn slot_of(&self, flat: usize) -> Option<ParamSlot> {
        let v = self.weight_count();
        if flat >= v {
            return (flat - v < self.widths[0]).then_some(ParamSlot::Input(flat - v));
        }
        let layer = self.offsets.partition_point(|&o| o <= flat) - 1;
        let fan_in = self.widths[layer] + 1;
        let local = flat - self.offsets[layer];
        Some(ParamSlot::Weight { layer, row: local / fan_in, col: local % fan_in })
    }
}

/// Gradient of the network output over all weights then all inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    values: Vec<f64>,
    weight_count: usize,
}

impl GradientVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.values[..self.weight_count]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.values[self.weight_count..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Approximate mean (`alpha`) and variance (`beta`) of the network output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMoments {
    pub alpha: f64,
    pub beta: f64,
}

/// Cached per-layer values from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `h_0 .. h_{M-1}`.
    hidden: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers `1 .. M-1`.
    pre: Vec<Vec<f64>>,
    fingerprint: u64,
}

fn fingerprint(weights: &[f64], input: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in weights.iter().chain(input) {
        h ^= x.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01b3).rotate_left(23);
    }
    h ^ (weights.len() as u64) << 32 ^ input.len() as u64
}

fn check_shapes(spec: &NetworkSpec, weights: &[f64], input: &[f64]) -> Result<()> {
    if weights.len() != spec.weight_count() {
        return Err(Error::arg(format!(
            "expected {} weights, got {}",
            spec.weight_count(),
            weights.len()
        )));
    }
    if input.len() != spec.input_dim() {
        return Err(Error::arg(format!(
            "expected input of length {}, got {}",
            spec.input_dim(),
            input.len()
        )));
    }
    Ok(())
}

/// `W [h; 1] / sqrt(len(h) + 1)` for a row-major `rows × (len(h)+1)` block.
#[inline]
fn affine(block: &[f64], h: &[f64], rows: usize, out: &mut Vec<f64>) {
    let fan_in = h.len() + 1;
    let scale = 1.0 / (fan_in as f64).sqrt();
    out.clear();
    for row in block.chunks_exact(fan_in).take(rows) {
        let dot: f64 = row[..h.len()].iter().zip(h).map(|(w, x)| w * x).sum();
        out.push((dot + row[h.len()]) * scale);
    }
}

/// Evaluates the network at the given weights and input.
pub fn forward_mean(spec: &NetworkSpec, weights: &[f64], input: &[f64]) -> Result<(f64, Tape)> {
    check_shapes(spec, weights, input)?;
    let layout = spec.layout();
    let m = spec.layer_count();
    let mut hidden = Vec::with_capacity(m);
    let mut pre = Vec::with_capacity(m.saturating_sub(1));
    hidden.push(input.to_vec());
    let mut a = Vec::new();
    for layer in 0..m {
        let rows = spec.widths[layer + 1];
        let block = &weights[layout.offsets[layer]..layout.offsets[layer + 1]];
        affine(block, &hidden[layer], rows, &mut a);
        if layer + 1 == m {
            break;
        }
        let h: Vec<f64> = a.iter().map(|&x| spec.activation.apply(x)).collect();
        pre.push(std::mem::take(&mut a));
        hidden.push(h);
    }
    let alpha = a[0];
    if !alpha.is_finite() || hidden.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite value in forward pass".into()));
    }
    Ok((alpha, Tape { hidden, pre, fingerprint: fingerprint(weights, input) }))
}

/// Network output only.
pub fn forward_value(spec: &NetworkSpec, weights: &[f64], input: &[f64]) -> Result<f64> {
    forward_mean(spec, weights, input).map(|(a, _)| a)
}

/// Reverse-mode gradient of the output with respect to every weight and
/// every input coordinate, reusing the activations cached in `tape`.
pub fn backprop_gradient(
    spec: &NetworkSpec,
    weights: &[f64],
    input: &[f64],
    tape: &Tape,
) -> Result<GradientVector> {
    check_shapes(spec, weights, input)?;
    if tape.hidden.len() != spec.layer_count() || tape.fingerprint != fingerprint(weights, input) {
        return Err(Error::arg("tape does not belong to these weights and input"));
    }
    let layout = spec.layout();
    let v = layout.weight_count();
    let mut grad = vec![0.0; v + spec.input_dim()];
    // Sensitivity of the output to the current layer's outputs.
    let mut delta = vec![1.0];
    for layer in (0..spec.layer_count()).rev() {
        let h = &tape.hidden[layer];
        let fan_in = h.len() + 1;
        let scale = 1.0 / (fan_in as f64).sqrt();
        let off = layout.offsets[layer];
        let block = &weights[off..layout.offsets[layer + 1]];
        let gblock = &mut grad[off..layout.offsets[layer + 1]];
        let mut dh = vec![0.0; h.len()];
        for (j, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let ds = d * scale;
            let wrow = &block[j * fan_in..(j + 1) * fan_in];
            let grow = &mut gblock[j * fan_in..(j + 1) * fan_in];
            for t in 0..h.len() {
                grow[t] = ds * h[t];
                dh[t] += ds * wrow[t];
            }
            grow[h.len()] = ds;
        }
        if layer == 0 {
            grad[v..].copy_from_slice(&dh);
        } else {
            let a = &tape.pre[layer - 1];
            delta = dh
                .iter()
                .zip(a.iter().zip(h))
                .map(|(&g, (&a, &hv))| g * spec.activation.derivative(a, hv))
                .collect();
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(GradientVector { values: grad, weight_count: v })
}

/// First-order output moments plus the gradient they were built from:
/// `alpha = f(means)`, `beta = Σ_j g_j² γ_j` with `γ` the weight variances
/// followed by the input variances.
pub fn linearize(
    spec: &NetworkSpec,
    weight_means: &[f64],
    weight_vars: &[f64],
    input_mean: &[f64],
    input_vars: &[f64],
) -> Result<(OutputMoments, GradientVector)> {
    if weight_vars.len() != weight_means.len() || input_vars.len() != input_mean.len() {
        return Err(Error::arg("variance vectors must match their means"));
    }
    if weight_vars.iter().chain(input_vars).any(|&v| !(v >= 0.0)) {
        return Err(Error::arg("variances must be non-negative"));
    }
    let (alpha, tape) = forward_mean(spec, weight_means, input_mean)?;
    let grad = backprop_gradient(spec, weight_means, input_mean, &tape)?;
    let beta: f64 = grad
        .as_slice()
        .iter()
        .zip(weight_vars.iter().chain(input_vars))
        .map(|(g, v)| g * g * v)
        .sum();
    if !beta.is_finite() {
        return Err(Error::Numeric("non-finite output variance".into()));
    }
    Ok((OutputMoments { alpha, beta }, grad))
}

pub fn output_moments(
    spec: &NetworkSpec,
    weight_means: &[f64],
    weight_vars: &[f64],
    input_mean: &[f64],
    input_vars: &[f64],
) -> Result<OutputMoments> {
    linearize(spec, weight_means, weight_vars, input_mean, input_vars).map(|(m, _)| m)
}
