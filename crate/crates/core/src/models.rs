//! Multinomial logistic regression and a one-hidden-layer MLP over flat
//! parameter vectors.
//!
//! Parameter layouts (row-major):
//!
//! * LR: `W[d][C]`, then `b[C]`.
//! * MLP: `W1[d][h]`, `b1[h]`, `W2[h][C]`, `b2[C]`, hidden activation `tanh`.

use std::borrow::Borrow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Sample;
use crate::error::{Error, Result};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    Mlp { hidden_units: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArch {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl ModelArch {
    pub fn logistic(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            feature_dim,
            num_classes,
        }
    }

    pub fn mlp(hidden_units: usize, feature_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp { hidden_units },
            feature_dim,
            num_classes,
        }
    }

    pub fn param_count(&self) -> usize {
        let (d, c) = (self.feature_dim, self.num_classes);
        match self.kind {
            ModelKind::LogisticRegression => d * c + c,
            ModelKind::Mlp { hidden_units: h } => d * h + h + h * c + c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.num_classes < 2 {
            return Err(Error::Config(format!(
                "architecture needs feature_dim >= 1 and num_classes >= 2, got {}x{}",
                self.feature_dim, self.num_classes
            )));
        }
        if let ModelKind::Mlp { hidden_units: 0 } = self.kind {
            return Err(Error::Config("MLP needs at least one hidden unit".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out, weight_len, bias_len)` per layer.
    fn layers(&self) -> Vec<(usize, usize)> {
        match self.kind {
            ModelKind::LogisticRegression => vec![(self.feature_dim, self.num_classes)],
            ModelKind::Mlp { hidden_units: h } => {
                vec![(self.feature_dim, h), (h, self.num_classes)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ModelArch,
    pub weights: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: ModelArch) -> Self {
        Self {
            arch,
            weights: vec![0.0; arch.param_count()],
        }
    }

    pub fn from_weights(arch: ModelArch, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "{} weights for an architecture with {} parameters",
                weights.len(),
                arch.param_count()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Shape(format!("weight {i} is not finite")));
        }
        Ok(Self { arch, weights })
    }
}

/// Uniform fan-based initialisation: each weight matrix is drawn from
/// `U[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`; biases start at zero.
pub fn init_params(arch: ModelArch, seed: u64) -> ModelParams {
    let mut rng = rng::stream(seed, &[domain::INIT]);
    let mut weights = Vec::with_capacity(arch.param_count());
    for (fan_in, fan_out) in arch.layers() {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.extend((0..fan_in * fan_out).map(|_| rng.random_range(-s..=s)));
        weights.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ModelParams { arch, weights }
}

fn check_sample(arch: &ModelArch, s: &Sample) -> Result<()> {
    if s.features.len() != arch.feature_dim {
        return Err(Error::Shape(format!(
            "sample has {} features, model expects {}",
            s.features.len(),
            arch.feature_dim
        )));
    }
    if s.label >= arch.num_classes {
        return Err(Error::Shape(format!(
            "label {} outside {} classes",
            s.label, arch.num_classes
        )));
    }
    Ok(())
}

/// `out[j] = b[j] + sum_i x[i] * w[i][j]`
fn affine(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let n_out = b.len();
    out.copy_from_slice(b);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * n_out..(i + 1) * n_out];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// Turns logits into softmax probabilities in place and returns `-log p[label]`.
fn softmax_xent(logits: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    let loss = lse - logits[label];
    for z in logits.iter_mut() {
        *z = (*z - lse).exp();
    }
    loss
}

/// Scratch buffers for one forward/backward pass.
struct Workspace {
    hidden: Vec<f64>,
    logits: Vec<f64>,
    dhidden: Vec<f64>,
}

impl Workspace {
    fn new(arch: &ModelArch) -> Self {
        let h = match arch.kind {
            ModelKind::LogisticRegression => 0,
            ModelKind::Mlp { hidden_units } => hidden_units,
        };
        Self {
            hidden: vec![0.0; h],
            logits: vec![0.0; arch.num_classes],
            dhidden: vec![0.0; h],
        }
    }
}

/// Per-sample cross-entropy; when `grad` is given, adds this sample's
/// gradient into it.
fn sample_loss(
    params: &ModelParams,
    s: &Sample,
    ws: &mut Workspace,
    grad: Option<&mut [f64]>,
) -> f64 {
    let arch = &params.arch;
    let (d, c) = (arch.feature_dim, arch.num_classes);
    let w = &params.weights;
    let x = &s.features;
    match arch.kind {
        ModelKind::LogisticRegression => {
            let (wm, b) = w.split_at(d * c);
            affine(x, wm, b, &mut ws.logits);
            let loss = softmax_xent(&mut ws.logits, s.label);
            if let Some(g) = grad {
                ws.logits[s.label] -= 1.0;
                let (gw, gb) = g.split_at_mut(d * c);
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (gij, &dz) in gw[i * c..(i + 1) * c].iter_mut().zip(&ws.logits) {
                        *gij += xi * dz;
                    }
                }
                for (gbj, &dz) in gb.iter_mut().zip(&ws.logits) {
                    *gbj += dz;
                }
            }
            loss
        }
        ModelKind::Mlp { hidden_units: h } => {
            let (w1, rest) = w.split_at(d * h);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(h * c);
            affine(x, w1, b1, &mut ws.hidden);
            for a in ws.hidden.iter_mut() {
                *a = a.tanh();
            }
            affine(&ws.hidden, w2, b2, &mut ws.logits);
            let loss = softmax_xent(&mut ws.logits, s.label);
            if let Some(g) = grad {
                ws.logits[s.label] -= 1.0;
                let (gw1, rest) = g.split_at_mut(d * h);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(h * c);
                for j in 0..h {
                    let aj = ws.hidden[j];
                    let row = &w2[j * c..(j + 1) * c];
                    let mut back = 0.0;
                    for ((gjk, &wjk), &dz) in
                        gw2[j * c..(j + 1) * c].iter_mut().zip(row).zip(&ws.logits)
                    {
                        *gjk += aj * dz;
                        back += wjk * dz;
                    }
                    ws.dhidden[j] = back * (1.0 - aj * aj);
                }
                for (gbk, &dz) in gb2.iter_mut().zip(&ws.logits) {
                    *gbk += dz;
                }
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (gij, &dh) in gw1[i * h..(i + 1) * h].iter_mut().zip(&ws.dhidden) {
                        *gij += xi * dh;
                    }
                }
                for (gbj, &dh) in gb1.iter_mut().zip(&ws.dhidden) {
                    *gbj += dh;
                }
            }
            loss
        }
    }
}

/// Mean cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grad<S: Borrow<Sample>>(
    params: &ModelParams,
    batch: &[S],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut ws = Workspace::new(&params.arch);
    let mut grad = vec![0.0; params.weights.len()];
    let mut total = 0.0;
    for s in batch {
        let s = s.borrow();
        check_sample(&params.arch, s)?;
        total += sample_loss(params, s, &mut ws, Some(&mut grad));
    }
    let n = batch.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok((total / n, grad))
}

/// `w - eta * g`
pub fn sgd_step(params: &ModelParams, grad: &[f64], eta: f64) -> Result<ModelParams> {
    if grad.len() != params.weights.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries, model has {}",
            grad.len(),
            params.weights.len()
        )));
    }
    Ok(ModelParams {
        arch: params.arch,
        weights: params
            .weights
            .iter()
            .zip(grad)
            .map(|(w, g)| w - eta * g)
            .collect(),
    })
}

/// Heavy-ball SGD: `v <- mu*v + g`, step `eta*v`. Velocity starts at zero.
#[derive(Debug, Clone)]
pub struct MomentumSgd {
    pub eta: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl MomentumSgd {
    pub fn new(eta: f64, momentum: f64, len: usize) -> Self {
        Self {
            eta,
            momentum,
            velocity: vec![0.0; len],
        }
    }

    /// Applies one step to `weights` and writes the applied step (`eta*v`)
    /// into `step`.
    pub fn step(&mut self, weights: &mut [f64], grad: &[f64], step: &mut [f64]) {
        for (((w, v), &g), s) in weights
            .iter_mut()
            .zip(self.velocity.iter_mut())
            .zip(grad)
            .zip(step.iter_mut())
        {
            *v = self.momentum * *v + g;
            *s = self.eta * *v;
            *w -= *s;
        }
    }
}

/// Mean cross-entropy over the test set.
///
/// Per-sample losses are summed in ascending order, which makes the result
/// independent of test-set ordering bit for bit.
pub fn eval_test_loss<S: Borrow<Sample>>(params: &ModelParams, test_set: &[S]) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::Shape("empty test set".into()));
    }
    let mut ws = Workspace::new(&params.arch);
    let mut losses = Vec::with_capacity(test_set.len());
    for s in test_set {
        let s = s.borrow();
        check_sample(&params.arch, s)?;
        losses.push(sample_loss(params, s, &mut ws, None));
    }
    losses.sort_unstable_by(f64::total_cmp);
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"DPFM";

/// Checkpoint blob: `"DPFM"`, then little-endian u32 kind (0 = LR, 1 = MLP),
/// hidden units, feature dim, class count, parameter count, followed by the
/// weights as little-endian f64.
pub fn encode_params(params: &ModelParams) -> Vec<u8> {
    let arch = params.arch;
    let (kind, hidden) = match arch.kind {
        ModelKind::LogisticRegression => (0u32, 0u32),
        ModelKind::Mlp { hidden_units } => (1, hidden_units as u32),
    };
    let mut out = Vec::with_capacity(24 + 8 * params.weights.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        kind,
        hidden,
        arch.feature_dim as u32,
        arch.num_classes as u32,
        params.weights.len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for w in &params.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 24 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let word = |i: usize| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
    };
    let kind = match word(0) {
        0 => ModelKind::LogisticRegression,
        1 => ModelKind::Mlp {
            hidden_units: word(1),
        },
        other => return Err(Error::Format(format!("unknown model kind {other}"))),
    };
    let arch = ModelArch {
        kind,
        feature_dim: word(2),
        num_classes: word(3),
    };
    let n = word(4);
    let body = &bytes[24..];
    if body.len() != 8 * n {
        return Err(Error::Length {
            expected: 8 * n,
            found: body.len(),
        });
    }
    let weights = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ModelParams::from_weights(arch, weights)
}
