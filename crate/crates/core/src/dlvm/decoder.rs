// Matrix kernels below index rows and columns directly.
#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::dist::{battery, Family, ParamVector, PARAM_COUNT, PROB_CLAMP, SPAN_MAX, SPAN_MIN};
use crate::error::{Error, Result};

/// Spreads and sigmas get a tiny additive offset on top of softplus so the
/// decoded value stays strictly positive even when the pre-activation
/// underflows.
pub const SPREAD_EPS: f64 = 1e-9;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Output link applied to one raw decoder output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    /// Raw value passes through (lognormal means).
    Identity,
    /// `softplus(x) + eps`, strictly positive (spreads, sigmas).
    Spread,
    /// Logistic squashed into the configured span range (thresholds).
    SpanRange { lo: f64, hi: f64 },
    /// Logistic clamped into the open unit interval (probabilities).
    Probability,
}

impl Link {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Link::Identity => x,
            Link::Spread => softplus(x) + SPREAD_EPS,
            Link::SpanRange { lo, hi } => lo + (hi - lo) * sigmoid(x),
            Link::Probability => sigmoid(x).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP),
        }
    }

    /// Derivative of [`Link::apply`] at `x`; zero in clamped regions.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Spread => sigmoid(x),
            Link::SpanRange { lo, hi } => {
                let s = sigmoid(x);
                (hi - lo) * s * (1.0 - s)
            }
            Link::Probability => {
                let s = sigmoid(x);
                if s <= PROB_CLAMP || s >= 1.0 - PROB_CLAMP {
                    0.0
                } else {
                    s * (1.0 - s)
                }
            }
        }
    }
}

/// Links in parameter-slot order, derived from the battery layout.
pub fn default_links() -> Vec<Link> {
    let mut links = vec![Link::Identity; PARAM_COUNT];
    for spec in battery() {
        match spec.family {
            Family::Sigmoid => {
                links[spec.slots[0]] = Link::SpanRange {
                    lo: SPAN_MIN,
                    hi: SPAN_MAX,
                };
                links[spec.slots[1]] = Link::Spread;
            }
            Family::Lognormal => {
                links[spec.slots[0]] = Link::Identity;
                links[spec.slots[1]] = Link::Spread;
            }
            Family::Binomial => {
                links[spec.slots[0]] = Link::Probability;
            }
        }
    }
    links
}

/// One affine layer `y = W x + b`, weights row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    #[inline]
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for c in 0..self.cols {
                acc += row[c] * x[c];
            }
            out[r] = acc;
        }
    }
}

/// Training metadata carried inside the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainMeta {
    pub epochs_run: u32,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub penalty: f64,
    /// Per-session latent estimates, standardized to zero mean and unit
    /// variance per dimension.
    pub training_latents: Vec<Vec<f64>>,
    /// Mean ground-truth parameters of the training population; used as
    /// the default vector for unobserved tasks downstream.
    pub population_mean_params: Option<ParamVector>,
}

/// Feed-forward decoder from latent space to the parameter vector:
/// tanh hidden layers, then one raw output per parameter passed through
/// its [`Link`]. Output always satisfies the parameter-vector invariants
/// for any finite input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderModel {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub layers: Vec<Layer>,
    pub links: Vec<Link>,
    pub meta: TrainMeta,
}

/// Scratch space for forward/backward passes; reuse across calls in hot
/// loops.
#[derive(Debug, Clone, Default)]
pub struct DecoderWorkspace {
    /// Post-tanh activations per hidden layer.
    act: Vec<Vec<f64>>,
    /// Raw (pre-link) outputs.
    pub raw: Vec<f64>,
    /// Input copy for weight gradients.
    input: Vec<f64>,
    /// Backprop delta buffers.
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

/// Gradients of a scalar loss with respect to every decoder weight.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub layers: Vec<Layer>,
}

impl ModelGrads {
    pub fn zeros_like(model: &DecoderModel) -> Self {
        ModelGrads {
            layers: model
                .layers
                .iter()
                .map(|l| Layer::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x = 0.0);
            l.b.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

impl DecoderModel {
    /// A zero-weight decoder of the given shape, links from the battery.
    pub fn zeros(latent_dim: usize, hidden: &[usize]) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(latent_dim);
        dims.extend_from_slice(hidden);
        dims.push(PARAM_COUNT);
        let layers = (0..dims.len() - 1)
            .map(|i| Layer::zeros(dims[i + 1], dims[i]))
            .collect();
        DecoderModel {
            latent_dim,
            hidden: hidden.to_vec(),
            layers,
            links: default_links(),
            meta: TrainMeta::default(),
        }
    }

    pub fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.latent_dim {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim,
                got: z.len(),
            });
        }
        Ok(())
    }

    /// Deterministic forward pass; the output satisfies all parameter
    /// invariants for any finite `z`.
    pub fn decode(&self, z: &[f64]) -> Result<ParamVector> {
        self.check_dim(z)?;
        let mut ws = DecoderWorkspace::default();
        Ok(self.decode_into(z, &mut ws))
    }

    /// Forward pass writing activations into `ws` for a later backward
    /// pass.
    pub fn decode_into(&self, z: &[f64], ws: &mut DecoderWorkspace) -> ParamVector {
        debug_assert_eq!(z.len(), self.latent_dim);
        let n_hidden = self.hidden.len();
        ws.act.resize(n_hidden, Vec::new());
        ws.input.clear();
        ws.input.extend_from_slice(z);
        for i in 0..n_hidden {
            let mut out = std::mem::take(&mut ws.act[i]);
            out.resize(self.layers[i].rows, 0.0);
            {
                let x: &[f64] = if i == 0 { &ws.input } else { &ws.act[i - 1] };
                self.layers[i].forward(x, &mut out);
            }
            for v in out.iter_mut() {
                *v = v.tanh();
            }
            ws.act[i] = out;
        }
        ws.raw.resize(PARAM_COUNT, 0.0);
        let x: &[f64] = if n_hidden == 0 {
            &ws.input
        } else {
            &ws.act[n_hidden - 1]
        };
        self.layers[n_hidden].forward(x, &mut ws.raw);
        let mut params = [0.0; PARAM_COUNT];
        for j in 0..PARAM_COUNT {
            params[j] = self.links[j].apply(ws.raw[j]);
        }
        ParamVector(params)
    }

    /// Backward pass from a gradient w.r.t. the decoded parameters.
    ///
    /// `ws` must hold the activations of the matching forward pass. Writes
    /// the gradient w.r.t. the latent input into `dz`, and accumulates
    /// weight gradients into `grads` when provided.
    pub fn backward(
        &self,
        ws: &mut DecoderWorkspace,
        dparams: &[f64; PARAM_COUNT],
        dz: &mut [f64],
        mut grads: Option<&mut ModelGrads>,
    ) {
        let n_hidden = self.hidden.len();
        // Chain through the links into raw-output space.
        ws.delta.resize(PARAM_COUNT, 0.0);
        for j in 0..PARAM_COUNT {
            ws.delta[j] = dparams[j] * self.links[j].derivative(ws.raw[j]);
        }
        // Walk layers backwards.
        for i in (0..=n_hidden).rev() {
            let layer = &self.layers[i];
            let input: &[f64] = if i == 0 { &ws.input } else { &ws.act[i - 1] };
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[i];
                for r in 0..layer.rows {
                    let d = ws.delta[r];
                    gl.b[r] += d;
                    let row = &mut gl.w[r * layer.cols..(r + 1) * layer.cols];
                    for c in 0..layer.cols {
                        row[c] += d * input[c];
                    }
                }
            }
            // Propagate delta to the layer input.
            ws.delta_next.clear();
            ws.delta_next.resize(layer.cols, 0.0);
            for r in 0..layer.rows {
                let d = ws.delta[r];
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                for c in 0..layer.cols {
                    ws.delta_next[c] += d * row[c];
                }
            }
            if i == 0 {
                dz.copy_from_slice(&ws.delta_next);
            } else {
                // Through the tanh nonlinearity of the previous layer.
                let act = &ws.act[i - 1];
                for c in 0..layer.cols {
                    ws.delta_next[c] *= 1.0 - act[c] * act[c];
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_next);
            }
        }
    }

    /// Serializes to the versioned model JSON.
    pub fn to_json(&self) -> serde_json::Result<String> {
        #[derive(Serialize)]
        struct ModelFile<'a> {
            schema_version: u32,
            model: &'a DecoderModel,
        }
        serde_json::to_string_pretty(&ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            model: self,
        })
    }

    pub fn from_json(s: &str) -> Result<DecoderModel> {
        #[derive(Deserialize)]
        struct ModelFile {
            schema_version: u32,
            model: DecoderModel,
        }
        let file: ModelFile = serde_json::from_str(s)?;
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: MODEL_SCHEMA_VERSION,
                found: file.schema_version,
            });
        }
        let m = file.model;
        let mut dims = Vec::with_capacity(m.hidden.len() + 2);
        dims.push(m.latent_dim);
        dims.extend_from_slice(&m.hidden);
        dims.push(PARAM_COUNT);
        if m.layers.len() != dims.len() - 1 || m.links.len() != PARAM_COUNT {
            return Err(Error::Malformed {
                what: "model json",
                msg: "layer or link count does not match shape".into(),
            });
        }
        for (i, layer) in m.layers.iter().enumerate() {
            if layer.rows != dims[i + 1]
                || layer.cols != dims[i]
                || layer.w.len() != layer.rows * layer.cols
                || layer.b.len() != layer.rows
            {
                return Err(Error::Malformed {
                    what: "model json",
                    msg: format!("layer {i} has inconsistent shape"),
                });
            }
        }
        Ok(m)
    }
}
