use rand::Rng;
use rand_distr::StandardNormal;

use super::adam::Adam;
use super::decoder::{DecoderModel, DecoderWorkspace, ModelGrads, TrainMeta};
use super::nll::SessionSummary;
use super::LatentPoint;
use crate::dist::SessionDataset;
use crate::error::{Error, Result};
use crate::seeds::stream;

/// Configuration for joint decoder/latent training.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs_max: u32,
    pub learning_rate: f64,
    /// L2 coefficient applied to latent coordinates and layer weights.
    pub penalty: f64,
    /// Stop once the best loss improves by less than this over
    /// `early_stop_window` consecutive epochs.
    pub early_stop_tol: f64,
    pub early_stop_window: u32,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_max: 10_000,
            learning_rate: 0.01,
            penalty: 0.01,
            early_stop_tol: 1e-6,
            early_stop_window: 100,
            seed: 0,
            hidden: vec![32, 32],
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs_max < 1 {
            return Err(Error::InvalidConfig("epochs_max must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.penalty < 0.0 {
            return Err(Error::InvalidConfig("penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: DecoderModel,
    pub latents: Vec<LatentPoint>,
    /// Total loss after every epoch, for convergence diagnostics.
    pub loss_trace: Vec<f64>,
}

fn init_model<R: Rng>(latent_dim: usize, hidden: &[usize], rng: &mut R) -> DecoderModel {
    let mut model = DecoderModel::zeros(latent_dim, hidden);
    for layer in &mut model.layers {
        let scale = 1.0 / (layer.cols as f64).sqrt();
        for w in &mut layer.w {
            let z: f64 = rng.sample(StandardNormal);
            *w = scale * z;
        }
        // Biases start at zero.
    }
    model
}

/// Random decoder with seeded weights; used as a generator in tests.
#[cfg(test)]
pub(crate) fn random_model_for_tests(latent_dim: usize, hidden: &[usize], seed: u64) -> DecoderModel {
    let mut rng = stream(seed, "test-model", 0);
    init_model(latent_dim, hidden, &mut rng)
}

fn flat_len(model: &DecoderModel, n_sessions: usize) -> usize {
    let weights: usize = model.layers.iter().map(|l| l.w.len() + l.b.len()).sum();
    weights + n_sessions * model.latent_dim
}

fn pack(model: &DecoderModel, latents: &[Vec<f64>], out: &mut [f64]) {
    let mut at = 0;
    for layer in &model.layers {
        out[at..at + layer.w.len()].copy_from_slice(&layer.w);
        at += layer.w.len();
        out[at..at + layer.b.len()].copy_from_slice(&layer.b);
        at += layer.b.len();
    }
    for z in latents {
        out[at..at + z.len()].copy_from_slice(z);
        at += z.len();
    }
    debug_assert_eq!(at, out.len());
}

fn unpack(flat: &[f64], model: &mut DecoderModel, latents: &mut [Vec<f64>]) {
    let mut at = 0;
    for layer in &mut model.layers {
        let nw = layer.w.len();
        layer.w.copy_from_slice(&flat[at..at + nw]);
        at += nw;
        let nb = layer.b.len();
        layer.b.copy_from_slice(&flat[at..at + nb]);
        at += nb;
    }
    for z in latents.iter_mut() {
        let nz = z.len();
        z.copy_from_slice(&flat[at..at + nz]);
        at += nz;
    }
    debug_assert_eq!(at, flat.len());
}

/// Shifts latents to zero mean and unit variance per dimension, folding
/// the inverse affine map into the first layer so decoded outputs are
/// unchanged.
fn standardize_latents(model: &mut DecoderModel, latents: &mut [Vec<f64>]) {
    let d = model.latent_dim;
    let n = latents.len() as f64;
    for dim in 0..d {
        let mean = latents.iter().map(|z| z[dim]).sum::<f64>() / n;
        let var = latents.iter().map(|z| (z[dim] - mean).powi(2)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        let layer = &mut model.layers[0];
        for r in 0..layer.rows {
            let w = &mut layer.w[r * layer.cols + dim];
            layer.b[r] += *w * mean;
            *w *= std;
        }
        for z in latents.iter_mut() {
            z[dim] = (z[dim] - mean) / std;
        }
    }
}

/// Jointly fits decoder weights and per-session latents by minimizing
/// `Σ session NLL + penalty·(Σ‖z‖² + ‖W‖²)` with Adam.
///
/// Runs at most `cfg.epochs_max` epochs, stopping early once the loss
/// plateaus; returns the best iterate seen, so the recorded final loss
/// never exceeds the initial loss. Latents are standardized per dimension
/// on the way out (the decoder absorbs the affine change, outputs are
/// unchanged).
pub fn train(
    sessions: &[SessionDataset],
    latent_dim: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if sessions.is_empty() {
        return Err(Error::EmptyInput("train sessions"));
    }
    if !(1..=3).contains(&latent_dim) {
        return Err(Error::InvalidConfig(format!(
            "latent_dim must be 1..=3, got {latent_dim}"
        )));
    }
    let summaries: Vec<SessionSummary> = sessions
        .iter()
        .map(SessionSummary::from_dataset)
        .collect::<Result<_>>()?;

    let mut rng = stream(cfg.seed, "train-init", 0);
    let mut model = init_model(latent_dim, &cfg.hidden, &mut rng);
    let mut latents: Vec<Vec<f64>> = (0..sessions.len())
        .map(|_| {
            (0..latent_dim)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    0.5 * z
                })
                .collect()
        })
        .collect();

    let n_flat = flat_len(&model, sessions.len());
    let mut flat = vec![0.0; n_flat];
    pack(&model, &latents, &mut flat);
    let mut grad_flat = vec![0.0; n_flat];
    let mut adam = Adam::new(cfg.learning_rate, n_flat);

    let mut grads = ModelGrads::zeros_like(&model);
    let mut latent_grads: Vec<Vec<f64>> = latents.iter().map(|z| vec![0.0; z.len()]).collect();
    let mut ws = DecoderWorkspace::default();
    let mut grad12 = [0.0; 12];

    let mut best_loss = f64::INFINITY;
    let mut best_flat = flat.clone();
    let mut initial_loss = f64::NAN;
    let mut mark_loss = f64::INFINITY;
    let mut mark_epoch = 0u32;
    let mut epochs_run = 0u32;
    let mut loss_trace = Vec::with_capacity(cfg.epochs_max as usize);

    for epoch in 0..cfg.epochs_max {
        unpack(&flat, &mut model, &mut latents);
        grads.reset();
        let mut loss = 0.0;
        for (i, summary) in summaries.iter().enumerate() {
            let params = model.decode_into(&latents[i], &mut ws);
            loss += summary.nll_grad(&params, &mut grad12);
            model.backward(&mut ws, &grad12, &mut latent_grads[i], Some(&mut grads));
        }
        // L2 penalty on latent coordinates and layer weights.
        for (i, z) in latents.iter().enumerate() {
            for (d, &zd) in z.iter().enumerate() {
                loss += cfg.penalty * zd * zd;
                latent_grads[i][d] += 2.0 * cfg.penalty * zd;
            }
        }
        for (li, layer) in model.layers.iter().enumerate() {
            for (wi, &w) in layer.w.iter().enumerate() {
                loss += cfg.penalty * w * w;
                grads.layers[li].w[wi] += 2.0 * cfg.penalty * w;
            }
        }

        epochs_run = epoch + 1;
        loss_trace.push(loss);
        if epoch == 0 {
            initial_loss = loss;
        }
        if loss < best_loss {
            best_loss = loss;
            best_flat.copy_from_slice(&flat);
        }
        if best_loss < mark_loss - cfg.early_stop_tol {
            mark_loss = best_loss;
            mark_epoch = epoch;
        } else if epoch - mark_epoch >= cfg.early_stop_window {
            break;
        }

        pack_grads(&grads, &latent_grads, &mut grad_flat);
        adam.step(&mut flat, &grad_flat);
    }

    unpack(&best_flat, &mut model, &mut latents);
    standardize_latents(&mut model, &mut latents);
    model.meta = TrainMeta {
        epochs_run,
        initial_loss,
        final_loss: best_loss,
        seed: cfg.seed,
        learning_rate: cfg.learning_rate,
        penalty: cfg.penalty,
        training_latents: latents.clone(),
        population_mean_params: None,
    };
    Ok(TrainOutput {
        model,
        latents: latents.into_iter().map(LatentPoint).collect(),
        loss_trace,
    })
}

fn pack_grads(grads: &ModelGrads, latent_grads: &[Vec<f64>], out: &mut [f64]) {
    let mut at = 0;
    for layer in &grads.layers {
        out[at..at + layer.w.len()].copy_from_slice(&layer.w);
        at += layer.w.len();
        out[at..at + layer.b.len()].copy_from_slice(&layer.b);
        at += layer.b.len();
    }
    for g in latent_grads {
        out[at..at + g.len()].copy_from_slice(g);
        at += g.len();
    }
    debug_assert_eq!(at, out.len());
}
