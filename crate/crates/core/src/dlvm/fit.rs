use super::adam::Adam;
use super::decoder::{DecoderModel, DecoderWorkspace};
use super::nll::SessionSummary;
use super::LatentPoint;
use crate::dist::SessionDataset;
use crate::error::{Error, Result};

/// Multi-start settings for latent MAP estimation.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub steps: u32,
    pub lr: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            steps: 500,
            lr: 0.05,
        }
    }
}

/// MAP objective: session NLL at the decoded parameters plus the
/// standard-normal prior `½‖z‖²`.
pub fn latent_objective(model: &DecoderModel, summary: &SessionSummary, z: &[f64]) -> f64 {
    let mut ws = DecoderWorkspace::default();
    let params = model.decode_into(z, &mut ws);
    summary.nll(&params) + 0.5 * z.iter().map(|v| v * v).sum::<f64>()
}

/// Fixed start points: the origin plus eight points at radius 2 (a ring
/// for 2 dimensions, a symmetric lattice otherwise).
pub fn multi_start_points(dim: usize) -> Vec<Vec<f64>> {
    let mut starts = vec![vec![0.0; dim]];
    match dim {
        1 => {
            for v in [-2.0, 2.0, -1.5, 1.5, -1.0, 1.0, -0.5, 0.5] {
                starts.push(vec![v]);
            }
        }
        2 => {
            for k in 0..8 {
                let angle = k as f64 * std::f64::consts::FRAC_PI_4;
                starts.push(vec![2.0 * angle.cos(), 2.0 * angle.sin()]);
            }
        }
        3 => {
            let a = 2.0 / 3.0_f64.sqrt();
            for k in 0..8u32 {
                starts.push(vec![
                    if k & 1 == 0 { a } else { -a },
                    if k & 2 == 0 { a } else { -a },
                    if k & 4 == 0 { a } else { -a },
                ]);
            }
        }
        _ => {}
    }
    starts
}

/// Adam descent on the MAP objective from one start point, tracking the
/// best iterate visited. Returns `(z, objective)`.
pub fn descend_latent(
    model: &DecoderModel,
    summary: &SessionSummary,
    start: &[f64],
    steps: u32,
    lr: f64,
) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut z = start.to_vec();
    let mut best_z = z.clone();
    let mut best_obj = f64::INFINITY;
    let mut adam = Adam::new(lr, dim);
    let mut ws = DecoderWorkspace::default();
    let mut grad12 = [0.0; 12];
    let mut dz = vec![0.0; dim];
    for step in 0..=steps {
        let params = model.decode_into(&z, &mut ws);
        let nll = summary.nll_grad(&params, &mut grad12);
        let prior: f64 = 0.5 * z.iter().map(|v| v * v).sum::<f64>();
        let obj = nll + prior;
        if obj < best_obj {
            best_obj = obj;
            best_z.copy_from_slice(&z);
        }
        if step == steps {
            break;
        }
        model.backward(&mut ws, &grad12, &mut dz, None);
        for d in 0..dim {
            dz[d] += z[d];
        }
        adam.step(&mut z, &dz);
    }
    (best_z, best_obj)
}

/// Multi-start MAP fit over precomputed sufficient statistics.
pub fn fit_latent_summary(
    model: &DecoderModel,
    summary: &SessionSummary,
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> (LatentPoint, f64) {
    let mut starts = multi_start_points(model.latent_dim);
    if let Some(z0) = init {
        if !starts.iter().any(|s| s.as_slice() == z0) {
            starts.push(z0.to_vec());
        }
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let (z, obj) = descend_latent(model, summary, start, opts.steps, opts.lr);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((z, obj));
        }
    }
    let (z, obj) = best.expect("at least one start point");
    (LatentPoint(z), obj)
}

/// MAP estimate of a session's latent position: minimizes
/// `session_nll(decode(z), data) + ½‖z‖²` by Adam from nine fixed starts
/// plus the supplied initial point. The returned point's objective never
/// exceeds the objective at any start.
pub fn fit_latent(
    model: &DecoderModel,
    data: &SessionDataset,
    init: &LatentPoint,
    opts: &FitOptions,
) -> Result<LatentPoint> {
    if data.trials.is_empty() {
        return Err(Error::EmptyInput("fit_latent dataset"));
    }
    if init.dim() != model.latent_dim {
        return Err(Error::DimensionMismatch {
            expected: model.latent_dim,
            got: init.dim(),
        });
    }
    let summary = SessionSummary::from_dataset(data)?;
    Ok(fit_latent_summary(model, &summary, Some(init.as_slice()), opts).0)
}
