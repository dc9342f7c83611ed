use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dale::{Candidate, Grid, TrialSource};
use crate::dist::{
    battery, sample_trial, task_spec, Family, Outcome, ParamVector, Trial, STIMULUS_LEVELS,
};
use crate::dlvm::{DecoderModel, LatentPoint, SessionSummary};
use crate::error::{Error, Result};
use crate::seeds::{child_seed, stream};

/// Pre-generated trials per distribution in every session bank.
pub const BANK_SIZE: usize = 240;

/// One simulated participant-session: a latent position, its decoded
/// ground-truth parameters, and a seeded bank of trials per task that
/// every sampling strategy consumes.
#[derive(Debug, Clone)]
pub struct GroundTruthSession {
    pub session_id: String,
    pub latent: LatentPoint,
    pub params: ParamVector,
    pub banks: [Vec<Trial>; 8],
    pub seed: u64,
}

impl GroundTruthSession {
    /// All bank trials flattened task-major; the order used by
    /// equal-allocation fits.
    pub fn full_bank_summary(&self) -> Result<SessionSummary> {
        let mut summary = SessionSummary::new();
        for bank in &self.banks {
            for trial in bank {
                summary.push(trial)?;
            }
        }
        Ok(summary)
    }

    /// The first `n` bank trials of each task, in bank order.
    pub fn first_n_per_task(&self, n: usize) -> Result<Vec<Trial>> {
        if n > BANK_SIZE {
            return Err(Error::InvalidConfig(format!(
                "requested {n} trials per task, bank holds {BANK_SIZE}"
            )));
        }
        let mut out = Vec::with_capacity(n * 8);
        for bank in &self.banks {
            out.extend_from_slice(&bank[..n]);
        }
        Ok(out)
    }
}

/// Smallest regular lattice with at least `count` points covering
/// `bounds`, thinned to exactly `count` points by dropping one seeded
/// pick from each of `lattice - count` even strata. Deterministic given
/// the seed; returns the full lattice in row-major order when it already
/// has exactly `count` points.
pub fn grid_latents(count: usize, bounds: &[(f64, f64)], seed: u64) -> Result<Vec<LatentPoint>> {
    if count == 0 {
        return Err(Error::InvalidConfig("count must be >= 1".into()));
    }
    let dim = bounds.len();
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidConfig(format!(
            "bounds must cover 1..=3 dimensions, got {dim}"
        )));
    }
    for &(lo, hi) in bounds {
        if lo >= hi || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "degenerate bounds [{lo}, {hi}]"
            )));
        }
    }
    // Smallest per-dimension resolution whose lattice reaches count.
    let mut m = 1usize;
    while m.pow(dim as u32) < count {
        m += 1;
    }
    let n = m.pow(dim as u32);
    let coord = |i: usize, d: usize| -> f64 {
        let (lo, hi) = bounds[d];
        if m == 1 {
            (lo + hi) / 2.0
        } else {
            lo + (hi - lo) * i as f64 / (m - 1) as f64
        }
    };
    let point = |idx: usize| -> Vec<f64> {
        let mut rest = idx;
        let mut z = vec![0.0; dim];
        for d in (0..dim).rev() {
            z[d] = coord(rest % m, d);
            rest /= m;
        }
        z
    };

    let n_drop = n - count;
    let mut dropped = vec![false; n];
    if n_drop > 0 {
        let mut rng = stream(seed, "lattice-thinning", 0);
        for k in 0..n_drop {
            // Even strata over the row-major index range; one drop each.
            let lo = k * n / n_drop;
            let hi = (k + 1) * n / n_drop;
            let pick = rng.random_range(lo..hi);
            debug_assert!(!dropped[pick], "strata are disjoint");
            dropped[pick] = true;
        }
    }
    Ok((0..n)
        .filter(|&i| !dropped[i])
        .map(|i| LatentPoint(point(i)))
        .collect())
}

/// Default sampling bounds: the training latents' coordinate range per
/// dimension, scaled about its center.
pub fn default_bounds(model: &DecoderModel, scale: f64) -> Result<Vec<(f64, f64)>> {
    let latents = &model.meta.training_latents;
    if latents.is_empty() {
        return Err(Error::InvalidConfig(
            "model carries no training latents to derive bounds from".into(),
        ));
    }
    let mut bounds = Vec::with_capacity(model.latent_dim);
    for d in 0..model.latent_dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for z in latents {
            lo = lo.min(z[d]);
            hi = hi.max(z[d]);
        }
        let center = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        bounds.push((center - scale * half, center + scale * half));
    }
    Ok(bounds)
}

/// Decodes the ground-truth parameters at `z` and pre-draws the trial
/// banks: `n_per_task` trials per distribution, sigmoid stimulus levels
/// uniform over the span range. Bit-reproducible from the seed.
pub fn make_ground_truth(
    model: &DecoderModel,
    session_id: impl Into<String>,
    z: &LatentPoint,
    n_per_task: usize,
    seed: u64,
) -> Result<GroundTruthSession> {
    model.check_dim(z.as_slice())?;
    let params = model.decode(z.as_slice())?;
    params.validate()?;
    let mut banks: [Vec<Trial>; 8] = Default::default();
    for spec in battery() {
        let mut rng = stream(child_seed(seed, "bank-task", spec.id.index() as u64), "draws", 0);
        let bank = &mut banks[spec.id.index()];
        bank.reserve(n_per_task);
        for _ in 0..n_per_task {
            let stim = match spec.family {
                Family::Sigmoid => {
                    Some(rng.random_range(*STIMULUS_LEVELS.start()..=*STIMULUS_LEVELS.end()))
                }
                _ => None,
            };
            bank.push(sample_trial(spec, &params, stim, &mut rng)?);
        }
    }
    Ok(GroundTruthSession {
        session_id: session_id.into(),
        latent: z.clone(),
        params,
        banks,
        seed,
    })
}

/// Builds the evaluation suite: lattice-samples latent space over the
/// scaled training range and materializes one ground-truth session per
/// point. Session seeds fan out from the root seed.
pub fn build_suite(
    model: &DecoderModel,
    count: usize,
    bounds_scale: f64,
    n_per_task: usize,
    root_seed: u64,
) -> Result<Vec<GroundTruthSession>> {
    let bounds = default_bounds(model, bounds_scale)?;
    let latents = grid_latents(count, &bounds, child_seed(root_seed, "suite-thinning", 0))?;
    latents
        .iter()
        .enumerate()
        .map(|(i, z)| {
            make_ground_truth(
                model,
                format!("LD{}-{:03}", model.latent_dim, i),
                z,
                n_per_task,
                child_seed(root_seed, "suite-session", i as u64),
            )
        })
        .collect()
}

/// Mutable consumption state over one session's banks. Serves bank trials
/// in order; when a sigmoid candidate requests a different span length
/// than the next pre-drawn trial, a fresh seeded Bernoulli at the
/// requested length substitutes and still consumes the bank slot.
pub struct SessionCursor<'a> {
    session: &'a GroundTruthSession,
    served: [usize; 8],
    redraw_rngs: [ChaCha8Rng; 2],
}

impl<'a> SessionCursor<'a> {
    pub fn new(session: &'a GroundTruthSession) -> Self {
        SessionCursor {
            session,
            served: [0; 8],
            redraw_rngs: [
                stream(child_seed(session.seed, "redraw", 0), "redraw", 0),
                stream(child_seed(session.seed, "redraw", 1), "redraw", 1),
            ],
        }
    }

    pub fn served(&self, task: crate::dist::TaskId) -> usize {
        self.served[task.index()]
    }

    pub fn total_served(&self) -> usize {
        self.served.iter().sum()
    }
}

impl TrialSource for SessionCursor<'_> {
    fn serve(&mut self, cand: &Candidate) -> Result<Trial> {
        let spec = task_spec(cand.task);
        let idx = cand.task.index();
        let bank = &self.session.banks[idx];
        if self.served[idx] >= bank.len() {
            return Err(Error::BankExhausted(cand.task));
        }
        let next = bank[self.served[idx]];
        let trial = match (spec.family, cand.level) {
            (Family::Sigmoid, Some(level)) => {
                if !spec.levels.contains(&level) {
                    return Err(Error::domain(
                        "SessionCursor::serve",
                        format!("level {level} not presented by {}", cand.task.name()),
                    ));
                }
                if next.level == Some(level) {
                    next
                } else {
                    // Fresh draw at the requested length, counted
                    // against the same budget.
                    let (theta, s) = self.session.params.sigmoid(cand.task);
                    let p = crate::dist::psychometric_prob(f64::from(level), theta, s)?;
                    let rng_idx = match cand.task {
                        crate::dist::TaskId::CorsiComplex => 0,
                        _ => 1,
                    };
                    let correct = self.redraw_rngs[rng_idx].random::<f64>() < p;
                    Trial {
                        task: cand.task,
                        level: Some(level),
                        outcome: Outcome::Binary(correct),
                    }
                }
            }
            (Family::Sigmoid, None) => next,
            (_, Some(_)) => {
                return Err(Error::domain(
                    "SessionCursor::serve",
                    format!("{} takes no stimulus level", cand.task.name()),
                ))
            }
            (_, None) => next,
        };
        self.served[idx] += 1;
        Ok(trial)
    }
}

/// Cached landscape of the full-bank NLL over an evaluation lattice.
#[derive(Debug, Clone)]
pub struct NnlpContext {
    summary: SessionSummary,
    pub min_nll: f64,
    pub max_nll: f64,
}

/// Sweeps the full trial bank's NLL over the lattice once, for repeated
/// normalized evaluations.
pub fn nnlp_context(session: &GroundTruthSession, eval_grid: &Grid) -> Result<NnlpContext> {
    if eval_grid.is_empty() {
        return Err(Error::EmptyInput("nnlp evaluation grid"));
    }
    let summary = session.full_bank_summary()?;
    let mut min_nll = f64::INFINITY;
    let mut max_nll = f64::NEG_INFINITY;
    for params in &eval_grid.decoded {
        let nll = summary.nll(params);
        min_nll = min_nll.min(nll);
        max_nll = max_nll.max(nll);
    }
    Ok(NnlpContext {
        summary,
        min_nll,
        max_nll,
    })
}

impl NnlpContext {
    /// Min–max-normalized NLL of the bank at a candidate position,
    /// clamped to [0, 1]; a flat landscape scores 0.
    pub fn normalized(&self, model: &DecoderModel, z: &[f64]) -> Result<f64> {
        model.check_dim(z)?;
        let nll = self.summary.nll(&model.decode(z)?);
        let span = self.max_nll - self.min_nll;
        if span <= 0.0 {
            return Ok(0.0);
        }
        Ok(((nll - self.min_nll) / span).clamp(0.0, 1.0))
    }
}

/// Normalized negative log probability of the session's full bank at
/// `z_candidate`: the bank NLL, min–max normalized over the evaluation
/// lattice and clamped to [0, 1].
pub fn normalized_nnlp(
    model: &DecoderModel,
    z_candidate: &[f64],
    session: &GroundTruthSession,
    eval_grid: &Grid,
) -> Result<f64> {
    nnlp_context(session, eval_grid)?.normalized(model, z_candidate)
}
