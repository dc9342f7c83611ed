use serde::{Deserialize, Serialize};

use super::posterior::PosteriorState;
use crate::dist::{battery, Family, TaskId};
use crate::error::{Error, Result};

/// Number of log-RT bins used to discretize response-time outcomes for
/// entropy computations.
pub const RT_BINS: usize = 32;

/// One administrable trial: a task, plus a span length for sigmoid tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub task: TaskId,
    pub level: Option<u8>,
}

/// The full candidate set in canonical order: tasks in enumeration order,
/// sigmoid tasks expanded over their span levels ascending. Six plain
/// tasks plus two sigmoid tasks with eight levels each: 22 candidates.
pub fn candidate_set() -> Vec<Candidate> {
    let mut out = Vec::with_capacity(22);
    for spec in battery() {
        match spec.family {
            Family::Sigmoid => {
                for &level in spec.levels {
                    out.push(Candidate {
                        task: spec.id,
                        level: Some(level),
                    });
                }
            }
            _ => out.push(Candidate {
                task: spec.id,
                level: None,
            }),
        }
    }
    out
}

/// Predicted outcome distribution of a candidate under the current
/// posterior.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictiveDist {
    /// Marginal success probability of a binary-outcome candidate.
    Binary { p_success: f64 },
    /// Discretized response-time distribution over log-RT bins.
    Binned { edges: Vec<f64>, probs: Vec<f64> },
}

impl PredictiveDist {
    /// Total probability mass; one up to float rounding.
    pub fn total_mass(&self) -> f64 {
        match self {
            PredictiveDist::Binary { p_success } => *p_success + (1.0 - *p_success),
            PredictiveDist::Binned { probs, .. } => probs.iter().sum(),
        }
    }

    /// Outcome entropy in nats.
    pub fn entropy(&self) -> f64 {
        match self {
            PredictiveDist::Binary { p_success } => crate::dist::bernoulli_entropy(*p_success),
            PredictiveDist::Binned { probs, .. } => probs
                .iter()
                .map(|&q| if q > 0.0 { -q * q.ln() } else { 0.0 })
                .sum(),
        }
    }
}

fn unknown_candidate(cand: &Candidate) -> Error {
    Error::domain(
        "candidate",
        format!("unknown candidate {:?} level {:?}", cand.task, cand.level),
    )
}

/// Outcome distribution of `cand` marginalized over the posterior
/// weights.
pub fn predictive_dist(state: &PosteriorState, cand: &Candidate) -> Result<PredictiveDist> {
    let grid = state.grid();
    let weights = state.log_weights();
    match cand.task.family() {
        Family::Sigmoid | Family::Binomial => {
            let cache = grid
                .binary_cache(cand.task, cand.level)
                .ok_or_else(|| unknown_candidate(cand))?;
            let mut p = 0.0;
            for (lw, q) in weights.iter().zip(&cache.probs) {
                p += lw.exp() * q;
            }
            Ok(PredictiveDist::Binary { p_success: p })
        }
        Family::Lognormal => {
            if cand.level.is_some() {
                return Err(unknown_candidate(cand));
            }
            let cache = grid
                .binned_cache(cand.task)
                .ok_or_else(|| unknown_candidate(cand))?;
            let mut probs = vec![0.0; RT_BINS];
            for (i, lw) in weights.iter().enumerate() {
                let w = lw.exp();
                if w == 0.0 {
                    continue;
                }
                let row = &cache.probs[i * RT_BINS..(i + 1) * RT_BINS];
                for (acc, &q) in probs.iter_mut().zip(row) {
                    *acc += w * q;
                }
            }
            Ok(PredictiveDist::Binned {
                edges: cache.edges.clone(),
                probs,
            })
        }
    }
}

/// Mutual information between a binary outcome and the latent position:
/// entropy of the weight-mixed success probability minus the
/// weight-averaged conditional entropies. Exact for degenerate
/// conditional probabilities (`0 ln 0 = 0`).
pub fn binary_mutual_information(weights: &[f64], probs: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), probs.len());
    let mut marginal = 0.0;
    let mut cond = 0.0;
    for (&w, &p) in weights.iter().zip(probs) {
        marginal += w * p;
        cond += w * crate::dist::bernoulli_entropy(p);
    }
    (crate::dist::bernoulli_entropy(marginal) - cond).max(0.0)
}

/// Expected information gain of one candidate:
/// `I(y; z) = H(p(y)) - E_w[H(p(y|z))]`, in nats over the candidate's
/// discrete outcome space. Clamped at zero against float slack.
pub fn mutual_information(state: &PosteriorState, cand: &Candidate) -> Result<f64> {
    mutual_information_raw(state, cand).map(|mi| mi.max(0.0))
}

/// [`mutual_information`] before the zero clamp; may dip a hair below
/// zero from float cancellation.
pub fn mutual_information_raw(state: &PosteriorState, cand: &Candidate) -> Result<f64> {
    let grid = state.grid();
    let weights = state.log_weights();
    match cand.task.family() {
        Family::Sigmoid | Family::Binomial => {
            let cache = grid
                .binary_cache(cand.task, cand.level)
                .ok_or_else(|| unknown_candidate(cand))?;
            let mut marginal = 0.0;
            let mut cond = 0.0;
            for (i, lw) in weights.iter().enumerate() {
                let w = lw.exp();
                marginal += w * cache.probs[i];
                cond += w * cache.entropy[i];
            }
            Ok(crate::dist::bernoulli_entropy(marginal) - cond)
        }
        Family::Lognormal => {
            if cand.level.is_some() {
                return Err(unknown_candidate(cand));
            }
            let cache = grid
                .binned_cache(cand.task)
                .ok_or_else(|| unknown_candidate(cand))?;
            let mut marginal = vec![0.0; RT_BINS];
            let mut cond = 0.0;
            for (i, lw) in weights.iter().enumerate() {
                let w = lw.exp();
                if w == 0.0 {
                    continue;
                }
                cond += w * cache.entropy[i];
                let row = &cache.probs[i * RT_BINS..(i + 1) * RT_BINS];
                for (acc, &q) in marginal.iter_mut().zip(row) {
                    *acc += w * q;
                }
            }
            let h_marginal: f64 = marginal
                .iter()
                .map(|&q| if q > 0.0 { -q * q.ln() } else { 0.0 })
                .sum();
            Ok(h_marginal - cond)
        }
    }
}

/// Picks the candidate with the largest mutual information; ties resolve
/// to the earliest candidate in canonical order.
pub fn select_next(state: &PosteriorState, candidates: &[Candidate]) -> Result<Candidate> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate set"));
    }
    let mut best = candidates[0];
    let mut best_mi = f64::NEG_INFINITY;
    for cand in candidates {
        let mi = mutual_information(state, cand)?;
        if mi > best_mi {
            best_mi = mi;
            best = *cand;
        }
    }
    Ok(best)
}
