use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::dist::{trial_loglik_raw, ParamVector, Trial};
use crate::dlvm::{DecoderModel, LatentPoint, SessionSummary};
use crate::error::Result;

/// Who picked a trial: the fixed warm-up or the acquisition rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectedBy {
    Primer,
    Dale,
}

impl SelectedBy {
    pub fn name(self) -> &'static str {
        match self {
            SelectedBy::Primer => "primer",
            SelectedBy::Dale => "dale",
        }
    }
}

/// Gradient refinement budget for the continuous MAP estimate.
const REFINE_STEPS: u32 = 120;
const REFINE_LR: f64 = 0.05;

/// Evolving belief over latent space: lattice support with normalized
/// log-weights, a refined MAP estimate, and the trial history.
#[derive(Debug, Clone)]
pub struct PosteriorState<'m> {
    model: &'m DecoderModel,
    grid: Arc<Grid>,
    log_weights: Vec<f64>,
    map: LatentPoint,
    map_params: ParamVector,
    summary: SessionSummary,
    history: Vec<(Trial, SelectedBy)>,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl<'m> PosteriorState<'m> {
    /// Initial posterior: the standard-normal prior discretized on the
    /// lattice, empty history, MAP at the prior mode.
    pub fn init(model: &'m DecoderModel, grid: Arc<Grid>) -> Result<Self> {
        grid.spec.validate()?;
        let mut log_weights = grid.log_prior.clone();
        let lse = log_sum_exp(&log_weights);
        log_weights.iter_mut().for_each(|w| *w -= lse);
        let mut state = PosteriorState {
            model,
            grid,
            log_weights,
            map: LatentPoint::origin(model.latent_dim),
            map_params: model.decode(&vec![0.0; model.latent_dim])?,
            summary: SessionSummary::new(),
            history: Vec::new(),
        };
        state.refresh_map();
        Ok(state)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &DecoderModel {
        self.model
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Normalized weights.
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn map_estimate(&self) -> &LatentPoint {
        &self.map
    }

    /// Decoded parameters at the MAP estimate.
    pub fn map_params(&self) -> &ParamVector {
        &self.map_params
    }

    pub fn history(&self) -> &[(Trial, SelectedBy)] {
        &self.history
    }

    pub fn summary(&self) -> &SessionSummary {
        &self.summary
    }

    /// Posterior entropy over the lattice, in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .log_weights
            .iter()
            .map(|&lw| {
                let w = lw.exp();
                if w > 0.0 {
                    w * lw
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    }

    /// Continuous MAP objective `NLL(decode(z)) + ½‖z‖²` at `z`.
    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        self.model.check_dim(z)?;
        Ok(crate::dlvm::latent_objective(self.model, &self.summary, z))
    }

    /// Folds one observed trial into the posterior: each lattice weight
    /// gains the trial log-likelihood under its decoded parameters, the
    /// weights renormalize, and the MAP refines from the lattice argmax.
    pub fn update(&mut self, trial: &Trial, selected_by: SelectedBy) -> Result<()> {
        trial.validate()?;
        for (i, params) in self.grid.decoded.iter().enumerate() {
            self.log_weights[i] += trial_loglik_raw(params, trial);
        }
        let lse = log_sum_exp(&self.log_weights);
        self.log_weights.iter_mut().for_each(|w| *w -= lse);
        self.summary.push(trial)?;
        self.history.push((*trial, selected_by));
        self.refresh_map();
        Ok(())
    }

    /// Applies several trials with a single renormalization and MAP
    /// refinement; equivalent to sequential updates up to float rounding.
    pub fn update_batch(&mut self, trials: &[(Trial, SelectedBy)]) -> Result<()> {
        for (trial, _) in trials {
            trial.validate()?;
        }
        for (trial, selected_by) in trials {
            for (i, params) in self.grid.decoded.iter().enumerate() {
                self.log_weights[i] += trial_loglik_raw(params, trial);
            }
            self.summary.push(trial)?;
            self.history.push((*trial, *selected_by));
        }
        let lse = log_sum_exp(&self.log_weights);
        self.log_weights.iter_mut().for_each(|w| *w -= lse);
        self.refresh_map();
        Ok(())
    }

    /// Replaces the lattice weights (diagnostic/testing surface); the
    /// input is normalized and the MAP snaps to the lattice argmax
    /// without gradient refinement.
    pub fn set_log_weights(&mut self, log_weights: Vec<f64>) -> Result<()> {
        if log_weights.len() != self.grid.len() {
            return Err(crate::error::Error::InvalidConfig(format!(
                "expected {} weights, got {}",
                self.grid.len(),
                log_weights.len()
            )));
        }
        let lse = log_sum_exp(&log_weights);
        if !lse.is_finite() {
            return Err(crate::error::Error::InvalidConfig(
                "weights must have finite total mass".into(),
            ));
        }
        self.log_weights = log_weights;
        self.log_weights.iter_mut().for_each(|w| *w -= lse);
        let best = self.grid_argmax();
        self.map = LatentPoint(self.grid.point(best).to_vec());
        self.map_params = self.grid.decoded[best];
        Ok(())
    }

    fn grid_argmax(&self) -> usize {
        let mut best = 0;
        let mut best_w = f64::NEG_INFINITY;
        for (i, &w) in self.log_weights.iter().enumerate() {
            if w > best_w {
                best_w = w;
                best = i;
            }
        }
        best
    }

    /// Refines the MAP estimate by Adam descent on the continuous
    /// objective, from the lattice argmax and from the previous MAP.
    /// Comparing the refined candidates (rather than raw lattice values)
    /// keeps the estimate from hopping between near-equivalent modes on
    /// lattice discretization noise, and the argmax point itself stays in
    /// the candidate set so the MAP objective never exceeds the objective
    /// of any lattice point.
    fn refresh_map(&mut self) {
        let best = self.grid_argmax();
        let start = self.grid.point(best);
        let start_obj = crate::dlvm::latent_objective(self.model, &self.summary, start);
        let mut cand = LatentPoint(start.to_vec());
        let mut cand_obj = start_obj;
        let (refined, refined_obj) =
            crate::dlvm::descend_latent(self.model, &self.summary, start, REFINE_STEPS, REFINE_LR);
        if refined_obj < cand_obj {
            cand = LatentPoint(refined);
            cand_obj = refined_obj;
        }
        if !self.history.is_empty() {
            let (warm, warm_obj) = crate::dlvm::descend_latent(
                self.model,
                &self.summary,
                self.map.as_slice(),
                REFINE_STEPS,
                REFINE_LR,
            );
            // Ties favor the held mode for stability.
            if warm_obj <= cand_obj {
                cand = LatentPoint(warm);
            }
        }
        self.map = cand;
        self.map_params = self
            .model
            .decode(self.map.as_slice())
            .expect("map estimate has the model's dimension");
    }
}
