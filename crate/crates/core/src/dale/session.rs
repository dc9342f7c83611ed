use std::sync::Arc;

use rand::Rng;

use super::acquisition::{candidate_set, select_next, Candidate};
use super::grid::Grid;
use super::posterior::{PosteriorState, SelectedBy};
use crate::dist::{battery, session_kld, Family, ParamVector, Trial, STIMULUS_LEVELS};
use crate::dlvm::{DecoderModel, LatentPoint};
use crate::error::{Error, Result};

/// Answers candidate trials; implemented by the ground-truth oracle and
/// by any replay source.
pub trait TrialSource {
    fn serve(&mut self, cand: &Candidate) -> Result<Trial>;
}

/// One row of a session trajectory: the administered trial and the state
/// of the belief after absorbing it.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub trial_index: usize,
    pub selected_by: SelectedBy,
    pub trial: Trial,
    pub map: LatentPoint,
    /// Divergence of the decoded MAP parameters from the ground truth,
    /// when the truth is known.
    pub session_kld: Option<f64>,
    pub posterior_entropy: f64,
}

/// Complete record of one adaptive session.
#[derive(Debug, Clone)]
pub struct DaleRun {
    pub steps: Vec<TrajectoryStep>,
    /// Set when the trial source failed mid-session; the trajectory is
    /// then partial.
    pub aborted: Option<String>,
}

fn record_step(
    steps: &mut Vec<TrajectoryStep>,
    state: &PosteriorState,
    trial: Trial,
    selected_by: SelectedBy,
    truth: Option<&ParamVector>,
) -> Result<()> {
    let session_kld = match truth {
        Some(t) => Some(session_kld(state.map_params(), t)?),
        None => None,
    };
    steps.push(TrajectoryStep {
        trial_index: steps.len(),
        selected_by,
        trial,
        map: state.map_estimate().clone(),
        session_kld,
        posterior_entropy: state.entropy(),
    });
    Ok(())
}

/// Administers `per_task` trials of every task in canonical order,
/// updating the posterior after each observation. Sigmoid stimulus levels
/// are drawn uniformly from the task's span range.
pub fn run_primer<R: Rng>(
    state: &mut PosteriorState,
    source: &mut dyn TrialSource,
    per_task: usize,
    rng: &mut R,
    truth: Option<&ParamVector>,
    steps: &mut Vec<TrajectoryStep>,
) -> Result<()> {
    for spec in battery() {
        for _ in 0..per_task {
            let level = match spec.family {
                Family::Sigmoid => {
                    Some(rng.random_range(*STIMULUS_LEVELS.start()..=*STIMULUS_LEVELS.end()))
                }
                _ => None,
            };
            let cand = Candidate {
                task: spec.id,
                level,
            };
            let trial = source.serve(&cand)?;
            state.update(&trial, SelectedBy::Primer)?;
            record_step(steps, state, trial, SelectedBy::Primer, truth)?;
        }
    }
    Ok(())
}

/// Runs one adaptive session: the primer phase, then repeated
/// select-administer-update until `budget` total trials.
///
/// The trajectory records the MAP estimate, divergence from the ground
/// truth (when known), and posterior entropy after every trial. A trial
/// source failure after the session has started aborts with the partial
/// trajectory flagged.
pub fn run_dale_session<'m, R: Rng>(
    model: &'m DecoderModel,
    grid: Arc<Grid>,
    source: &mut dyn TrialSource,
    budget: usize,
    primer_per_task: usize,
    rng: &mut R,
    truth: Option<&ParamVector>,
) -> Result<(DaleRun, PosteriorState<'m>)> {
    let n_tasks = battery().len();
    if budget < n_tasks * primer_per_task {
        return Err(Error::InvalidConfig(format!(
            "budget {budget} cannot cover the primer ({} trials)",
            n_tasks * primer_per_task
        )));
    }
    let mut state = PosteriorState::init(model, grid)?;
    let mut steps = Vec::with_capacity(budget);
    let mut aborted = None;

    if let Err(e) = run_primer(&mut state, source, primer_per_task, rng, truth, &mut steps) {
        return finish(steps, Some(e.to_string()), state);
    }

    let candidates = candidate_set();
    while steps.len() < budget {
        let cand = select_next(&state, &candidates)?;
        let trial = match source.serve(&cand) {
            Ok(t) => t,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        };
        state.update(&trial, SelectedBy::Dale)?;
        record_step(&mut steps, &state, trial, SelectedBy::Dale, truth)?;
    }
    finish(steps, aborted, state)
}

fn finish<'m>(
    steps: Vec<TrajectoryStep>,
    aborted: Option<String>,
    state: PosteriorState<'m>,
) -> Result<(DaleRun, PosteriorState<'m>)> {
    Ok((DaleRun { steps, aborted }, state))
}
