use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::rows::{Estimator, ResultRow};
use crate::dale::{
    run_dale_session, Candidate, DaleRun, Grid, PosteriorState, SelectedBy, TrialSource,
};
use crate::dist::{battery, task_kld, Family, Outcome, ParamVector, TaskId, Trial, STIMULUS_LEVELS};
use crate::dlvm::DecoderModel;
use crate::error::{Error, Result};
use crate::imle;
use crate::oracle::{nnlp_context, GroundTruthSession, NnlpContext, SessionCursor};
use crate::seeds::{child_seed, stream};

/// Sampling strategies compared in the second experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    /// Adaptive selection with a two-per-task primer sequence.
    DalePs2,
    /// Uniform random task draws, uniform span levels.
    Rand,
    /// Fixed test battery: equal per-task blocks, order shuffled per
    /// session.
    Tb,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::DalePs2 => "dale_ps2",
            StrategyKind::Rand => "rand",
            StrategyKind::Tb => "tb",
        }
    }
}

/// Configuration of one sampling strategy run.
#[derive(Debug, Clone)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Total trials administered.
    pub budget: usize,
    /// Per-task block size, test-battery strategy only.
    pub tb_per_task: usize,
    /// Primer trials per task, adaptive strategy only.
    pub primer_per_task: usize,
}

impl StrategyConfig {
    pub fn dale(budget: usize, primer_per_task: usize) -> Self {
        StrategyConfig {
            kind: StrategyKind::DalePs2,
            budget,
            tb_per_task: 0,
            primer_per_task,
        }
    }

    pub fn rand(budget: usize) -> Self {
        StrategyConfig {
            kind: StrategyKind::Rand,
            budget,
            tb_per_task: 0,
            primer_per_task: 0,
        }
    }

    pub fn tb(budget: usize, per_task: usize) -> Self {
        StrategyConfig {
            kind: StrategyKind::Tb,
            budget,
            tb_per_task: per_task,
            primer_per_task: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n_tasks = battery().len();
        match self.kind {
            StrategyKind::Tb => {
                if self.tb_per_task * n_tasks != self.budget {
                    return Err(Error::InvalidConfig(format!(
                        "test-battery allocation {} x {n_tasks} must equal budget {}",
                        self.tb_per_task, self.budget
                    )));
                }
            }
            StrategyKind::DalePs2 => {
                if self.budget < n_tasks * self.primer_per_task {
                    return Err(Error::InvalidConfig(format!(
                        "adaptive budget {} below the primer ({} trials)",
                        self.budget,
                        n_tasks * self.primer_per_task
                    )));
                }
            }
            StrategyKind::Rand => {}
        }
        Ok(())
    }
}

/// Observation counts at which estimates are recorded: every trial up to
/// 100, then every 10, always including the final budget.
pub fn checkpoints(budget: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=budget.min(100)).collect();
    let mut t = 110;
    while t <= budget {
        out.push(t);
        t += 10;
    }
    if out.last() != Some(&budget) && budget >= 1 {
        out.push(budget);
    }
    out
}

/// Uniform random schedule: task uniform over the battery, span level
/// uniform for sigmoid tasks.
fn schedule_rand<R: Rng>(budget: usize, rng: &mut R) -> Vec<Candidate> {
    (0..budget)
        .map(|_| {
            let task = TaskId::ALL[rng.random_range(0..battery().len())];
            let level = match task.family() {
                Family::Sigmoid => {
                    Some(rng.random_range(*STIMULUS_LEVELS.start()..=*STIMULUS_LEVELS.end()))
                }
                _ => None,
            };
            Candidate { task, level }
        })
        .collect()
}

/// Blocked schedule: every trial of a task before the next, task order
/// shuffled per session. Bank trials keep their pre-drawn span levels.
fn schedule_tb<R: Rng>(per_task: usize, rng: &mut R) -> Vec<Candidate> {
    let mut order = TaskId::ALL;
    order.shuffle(rng);
    let mut out = Vec::with_capacity(per_task * order.len());
    for task in order {
        for _ in 0..per_task {
            out.push(Candidate { task, level: None });
        }
    }
    out
}

/// Incremental independent-MLE state: per-task buffers refit only when
/// their task receives new data, which is exact under task independence.
struct ImleIncremental {
    params: ParamVector,
    sigmoid_counts: [[(u64, u64); 8]; 2],
    lognormal_samples: [Vec<f64>; 2],
    binomial_counts: [(u64, u64); 4],
    dirty: [bool; 8],
}

impl ImleIncremental {
    fn new(defaults: &ParamVector) -> Self {
        ImleIncremental {
            params: *defaults,
            sigmoid_counts: [[(0, 0); 8]; 2],
            lognormal_samples: [Vec::new(), Vec::new()],
            binomial_counts: [(0, 0); 4],
            dirty: [false; 8],
        }
    }

    fn push(&mut self, trial: &Trial) {
        let idx = trial.task.index();
        self.dirty[idx] = true;
        match (trial.task.family(), trial.outcome) {
            (Family::Sigmoid, Outcome::Binary(ok)) => {
                let t = if trial.task == TaskId::CorsiComplex { 0 } else { 1 };
                let level = trial.level.expect("validated sigmoid trial");
                let cell =
                    &mut self.sigmoid_counts[t][(level - *STIMULUS_LEVELS.start()) as usize];
                cell.0 += 1;
                cell.1 += u64::from(ok);
            }
            (Family::Lognormal, Outcome::Rt(x)) => {
                let t = if trial.task == TaskId::Countermanding { 0 } else { 1 };
                self.lognormal_samples[t].push(x);
            }
            (Family::Binomial, Outcome::Binary(ok)) => {
                let t = match trial.task {
                    TaskId::RunningSpan2 => 0,
                    TaskId::RunningSpan3 => 1,
                    TaskId::Pasat => 2,
                    _ => 3,
                };
                self.binomial_counts[t].0 += 1;
                self.binomial_counts[t].1 += u64::from(ok);
            }
            _ => unreachable!("trials come validated from the oracle"),
        }
    }

    fn refit_dirty(&mut self) -> Result<()> {
        for spec in battery() {
            let idx = spec.id.index();
            if !self.dirty[idx] {
                continue;
            }
            self.dirty[idx] = false;
            match spec.family {
                Family::Sigmoid => {
                    let t = if spec.id == TaskId::CorsiComplex { 0 } else { 1 };
                    let fit = imle::fit_sigmoid_counts(&self.sigmoid_counts[t])?;
                    self.params.0[spec.slots[0]] = fit.theta;
                    self.params.0[spec.slots[1]] = fit.spread;
                }
                Family::Lognormal => {
                    let t = if spec.id == TaskId::Countermanding { 0 } else { 1 };
                    let (mu, sigma) = imle::fit_lognormal(&self.lognormal_samples[t])?;
                    self.params.0[spec.slots[0]] = mu;
                    self.params.0[spec.slots[1]] = sigma;
                }
                Family::Binomial => {
                    let t = match spec.id {
                        TaskId::RunningSpan2 => 0,
                        TaskId::RunningSpan3 => 1,
                        TaskId::Pasat => 2,
                        _ => 3,
                    };
                    let (n, k) = self.binomial_counts[t];
                    self.params.0[spec.slots[0]] = imle::fit_binomial(k, n)?;
                }
            }
        }
        Ok(())
    }
}

fn task_klds_for(est: &ParamVector, truth: &ParamVector) -> Result<[f64; 8]> {
    let mut out = [0.0; 8];
    for spec in battery() {
        out[spec.id.index()] = task_kld(spec, est, truth)?;
    }
    Ok(out)
}

fn mean8(v: &[f64; 8]) -> f64 {
    v.iter().sum::<f64>() / 8.0
}

struct RowSink<'a> {
    experiment: &'static str,
    session_id: &'a str,
    method: Estimator,
    strategy: &'static str,
    started: Instant,
    rows: Vec<ResultRow>,
}

impl RowSink<'_> {
    fn push(
        &mut self,
        observations: usize,
        task_klds: [f64; 8],
        latent_rmse: Option<f64>,
        normalized_nnlp: Option<f64>,
    ) {
        self.rows.push(ResultRow {
            experiment: self.experiment,
            session_id: self.session_id.to_string(),
            method: self.method,
            strategy: self.strategy,
            observations,
            session_kld: mean8(&task_klds),
            task_klds,
            latent_rmse,
            normalized_nnlp,
            wall_clock_ms: self.started.elapsed().as_secs_f64() * 1e3,
        });
    }
}

/// Internal product of one strategy pass over one session: rows for the
/// requested estimator, plus the adaptive run when the strategy is DALE.
pub(crate) struct StrategyOutput {
    pub rows: Vec<ResultRow>,
    pub dale_run: Option<DaleRun>,
}

/// DLVM rows along an adaptive run's recorded trajectory.
fn dlvm_rows_from_dale(
    session: &GroundTruthSession,
    model: &DecoderModel,
    run: &DaleRun,
    nnlp: &NnlpContext,
    marks: &[usize],
    sink: &mut RowSink,
) -> Result<()> {
    for &t in marks {
        if t > run.steps.len() {
            break;
        }
        let step = &run.steps[t - 1];
        let est = model.decode(step.map.as_slice())?;
        let task_klds = task_klds_for(&est, &session.params)?;
        let rmse = step.map.distance(&session.latent);
        let nnlp_val = nnlp.normalized(model, step.map.as_slice())?;
        sink.push(t, task_klds, Some(rmse), Some(nnlp_val));
    }
    Ok(())
}

/// DLVM rows for a fixed schedule: sequential posterior updates with MAP
/// readouts at the checkpoints.
fn dlvm_rows_from_schedule(
    session: &GroundTruthSession,
    model: &DecoderModel,
    grid: &Arc<Grid>,
    trials: &[Trial],
    marks: &[usize],
    sink: &mut RowSink,
) -> Result<()> {
    let mut state = PosteriorState::init(model, grid.clone())?;
    let mut next_mark = 0;
    for (i, trial) in trials.iter().enumerate() {
        state.update(trial, SelectedBy::Dale)?;
        let t = i + 1;
        if next_mark < marks.len() && marks[next_mark] == t {
            next_mark += 1;
            let est = state.map_params();
            let task_klds = task_klds_for(est, &session.params)?;
            let rmse = state.map_estimate().distance(&session.latent);
            sink.push(t, task_klds, Some(rmse), None);
        }
    }
    Ok(())
}

/// IMLE rows along any trial sequence.
fn imle_rows_from_trials(
    session: &GroundTruthSession,
    defaults: &ParamVector,
    trials: &[Trial],
    marks: &[usize],
    sink: &mut RowSink,
) -> Result<()> {
    let mut state = ImleIncremental::new(defaults);
    let mut next_mark = 0;
    for (i, trial) in trials.iter().enumerate() {
        state.push(trial);
        let t = i + 1;
        if next_mark < marks.len() && marks[next_mark] == t {
            next_mark += 1;
            state.refit_dirty()?;
            let task_klds = task_klds_for(&state.params, &session.params)?;
            sink.push(t, task_klds, None, None);
        }
    }
    Ok(())
}

/// Serves a pre-decided schedule-driven sequence from the session bank.
fn serve_schedule(
    session: &GroundTruthSession,
    schedule: &[Candidate],
) -> Result<Vec<Trial>> {
    let mut cursor = SessionCursor::new(session);
    schedule.iter().map(|c| cursor.serve(c)).collect()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_strategy_internal(
    session: &GroundTruthSession,
    model: &DecoderModel,
    grid: &Arc<Grid>,
    cfg: &StrategyConfig,
    estimator: Estimator,
    defaults: &ParamVector,
    seed: u64,
    experiment: &'static str,
    reuse_dale: Option<&DaleRun>,
) -> Result<StrategyOutput> {
    cfg.validate()?;
    if cfg.budget > crate::oracle::BANK_SIZE {
        return Err(Error::InvalidConfig(format!(
            "budget {} exceeds the {}-trial bank",
            cfg.budget,
            crate::oracle::BANK_SIZE
        )));
    }
    let marks = checkpoints(cfg.budget);
    let mut sink = RowSink {
        experiment,
        session_id: &session.session_id,
        method: estimator,
        strategy: cfg.kind.name(),
        started: Instant::now(),
        rows: Vec::with_capacity(marks.len()),
    };
    let mut dale_run = None;

    match cfg.kind {
        StrategyKind::DalePs2 => {
            let run_owned;
            let run: &DaleRun = match reuse_dale {
                Some(r) => r,
                None => {
                    let mut cursor = SessionCursor::new(session);
                    let mut primer_rng = stream(child_seed(seed, "primer-levels", 0), "p", 0);
                    let (r, _) = run_dale_session(
                        model,
                        grid.clone(),
                        &mut cursor,
                        cfg.budget,
                        cfg.primer_per_task,
                        &mut primer_rng,
                        Some(&session.params),
                    )?;
                    if let Some(reason) = &r.aborted {
                        return Err(Error::InvalidConfig(format!(
                            "adaptive session aborted: {reason}"
                        )));
                    }
                    run_owned = r;
                    &run_owned
                }
            };
            match estimator {
                Estimator::Dlvm => {
                    let nnlp = nnlp_context(session, grid)?;
                    dlvm_rows_from_dale(session, model, run, &nnlp, &marks, &mut sink)?;
                }
                Estimator::Imle => {
                    let trials: Vec<Trial> = run.steps.iter().map(|s| s.trial).collect();
                    imle_rows_from_trials(session, defaults, &trials, &marks, &mut sink)?;
                }
            }
            if reuse_dale.is_none() {
                dale_run = Some(run.clone());
            }
        }
        StrategyKind::Rand => {
            let mut rng = stream(child_seed(seed, "rand-schedule", 0), "r", 0);
            let schedule = schedule_rand(cfg.budget, &mut rng);
            let trials = serve_schedule(session, &schedule)?;
            match estimator {
                Estimator::Dlvm => {
                    dlvm_rows_from_schedule(session, model, grid, &trials, &marks, &mut sink)?
                }
                Estimator::Imle => {
                    imle_rows_from_trials(session, defaults, &trials, &marks, &mut sink)?
                }
            }
        }
        StrategyKind::Tb => {
            let mut rng = stream(child_seed(seed, "tb-order", 0), "t", 0);
            let schedule = schedule_tb(cfg.tb_per_task, &mut rng);
            let trials = serve_schedule(session, &schedule)?;
            match estimator {
                Estimator::Dlvm => {
                    dlvm_rows_from_schedule(session, model, grid, &trials, &marks, &mut sink)?
                }
                Estimator::Imle => {
                    imle_rows_from_trials(session, defaults, &trials, &marks, &mut sink)?
                }
            }
        }
    }
    Ok(StrategyOutput {
        rows: sink.rows,
        dale_run,
    })
}

/// Runs one sampling strategy over one session with the designated
/// estimator, recording divergence from the ground truth at every
/// checkpoint.
///
/// Strategy randomness (primer levels, random schedules, battery order)
/// derives from `seed` alone, so both estimators replay the identical
/// trial sequence for the same session seed.
pub fn run_strategy(
    session: &GroundTruthSession,
    model: &DecoderModel,
    grid: &Arc<Grid>,
    cfg: &StrategyConfig,
    estimator: Estimator,
    defaults: &ParamVector,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    run_strategy_internal(
        session, model, grid, cfg, estimator, defaults, seed, "exp2", None,
    )
    .map(|o| o.rows)
}
