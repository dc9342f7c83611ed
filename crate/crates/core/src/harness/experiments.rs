use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::rows::{Estimator, ResultRow};
use super::strategy::{run_strategy_internal, StrategyConfig};
use crate::dale::{DaleRun, Grid};
use crate::dist::{battery, task_kld, ParamVector, SessionDataset};
use crate::dlvm::{fit_latent_summary, DecoderModel, FitOptions, LatentPoint, SessionSummary};
use crate::error::{Error, Result};
use crate::imle;
use crate::oracle::{nnlp_context, GroundTruthSession, BANK_SIZE};
use crate::seeds::child_seed;

/// Observation counts per task for the equal-allocation experiment.
pub const EXP1_N_GRID: [usize; 12] = [1, 2, 3, 5, 8, 10, 15, 20, 30, 50, 100, 240];

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

/// Equal-allocation comparison: for each session and each `n`, both
/// estimators fit the identical first `n` bank trials of every task.
pub fn run_experiment1(
    suite: &[GroundTruthSession],
    model: &DecoderModel,
    n_grid: &[usize],
    defaults: &ParamVector,
) -> Result<Vec<ResultRow>> {
    if suite.is_empty() {
        return Err(Error::EmptyInput("experiment suite"));
    }
    for &n in n_grid {
        if n == 0 || n > BANK_SIZE {
            return Err(Error::InvalidConfig(format!(
                "n = {n} outside the bank (1..={BANK_SIZE})"
            )));
        }
    }
    let per_session: Vec<Result<Vec<ResultRow>>> = suite
        .par_iter()
        .map(|session| {
            let mut rows = Vec::with_capacity(n_grid.len() * 2);
            for &n in n_grid {
                let started = Instant::now();
                let trials = session.first_n_per_task(n)?;
                let summary = SessionSummary::from_trials(&trials)?;

                // DLVM: latent MAP fit, then decode.
                let (z_hat, _) = fit_latent_summary(model, &summary, None, &FitOptions::default());
                let est = model.decode(z_hat.as_slice())?;
                let task_klds = task_klds_for(&est, &session.params)?;
                let dlvm_ms = started.elapsed().as_secs_f64() * 1e3;
                rows.push(ResultRow {
                    experiment: "exp1",
                    session_id: session.session_id.clone(),
                    method: Estimator::Dlvm,
                    strategy: "equal",
                    observations: n,
                    session_kld: mean8(&task_klds),
                    task_klds,
                    latent_rmse: Some(z_hat.distance(&session.latent)),
                    normalized_nnlp: None,
                    wall_clock_ms: dlvm_ms,
                });

                // IMLE on the identical trials.
                let imle_started = Instant::now();
                let mut ds = SessionDataset::new(session.session_id.clone());
                ds.trials = trials;
                let report = imle::fit_session(&ds, defaults)?;
                let task_klds = task_klds_for(&report.params, &session.params)?;
                rows.push(ResultRow {
                    experiment: "exp1",
                    session_id: session.session_id.clone(),
                    method: Estimator::Imle,
                    strategy: "equal",
                    observations: n,
                    session_kld: mean8(&task_klds),
                    task_klds,
                    latent_rmse: None,
                    normalized_nnlp: None,
                    wall_clock_ms: imle_started.elapsed().as_secs_f64() * 1e3,
                });
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_session {
        out.extend(rows?);
    }
    Ok(out)
}

/// The six strategy-estimator configurations, in output order.
const EXP2_CONFIGS: [(crate::harness::StrategyKind, Estimator); 6] = [
    (crate::harness::StrategyKind::DalePs2, Estimator::Dlvm),
    (crate::harness::StrategyKind::DalePs2, Estimator::Imle),
    (crate::harness::StrategyKind::Rand, Estimator::Dlvm),
    (crate::harness::StrategyKind::Rand, Estimator::Imle),
    (crate::harness::StrategyKind::Tb, Estimator::Dlvm),
    (crate::harness::StrategyKind::Tb, Estimator::Imle),
];

/// Sampling-strategy comparison: every session runs all six
/// strategy-estimator configurations. Within one session the two
/// estimators consume the identical trial sequence for each strategy,
/// and the adaptive selection (driven by the latent posterior) is
/// computed once and replayed for the independent baseline.
pub fn run_experiment2(
    suite: &[GroundTruthSession],
    model: &DecoderModel,
    grid: &Arc<Grid>,
    budget: usize,
    defaults: &ParamVector,
    root_seed: u64,
) -> Result<Vec<ResultRow>> {
    if suite.is_empty() {
        return Err(Error::EmptyInput("experiment suite"));
    }
    if budget % battery().len() != 0 {
        return Err(Error::InvalidConfig(format!(
            "budget {budget} must divide evenly over {} tasks for the battery strategy",
            battery().len()
        )));
    }
    let per_session: Vec<Result<Vec<ResultRow>>> = suite
        .par_iter()
        .enumerate()
        .map(|(idx, session)| {
            let seed = child_seed(root_seed, "exp2-session", idx as u64);
            let mut rows = Vec::new();
            let mut dale_run: Option<DaleRun> = None;
            for (kind, estimator) in EXP2_CONFIGS {
                let cfg = match kind {
                    crate::harness::StrategyKind::DalePs2 => StrategyConfig::dale(budget, 2),
                    crate::harness::StrategyKind::Rand => StrategyConfig::rand(budget),
                    crate::harness::StrategyKind::Tb => {
                        StrategyConfig::tb(budget, budget / battery().len())
                    }
                };
                let out = run_strategy_internal(
                    session,
                    model,
                    grid,
                    &cfg,
                    estimator,
                    defaults,
                    seed,
                    "exp2",
                    dale_run.as_ref().filter(|_| kind == crate::harness::StrategyKind::DalePs2),
                )?;
                if let Some(run) = out.dale_run {
                    dale_run = Some(run);
                }
                rows.extend(out.rows);
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_session {
        out.extend(rows?);
    }
    Ok(out)
}

/// Per-session trajectory digest.
#[derive(Debug, Clone)]
pub struct TrajectorySummaryRow {
    pub session_id: String,
    pub final_map: LatentPoint,
    pub truth_latent: LatentPoint,
    /// Euclidean distance between the final MAP estimate and the
    /// ground-truth latent position.
    pub final_distance: f64,
    pub final_nnlp: f64,
    /// Mean per-trial MAP displacement over trials 1-30.
    pub early_displacement: f64,
    /// Mean per-trial MAP displacement over trials 31-100.
    pub late_displacement: f64,
    /// Near-perfect data fit far from the true position: the
    /// multi-modality exhibit.
    pub flagged_multimodal: bool,
}

/// Suite-level trajectory statistics.
#[derive(Debug, Clone)]
pub struct TrajectoryReport {
    pub rows: Vec<TrajectorySummaryRow>,
    pub mean_distance: f64,
    pub median_distance: f64,
    pub p90_distance: f64,
    pub mean_nnlp: f64,
    pub median_nnlp: f64,
    pub p90_nnlp: f64,
    pub flagged: Vec<String>,
    /// Fraction of sessions whose early MAP displacement exceeds the
    /// late displacement.
    pub early_exceeds_late_fraction: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

fn displacements(run: &DaleRun, dim: usize) -> Vec<f64> {
    let mut prev = LatentPoint::origin(dim);
    run.steps
        .iter()
        .map(|s| {
            let d = s.map.distance(&prev);
            prev = s.map.clone();
            d
        })
        .collect()
}

/// Summarizes completed adaptive runs: final positional error and
/// normalized negative log probability per session, displacement
/// dynamics, and the multi-modality flags (low nnlp yet far from the
/// truth).
pub fn trajectory_report(
    suite: &[GroundTruthSession],
    model: &DecoderModel,
    grid: &Arc<Grid>,
    runs: &[(String, DaleRun)],
) -> Result<TrajectoryReport> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("trajectory runs"));
    }
    let rows: Vec<Result<TrajectorySummaryRow>> = runs
        .par_iter()
        .map(|(session_id, run)| {
            let session = suite
                .iter()
                .find(|s| &s.session_id == session_id)
                .ok_or_else(|| Error::Malformed {
                    what: "trajectory run",
                    msg: format!("unknown session {session_id}"),
                })?;
            let last = run.steps.last().ok_or(Error::EmptyInput("trajectory steps"))?;
            let nnlp = nnlp_context(session, grid)?;
            let final_nnlp = nnlp.normalized(model, last.map.as_slice())?;
            let final_distance = last.map.distance(&session.latent);
            let disp = displacements(run, model.latent_dim);
            let early_n = disp.len().min(30);
            let early = disp[..early_n].iter().sum::<f64>() / early_n.max(1) as f64;
            let late_slice = &disp[early_n.min(disp.len())..disp.len().min(100)];
            let late = if late_slice.is_empty() {
                0.0
            } else {
                late_slice.iter().sum::<f64>() / late_slice.len() as f64
            };
            Ok(TrajectorySummaryRow {
                session_id: session_id.clone(),
                final_map: last.map.clone(),
                truth_latent: session.latent.clone(),
                final_distance,
                final_nnlp,
                early_displacement: early,
                late_displacement: late,
                flagged_multimodal: final_nnlp < 0.01 && final_distance > 1.0,
            })
        })
        .collect();
    let rows: Result<Vec<TrajectorySummaryRow>> = rows.into_iter().collect();
    let rows = rows?;

    let n = rows.len() as f64;
    let mut distances: Vec<f64> = rows.iter().map(|r| r.final_distance).collect();
    let mut nnlps: Vec<f64> = rows.iter().map(|r| r.final_nnlp).collect();
    let mean_distance = distances.iter().sum::<f64>() / n;
    let mean_nnlp = nnlps.iter().sum::<f64>() / n;
    distances.sort_by(f64::total_cmp);
    nnlps.sort_by(f64::total_cmp);
    let flagged = rows
        .iter()
        .filter(|r| r.flagged_multimodal)
        .map(|r| r.session_id.clone())
        .collect();
    let early_wins = rows
        .iter()
        .filter(|r| r.early_displacement > r.late_displacement)
        .count() as f64;
    Ok(TrajectoryReport {
        mean_distance,
        median_distance: percentile(&distances, 0.5),
        p90_distance: percentile(&distances, 0.9),
        mean_nnlp,
        median_nnlp: percentile(&nnlps, 0.5),
        p90_nnlp: percentile(&nnlps, 0.9),
        flagged,
        early_exceeds_late_fraction: early_wins / n,
        rows,
    })
}

/// Runs the adaptive session for every suite member and summarizes the
/// trajectories.
pub fn run_trajectories(
    suite: &[GroundTruthSession],
    model: &DecoderModel,
    grid: &Arc<Grid>,
    budget: usize,
    primer_per_task: usize,
    root_seed: u64,
) -> Result<(Vec<(String, DaleRun)>, TrajectoryReport)> {
    if suite.is_empty() {
        return Err(Error::EmptyInput("experiment suite"));
    }
    let runs: Vec<Result<(String, DaleRun)>> = suite
        .par_iter()
        .enumerate()
        .map(|(idx, session)| {
            let seed = child_seed(root_seed, "trajectory-session", idx as u64);
            let mut cursor = crate::oracle::SessionCursor::new(session);
            let mut primer_rng =
                crate::seeds::stream(child_seed(seed, "primer-levels", 0), "p", 0);
            let (run, _) = crate::dale::run_dale_session(
                model,
                grid.clone(),
                &mut cursor,
                budget,
                primer_per_task,
                &mut primer_rng,
                Some(&session.params),
            )?;
            Ok((session.session_id.clone(), run))
        })
        .collect();
    let runs: Result<Vec<(String, DaleRun)>> = runs.into_iter().collect();
    let runs = runs?;
    let report = trajectory_report(suite, model, grid, &runs)?;
    Ok((runs, report))
}
