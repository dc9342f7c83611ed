use serde::{Deserialize, Serialize};

use crate::dale::{DaleRun, TrajectoryStep};
use crate::dist::{Outcome, TaskId};

/// Which estimator produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    Dlvm,
    Imle,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Dlvm => "dlvm",
            Estimator::Imle => "imle",
        }
    }
}

/// One measurement: a session fitted by one method under one sampling
/// strategy at one observation count.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub session_id: String,
    pub method: Estimator,
    pub strategy: &'static str,
    /// Per-task count for the equal-allocation experiment, total count
    /// for the strategy experiment.
    pub observations: usize,
    pub session_kld: f64,
    pub task_klds: [f64; 8],
    /// Euclidean distance of the latent MAP from the ground-truth
    /// position; estimator DLVM only.
    pub latent_rmse: Option<f64>,
    /// Normalized negative log probability of the MAP position; adaptive
    /// strategy with the DLVM estimator only.
    pub normalized_nnlp: Option<f64>,
    /// Wall-clock cost of the producing computation. Kept in memory for
    /// the run sidecar; never written to the CSVs so reruns stay
    /// byte-identical.
    pub wall_clock_ms: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Renders rows to CSV. `obs_column` names the observation-count column
/// (`n_per_task` or `total_obs`).
pub fn results_csv(rows: &[ResultRow], obs_column: &str) -> String {
    let mut out = String::new();
    out.push_str("experiment,session_id,method,strategy,");
    out.push_str(obs_column);
    out.push_str(",session_kld");
    for task in TaskId::ALL {
        out.push_str(",kld_");
        out.push_str(task.name());
    }
    out.push_str(",latent_rmse,normalized_nnlp\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.experiment,
            r.session_id,
            r.method.name(),
            r.strategy,
            r.observations,
            r.session_kld
        ));
        for kld in r.task_klds {
            out.push_str(&format!(",{kld}"));
        }
        out.push(',');
        out.push_str(&fmt_opt(r.latent_rmse));
        out.push(',');
        out.push_str(&fmt_opt(r.normalized_nnlp));
        out.push('\n');
    }
    out
}

/// Per-trial trajectory CSV for adaptive sessions.
pub fn trajectories_csv(runs: &[(String, DaleRun)], latent_dim: usize) -> String {
    let mut out = String::from("session_id,trial_index,selected_by,task_id,stimulus_level,outcome_value");
    for d in 0..latent_dim {
        out.push_str(&format!(",map_z{d}"));
    }
    out.push_str(",session_kld,posterior_entropy\n");
    for (session_id, run) in runs {
        for step in &run.steps {
            out.push_str(&trajectory_line(session_id, step));
        }
    }
    out
}

fn trajectory_line(session_id: &str, step: &TrajectoryStep) -> String {
    let level = step
        .trial
        .level
        .map(|l| l.to_string())
        .unwrap_or_default();
    let value = match step.trial.outcome {
        Outcome::Binary(b) => {
            if b {
                "1".to_string()
            } else {
                "0".to_string()
            }
        }
        Outcome::Rt(x) => format!("{x}"),
    };
    let mut line = format!(
        "{},{},{},{},{},{}",
        session_id,
        step.trial_index,
        step.selected_by.name(),
        step.trial.task.name(),
        level,
        value
    );
    for z in step.map.as_slice() {
        line.push_str(&format!(",{z}"));
    }
    line.push_str(&format!(
        ",{},{}\n",
        fmt_opt(step.session_kld),
        step.posterior_entropy
    ));
    line
}

/// Per-session trajectory summary CSV.
pub fn trajectory_summary_csv(report: &super::TrajectoryReport, latent_dim: usize) -> String {
    let mut out = String::from("session_id");
    for d in 0..latent_dim {
        out.push_str(&format!(",final_z{d}"));
    }
    for d in 0..latent_dim {
        out.push_str(&format!(",truth_z{d}"));
    }
    out.push_str(
        ",final_distance,final_nnlp,early_displacement,late_displacement,flagged_multimodal\n",
    );
    for row in &report.rows {
        out.push_str(&row.session_id);
        for z in row.final_map.as_slice() {
            out.push_str(&format!(",{z}"));
        }
        for z in row.truth_latent.as_slice() {
            out.push_str(&format!(",{z}"));
        }
        out.push_str(&format!(
            ",{},{},{},{},{}\n",
            row.final_distance,
            row.final_nnlp,
            row.early_displacement,
            row.late_displacement,
            if row.flagged_multimodal { 1 } else { 0 }
        ));
    }
    out
}
