//! Experiment orchestration over the simulated suite: the estimation
//! accuracy vs. data-quantity comparison, the sampling-strategy
//! comparison, trajectory diagnostics, and the CSV/JSON reporting layer.

mod experiments;
mod report;
mod rows;
mod strategy;

pub use experiments::{
    run_experiment1, run_experiment2, run_trajectories, trajectory_report, TrajectoryReport,
    TrajectorySummaryRow, EXP1_N_GRID,
};
pub use report::{sparse_dense_table, accuracy_by_allocation_table, strategy_curves_table, task_allocation_table, convergence_scatter_table, parse_csv};
pub use rows::{
    results_csv, trajectories_csv, trajectory_summary_csv, Estimator, ResultRow,
};
pub use strategy::{checkpoints, run_strategy, StrategyConfig, StrategyKind};
