//! Command-line driver for the simulation and inference engine: generate
//! a synthetic training population, train the latent-variable decoder,
//! simulate the ground-truth evaluation suite, and run the recovery
//! experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cogsim_core::dale::{Grid, GridSpec};
use cogsim_core::dist::{sessions_from_csv, sessions_to_csv, SessionDataset};
use cogsim_core::dlvm::{train, DecoderModel, TrainConfig};
use cogsim_core::harness::{
    sparse_dense_table, accuracy_by_allocation_table, strategy_curves_table, task_allocation_table, convergence_scatter_table, results_csv, run_experiment1,
    run_experiment2, run_trajectories, trajectories_csv, trajectory_summary_csv, EXP1_N_GRID,
};
use cogsim_core::oracle::{
    build_suite, generate_population, naive_defaults, session_from_parts, session_to_dataset,
    GroundTruthSession, PopulationConfig, PopulationManifest, SuiteManifest,
};
use cogsim_core::seeds::child_seed;

#[derive(Parser)]
#[command(
    name = "cogsim",
    version,
    about = "Simulation and inference engine for executive-function test batteries"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Output directory; all paths are relative to it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Decoder model file (written by `train`, read by the experiments).
    /// Defaults to `<out>/model.json`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Worker threads; falls back to the COGSIM_THREADS environment
    /// variable, then to the machine's logical CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root seed; every random stream in the pipeline derives from it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic training population.
    GenPopulation {
        /// Number of simulated training sessions.
        #[arg(long, default_value_t = 88)]
        count: usize,
        /// Trials per task in each training session.
        #[arg(long, default_value_t = 240)]
        trials_per_task: usize,
    },
    /// Train the latent-variable decoder on the generated population.
    Train {
        /// Latent dimensionality.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=3))]
        dim: u8,
        #[arg(long, default_value_t = 10_000)]
        epochs: u32,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0.01)]
        penalty: f64,
    },
    /// Simulate the ground-truth evaluation suite from the trained model.
    Simulate {
        /// Number of evaluation sessions.
        #[arg(long, default_value_t = 88)]
        count: usize,
        /// Sampling bounds as a multiple of the training latents' range.
        #[arg(long, default_value_t = 1.5)]
        bounds_scale: f64,
        /// Pre-generated trials per task in each session bank.
        #[arg(long, default_value_t = 240)]
        n_per_task: usize,
    },
    /// Estimation accuracy vs. data quantity under equal allocation.
    Exp1 {
        /// Comma-separated observations-per-task grid.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
    },
    /// Sampling-strategy comparison across the six configurations.
    Exp2 {
        #[arg(long, default_value_t = 240)]
        budget: usize,
    },
    /// Adaptive-session trajectories and convergence diagnostics.
    Trajectories {
        #[arg(long, default_value_t = 240)]
        budget: usize,
        /// Primer trials per task before adaptive selection starts.
        #[arg(long, default_value_t = 2)]
        primer: usize,
    },
    /// Join the experiment CSVs into figure-ready tables.
    Report,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads(&cli.global)?;
    let started = Instant::now();
    match &cli.command {
        Command::GenPopulation {
            count,
            trials_per_task,
        } => gen_population(&cli.global, *count, *trials_per_task, started),
        Command::Train {
            dim,
            epochs,
            lr,
            penalty,
        } => cmd_train(&cli.global, *dim as usize, *epochs, *lr, *penalty, started),
        Command::Simulate {
            count,
            bounds_scale,
            n_per_task,
        } => simulate(&cli.global, *count, *bounds_scale, *n_per_task, started),
        Command::Exp1 { n_grid } => exp1(&cli.global, n_grid.clone(), started),
        Command::Exp2 { budget } => exp2(&cli.global, *budget, started),
        Command::Trajectories { budget, primer } => {
            trajectories(&cli.global, *budget, *primer, started)
        }
        Command::Report => report(&cli.global),
    }
}

fn init_threads(global: &GlobalArgs) -> Result<()> {
    let threads = global.threads.or_else(|| {
        std::env::var("COGSIM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if n == 0 {
            bail!("thread count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing the worker pool")?;
    }
    Ok(())
}

fn model_path(global: &GlobalArgs) -> PathBuf {
    global
        .model
        .clone()
        .unwrap_or_else(|| global.out.join("model.json"))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_sidecar(global: &GlobalArgs, name: &str, body: serde_json::Value) -> Result<()> {
    let path = global.out.join(format!("{name}_config.json"));
    write(&path, &serde_json::to_string_pretty(&body)?)
}

fn load_model(global: &GlobalArgs) -> Result<DecoderModel> {
    let path = model_path(global);
    DecoderModel::from_json(&read(&path)?)
        .with_context(|| format!("loading model from {}", path.display()))
}

fn load_suite(global: &GlobalArgs) -> Result<(SuiteManifest, Vec<GroundTruthSession>)> {
    let manifest = SuiteManifest::from_json(&read(&global.out.join("suite/manifest.json"))?)?;
    let datasets = sessions_from_csv(&read(&global.out.join("suite/trials.csv"))?)?;
    if datasets.len() != manifest.sessions.len() {
        bail!(
            "suite manifest lists {} sessions, trials.csv holds {}",
            manifest.sessions.len(),
            datasets.len()
        );
    }
    let by_id: std::collections::HashMap<&str, &SessionDataset> = datasets
        .iter()
        .map(|d| (d.session_id.as_str(), d))
        .collect();
    let suite = manifest
        .sessions
        .iter()
        .map(|meta| {
            let ds = by_id
                .get(meta.session_id.as_str())
                .copied()
                .with_context(|| format!("session {} missing from trials.csv", meta.session_id))?;
            Ok(session_from_parts(meta, ds, manifest.n_per_task)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, suite))
}

fn gen_population(
    global: &GlobalArgs,
    count: usize,
    trials_per_task: usize,
    started: Instant,
) -> Result<()> {
    let cfg = PopulationConfig {
        count,
        trials_per_task,
        seed: child_seed(global.seed, "population", 0),
    };
    let pop = generate_population(&cfg)?;
    let manifest = PopulationManifest::from_population(&pop);
    write(
        &global.out.join("population/manifest.json"),
        &manifest.to_json()?,
    )?;
    write(
        &global.out.join("population/trials.csv"),
        &sessions_to_csv(&pop.sessions),
    )?;
    write_sidecar(
        global,
        "population",
        serde_json::json!({
            "root_seed": global.seed,
            "count": count,
            "trials_per_task": trials_per_task,
            "elapsed_ms": started.elapsed().as_millis() as u64,
        }),
    )?;
    println!(
        "population: {count} sessions x {} trials -> {}",
        trials_per_task * 8,
        global.out.join("population").display()
    );
    Ok(())
}

fn cmd_train(
    global: &GlobalArgs,
    dim: usize,
    epochs: u32,
    lr: f64,
    penalty: f64,
    started: Instant,
) -> Result<()> {
    let manifest =
        PopulationManifest::from_json(&read(&global.out.join("population/manifest.json"))?)?;
    let sessions = sessions_from_csv(&read(&global.out.join("population/trials.csv"))?)?;
    let cfg = TrainConfig {
        epochs_max: epochs,
        learning_rate: lr,
        penalty,
        seed: child_seed(global.seed, "train", 0),
        ..TrainConfig::default()
    };
    let out = train(&sessions, dim, &cfg)?;
    let mut model = out.model;
    model.meta.population_mean_params = Some(manifest.mean_params);
    let path = model_path(global);
    write(&path, &model.to_json()?)?;
    write_sidecar(
        global,
        "train",
        serde_json::json!({
            "root_seed": global.seed,
            "dim": dim,
            "epochs": epochs,
            "lr": lr,
            "penalty": penalty,
            "epochs_run": model.meta.epochs_run,
            "initial_loss": model.meta.initial_loss,
            "final_loss": model.meta.final_loss,
            "elapsed_ms": started.elapsed().as_millis() as u64,
        }),
    )?;
    println!(
        "trained dim-{dim} decoder: {} epochs, loss {:.1} -> {:.1}, model at {}",
        model.meta.epochs_run,
        model.meta.initial_loss,
        model.meta.final_loss,
        path.display()
    );
    Ok(())
}

fn simulate(
    global: &GlobalArgs,
    count: usize,
    bounds_scale: f64,
    n_per_task: usize,
    started: Instant,
) -> Result<()> {
    let model = load_model(global)?;
    let root = child_seed(global.seed, "suite", 0);
    let suite = build_suite(&model, count, bounds_scale, n_per_task, root)?;
    let manifest = SuiteManifest::from_suite(&suite, root, bounds_scale, n_per_task);
    write(
        &global.out.join("suite/manifest.json"),
        &manifest.to_json()?,
    )?;
    let datasets: Vec<SessionDataset> = suite.iter().map(session_to_dataset).collect();
    write(
        &global.out.join("suite/trials.csv"),
        &sessions_to_csv(&datasets),
    )?;
    write_sidecar(
        global,
        "simulate",
        serde_json::json!({
            "root_seed": global.seed,
            "count": count,
            "bounds_scale": bounds_scale,
            "n_per_task": n_per_task,
            "elapsed_ms": started.elapsed().as_millis() as u64,
        }),
    )?;
    println!(
        "suite: {count} sessions x 8 tasks x {n_per_task} trials -> {}",
        global.out.join("suite").display()
    );
    Ok(())
}

fn exp1(global: &GlobalArgs, n_grid: Option<Vec<usize>>, started: Instant) -> Result<()> {
    let model = load_model(global)?;
    let (_, suite) = load_suite(global)?;
    let n_grid = n_grid.unwrap_or_else(|| EXP1_N_GRID.to_vec());
    let rows = run_experiment1(&suite, &model, &n_grid, &naive_defaults())?;
    write(
        &global.out.join("exp1.csv"),
        &results_csv(&rows, "n_per_task"),
    )?;
    write_sidecar(
        global,
        "exp1",
        serde_json::json!({
            "root_seed": global.seed,
            "n_grid": n_grid,
            "sessions": suite.len(),
            "rows": rows.len(),
            "elapsed_ms": started.elapsed().as_millis() as u64,
        }),
    )?;
    println!(
        "exp1: {} rows -> {}",
        rows.len(),
        global.out.join("exp1.csv").display()
    );
    Ok(())
}

fn exp2(global: &GlobalArgs, budget: usize, started: Instant) -> Result<()> {
    let model = load_model(global)?;
    let (_, suite) = load_suite(global)?;
    let grid = Arc::new(Grid::build(
        &model,
        GridSpec::default_for_dim(model.latent_dim),
    )?);
    let rows = run_experiment2(
        &suite,
        &model,
        &grid,
        budget,
        &naive_defaults(),
        child_seed(global.seed, "exp2", 0),
    )?;
    let csv = results_csv(&rows, "total_obs");
    write(&global.out.join("exp2.csv"), &csv)?;
    write(&global.out.join("exp2_curves.csv"), &strategy_curves_table(&csv)?)?;
    write_sidecar(
        global,
        "exp2",
        serde_json::json!({
            "root_seed": global.seed,
            "budget": budget,
            "sessions": suite.len(),
            "rows": rows.len(),
            "elapsed_ms": started.elapsed().as_millis() as u64,
        }),
    )?;
    println!(
        "exp2: {} rows -> {} (+ exp2_curves.csv)",
        rows.len(),
        global.out.join("exp2.csv").display()
    );
    Ok(())
}

fn trajectories(global: &GlobalArgs, budget: usize, primer: usize, started: Instant) -> Result<()> {
    let model = load_model(global)?;
    let (_, suite) = load_suite(global)?;
    let grid = Arc::new(Grid::build(
        &model,
        GridSpec::default_for_dim(model.latent_dim),
    )?);
    let (runs, report) = run_trajectories(
        &suite,
        &model,
        &grid,
        budget,
        primer,
        child_seed(global.seed, "trajectories", 0),
    )?;
    write(
        &global.out.join("trajectories.csv"),
        &trajectories_csv(&runs, model.latent_dim),
    )?;
    write(
        &global.out.join("trajectory_summary.csv"),
        &trajectory_summary_csv(&report, model.latent_dim),
    )?;
    write_sidecar(
        global,
        "trajectories",
        serde_json::json!({
            "root_seed": global.seed,
            "budget": budget,
            "primer_per_task": primer,
            "sessions": suite.len(),
            "mean_final_distance": report.mean_distance,
            "median_final_distance": report.median_distance,
            "mean_final_nnlp": report.mean_nnlp,
            "flagged_multimodal": report.flagged,
            "early_exceeds_late_fraction": report.early_exceeds_late_fraction,
            "elapsed_ms": started.elapsed().as_millis() as u64,
        }),
    )?;
    println!(
        "trajectories: {} sessions, mean distance {:.3}, mean nnlp {:.4}, {} flagged -> {}",
        report.rows.len(),
        report.mean_distance,
        report.mean_nnlp,
        report.flagged.len(),
        global.out.join("trajectories.csv").display()
    );
    Ok(())
}

fn report(global: &GlobalArgs) -> Result<()> {
    let dir = global.out.join("report");
    let exp1 = read(&global.out.join("exp1.csv"))?;
    write(&dir.join("sparse_dense_fits.csv"), &sparse_dense_table(&exp1)?)?;
    write(
        &dir.join("accuracy_by_allocation.csv"),
        &accuracy_by_allocation_table(&exp1)?,
    )?;
    let exp2 = read(&global.out.join("exp2.csv"))?;
    write(&dir.join("strategy_curves.csv"), &strategy_curves_table(&exp2)?)?;
    let traj = read(&global.out.join("trajectories.csv"))?;
    write(&dir.join("task_allocation.csv"), &task_allocation_table(&traj)?)?;
    let summary = read(&global.out.join("trajectory_summary.csv"))?;
    write(
        &dir.join("convergence_scatter.csv"),
        &convergence_scatter_table(&summary)?,
    )?;
    println!("report tables -> {}", dir.display());
    Ok(())
}
