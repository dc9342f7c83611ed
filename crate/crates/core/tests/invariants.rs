//! Cross-module invariants that need a trained model or a simulated
//! suite: generator-likelihood recovery, estimator consistency, posterior
//! sanity on lattice-born data, the normalized-NLL landscape, and
//! parallel/serial agreement of the experiment harness.

use std::sync::{Arc, OnceLock};

use rand::Rng;

use cogsim_core::dale::{Grid, GridSpec, PosteriorState, SelectedBy};
use cogsim_core::dist::{battery, Family, ParamVector, SessionDataset};
use cogsim_core::dlvm::{
    fit_latent, train, DecoderModel, FitOptions, LatentPoint, TrainConfig,
};
use cogsim_core::harness::{results_csv, run_experiment1, run_experiment2, Estimator};
use cogsim_core::oracle::{
    build_suite, generate_population, make_ground_truth, naive_defaults, nnlp_context,
    GroundTruthSession, PopulationConfig,
};
use cogsim_core::seeds::stream;

struct SmallFixture {
    model: DecoderModel,
    suite: Vec<GroundTruthSession>,
    grid: Arc<Grid>,
}

static SMALL: OnceLock<SmallFixture> = OnceLock::new();

fn small_fixture() -> &'static SmallFixture {
    SMALL.get_or_init(|| {
        let pop = generate_population(&PopulationConfig {
            count: 32,
            trials_per_task: 120,
            seed: 5,
        })
        .expect("population");
        let out = train(
            &pop.sessions,
            2,
            &TrainConfig {
                epochs_max: 2500,
                seed: 5,
                ..TrainConfig::default()
            },
        )
        .expect("train");
        let suite = build_suite(&out.model, 24, 1.5, 240, 5).expect("suite");
        let grid =
            Arc::new(Grid::build(&out.model, GridSpec::default_for_dim(2)).expect("grid"));
        SmallFixture {
            model: out.model,
            suite,
            grid,
        }
    })
}

/// Data generated by a known decoder is explained by a refit decoder
/// nearly as well as by the generator itself, on held-out sessions.
#[test]
fn refit_model_reproduces_generator_likelihood_on_held_out_sessions() {
    let fx = small_fixture();
    let generator = &fx.model;

    // Fresh sessions from the generator at seeded latent positions.
    let mut rng = stream(17, "heldout", 0);
    let mut sessions = Vec::new();
    for i in 0..14 {
        let z = LatentPoint(vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]);
        sessions.push(make_ground_truth(generator, format!("G-{i:02}"), &z, 240, 300 + i).unwrap());
    }
    let (held_out, training) = sessions.split_at(2);

    let train_data: Vec<SessionDataset> = training
        .iter()
        .map(cogsim_core::oracle::session_to_dataset)
        .collect();
    let refit = train(
        &train_data,
        2,
        &TrainConfig {
            epochs_max: 4000,
            seed: 21,
            ..TrainConfig::default()
        },
    )
    .unwrap();

    for session in held_out {
        let data = cogsim_core::oracle::session_to_dataset(session);
        let generator_nll =
            cogsim_core::dlvm::session_nll(&session.params, &data).unwrap();
        let z_hat = fit_latent(
            &refit.model,
            &data,
            &LatentPoint::origin(2),
            &FitOptions::default(),
        )
        .unwrap();
        let refit_nll = cogsim_core::dlvm::session_nll(
            &refit.model.decode(z_hat.as_slice()).unwrap(),
            &data,
        )
        .unwrap();
        assert!(
            refit_nll <= generator_nll * 1.05,
            "held-out {}: refit NLL {refit_nll:.1} vs generator {generator_nll:.1}",
            session.session_id
        );
    }
}

/// Independent-fit errors shrink with sample size: the mean absolute
/// error of every fitted parameter is non-increasing over n in
/// {10, 50, 240}, averaged across the suite.
#[test]
fn imle_parameter_errors_shrink_with_sample_size() {
    let fx = small_fixture();
    let defaults = naive_defaults();
    let mut mae = [[0.0f64; 12]; 3];
    for session in &fx.suite {
        for (i, n) in [10usize, 50, 240].into_iter().enumerate() {
            let mut ds = SessionDataset::new(session.session_id.clone());
            ds.trials = session.first_n_per_task(n).unwrap();
            let report = cogsim_core::imle::fit_session(&ds, &defaults).unwrap();
            for (m, (est, tru)) in mae[i]
                .iter_mut()
                .zip(report.params.0.iter().zip(&session.params.0))
            {
                *m += (est - tru).abs() / fx.suite.len() as f64;
            }
        }
    }
    let [at10, at50, at240] = mae;
    for (slot, ((a, b), c)) in at10.iter().zip(&at50).zip(&at240).enumerate() {
        assert!(
            b <= &(a * 1.05),
            "slot {slot}: MAE rose from n=10 ({a}) to n=50 ({b})"
        );
        assert!(
            c <= &(b * 1.05),
            "slot {slot}: MAE rose from n=50 ({b}) to n=240 ({c})"
        );
    }
}

/// With a full bank generated at a lattice point, the posterior argmax
/// lands on that point or on one whose decoded distributions are nearly
/// indistinguishable from it (the multi-modality caveat).
#[test]
fn posterior_argmax_recovers_lattice_born_sessions() {
    let fx = small_fixture();
    let spec = &fx.grid.spec;
    let mut rng = stream(23, "lattice-born", 0);
    for case in 0..4 {
        let idx = rng.random_range(0..fx.grid.len());
        // Keep the generating point well inside the box.
        let z = fx.grid.point(idx);
        if z.iter().any(|v| v.abs() > 0.75 * spec.hi) {
            continue;
        }
        let session = make_ground_truth(
            &fx.model,
            format!("LB-{case}"),
            &LatentPoint(z.to_vec()),
            240,
            900 + case,
        )
        .unwrap();
        let mut state = PosteriorState::init(&fx.model, fx.grid.clone()).unwrap();
        let trials: Vec<_> = session
            .first_n_per_task(240)
            .unwrap()
            .into_iter()
            .map(|t| (t, SelectedBy::Dale))
            .collect();
        state.update_batch(&trials).unwrap();
        let best = state
            .log_weights()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let decoded = fx.grid.decoded[best];
        let kld = cogsim_core::dist::session_kld(&decoded, &session.params).unwrap();
        assert!(
            best == idx || kld < 0.05,
            "argmax {best} vs truth {idx}: decoded KLD {kld}"
        );
    }
}

/// The true latent position scores better normalized NLL than at least
/// 95% of random lattice points on its own bank.
#[test]
fn truth_is_near_optimal_on_the_nnlp_landscape() {
    let fx = small_fixture();
    let mut rng = stream(29, "nnlp-rank", 0);
    for session in fx.suite.iter().take(6) {
        let ctx = nnlp_context(session, &fx.grid).unwrap();
        let truth_nnlp = ctx
            .normalized(&fx.model, session.latent.as_slice())
            .unwrap();
        let mut better = 0;
        let total = 100;
        for _ in 0..total {
            let idx = rng.random_range(0..fx.grid.len());
            let v = ctx.normalized(&fx.model, fx.grid.point(idx)).unwrap();
            if v < truth_nnlp {
                better += 1;
            }
        }
        assert!(
            better <= 5,
            "session {}: truth nnlp {truth_nnlp:.4} beaten by {better}/{total} random points",
            session.session_id
        );
    }
}

/// Decoded parameters stay valid over a broad latent sweep.
#[test]
fn decoded_parameters_valid_over_random_latents() {
    let fx = small_fixture();
    let mut rng = stream(31, "links", 0);
    for _ in 0..10_000 {
        let z = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
        let p = fx.model.decode(&z).unwrap();
        p.validate().expect("decoded parameters must be valid");
    }
}

/// Equal-allocation inputs are reproducible bit-exactly, so both
/// estimators consume identical trial sets.
#[test]
fn equal_allocation_trials_hash_identically() {
    let fx = small_fixture();
    let fnv = |trials: &[cogsim_core::dist::Trial]| -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut byte = |b: u8| {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        };
        for t in trials {
            byte(t.task.index() as u8);
            byte(t.level.unwrap_or(0));
            match t.outcome {
                cogsim_core::dist::Outcome::Binary(ok) => byte(u8::from(ok)),
                cogsim_core::dist::Outcome::Rt(x) => {
                    for b in x.to_bits().to_le_bytes() {
                        byte(b);
                    }
                }
            }
        }
        h
    };
    for session in fx.suite.iter().take(4) {
        for n in [2usize, 20, 240] {
            let a = fnv(&session.first_n_per_task(n).unwrap());
            let b = fnv(&session.first_n_per_task(n).unwrap());
            assert_eq!(a, b, "trial set hash differs for n={n}");
        }
    }
}

/// Serial and parallel experiment runs emit identical CSV bytes.
#[test]
fn parallel_and_serial_runs_emit_identical_csv() {
    let fx = small_fixture();
    let suite = &fx.suite[..6];
    let defaults = naive_defaults();
    let run_all = || {
        let exp1 = run_experiment1(suite, &fx.model, &[2, 10, 30], &defaults).unwrap();
        let exp2 =
            run_experiment2(suite, &fx.model, &fx.grid, 48, &defaults, 13).unwrap();
        (
            results_csv(&exp1, "n_per_task"),
            results_csv(&exp2, "total_obs"),
        )
    };
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run_all);
    let parallel = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run_all);
    assert_eq!(serial.0, parallel.0, "equal-allocation CSVs differ");
    assert_eq!(serial.1, parallel.1, "strategy CSVs differ");
}

/// The acquisition argmax minimizes expected posterior entropy: verified
/// by direct enumeration on three-point posteriors over binary
/// candidates.
#[test]
fn information_gain_argmax_minimizes_expected_posterior_entropy() {
    let mut rng = stream(37, "info-mono", 0);
    let entropy = |w: &[f64]| -> f64 {
        w.iter()
            .map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 })
            .sum()
    };
    for _ in 0..200 {
        let raw: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        // Five binary candidates with random conditionals.
        let candidates: Vec<[f64; 3]> =
            (0..5).map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0))).collect();

        let mut best_mi = f64::NEG_INFINITY;
        let mut best_expected_entropy = f64::INFINITY;
        let mut min_expected_entropy = f64::INFINITY;
        for probs in &candidates {
            let mi = cogsim_core::dale::binary_mutual_information(&w, probs);
            // Expected posterior entropy after observing the outcome.
            let p1: f64 = w.iter().zip(probs).map(|(a, b)| a * b).sum();
            let mut expected = 0.0;
            for (py, branch) in [(p1, true), (1.0 - p1, false)] {
                if py <= 0.0 {
                    continue;
                }
                let posterior: Vec<f64> = w
                    .iter()
                    .zip(probs)
                    .map(|(a, b)| a * if branch { *b } else { 1.0 - *b } / py)
                    .collect();
                expected += py * entropy(&posterior);
            }
            if mi > best_mi {
                best_mi = mi;
                best_expected_entropy = expected;
            }
            min_expected_entropy = min_expected_entropy.min(expected);
        }
        assert!(
            best_expected_entropy <= min_expected_entropy + 1e-12,
            "MI argmax does not minimize expected posterior entropy"
        );
    }
}

/// Battery constraints hold for every suite session: full banks, valid
/// parameters, sigmoid levels only on span tasks.
#[test]
fn suite_sessions_satisfy_battery_constraints() {
    let fx = small_fixture();
    for session in &fx.suite {
        session.params.validate().unwrap();
        for spec in battery() {
            let bank = &session.banks[spec.id.index()];
            assert_eq!(bank.len(), 240);
            for t in bank {
                t.validate().unwrap();
                assert_eq!(t.level.is_some(), spec.family == Family::Sigmoid);
            }
        }
    }
}

/// Estimator rows always report the session divergence as the exact mean
/// of the stored per-task divergences.
#[test]
fn result_rows_keep_session_kld_as_task_mean() {
    let fx = small_fixture();
    let rows = run_experiment1(
        &fx.suite[..4],
        &fx.model,
        &[5, 50],
        &naive_defaults(),
    )
    .unwrap();
    assert_eq!(rows.len(), 4 * 2 * 2);
    for r in &rows {
        let m: f64 = r.task_klds.iter().sum::<f64>() / 8.0;
        assert!((r.session_kld - m).abs() < 1e-12);
        assert!(matches!(r.method, Estimator::Dlvm | Estimator::Imle));
    }
}

/// Under block delivery, the independent fit's per-task divergence moves
/// off its defaulted value only once that task's block begins.
#[test]
fn blocked_delivery_changes_task_klds_only_after_their_block() {
    let fx = small_fixture();
    let session = &fx.suite[2];
    let defaults = naive_defaults();
    let rows = cogsim_core::harness::run_strategy(
        session,
        &fx.model,
        &fx.grid,
        &cogsim_core::harness::StrategyConfig::tb(240, 30),
        Estimator::Imle,
        &defaults,
        41,
    )
    .unwrap();
    // Rows are checkpoint-ordered; per task, find the first checkpoint
    // where its divergence leaves the defaulted value.
    for task in 0..8usize {
        let default_kld = rows[0].task_klds[task];
        let change = rows
            .iter()
            .position(|r| r.task_klds[task].to_bits() != default_kld.to_bits());
        if let Some(at) = change {
            let obs = rows[at].observations;
            // Block starts fall on multiples of 30; the first divergence
            // change must come after a block boundary, and once changed
            // it never reverts to the default between block boundaries.
            let block_start = ((obs - 1) / 30) * 30;
            assert!(
                rows.iter()
                    .take_while(|r| r.observations <= block_start)
                    .all(|r| r.task_klds[task].to_bits() == default_kld.to_bits()),
                "task {task} moved before its block began"
            );
        }
    }
    // Exactly eight blocks of thirty trials ran.
    assert_eq!(rows.last().unwrap().observations, 240);
}

/// Defaults used for unobserved tasks are themselves a valid parameter
/// vector.
#[test]
fn naive_defaults_are_valid() {
    naive_defaults().validate().unwrap();
    let p: ParamVector = naive_defaults();
    assert_eq!(p.prob(cogsim_core::dist::TaskId::Pasat), 0.5);
}
