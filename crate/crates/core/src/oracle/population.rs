use rand::Rng;

use crate::dist::{battery, sample_trial, Family, ParamVector, SessionDataset, STIMULUS_LEVELS};
use crate::dlvm::LatentPoint;
use crate::error::Result;
use crate::seeds::{child_seed, stream};

/// Synthetic training population settings.
#[derive(Debug, Clone)]
pub struct PopulationConfig {
    pub count: usize,
    pub trials_per_task: usize,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            count: 88,
            trials_per_task: 120,
            seed: 0,
        }
    }
}

/// Generated training population with its ground truth.
#[derive(Debug, Clone)]
pub struct Population {
    pub sessions: Vec<SessionDataset>,
    pub latents: Vec<LatentPoint>,
    /// Mean ground-truth parameters across the population; the default
    /// vector for unobserved tasks downstream.
    pub mean_params: ParamVector,
    pub config_seed: u64,
}

/// Parameter ranges of the fixed teacher map, (lo, hi) per slot.
const TEACHER_RANGES: [(f64, f64); 12] = [
    (3.0, 8.0),   // corsi complex threshold (span units)
    (0.3, 2.0),   // corsi complex spread
    (3.0, 8.0),   // corsi simple threshold
    (0.3, 2.0),   // corsi simple spread
    (-0.7, 0.7),  // countermanding mu (log-seconds)
    (0.1, 0.6),   // countermanding sigma
    (-0.7, 0.7),  // stroop mu
    (0.1, 0.6),   // stroop sigma
    (0.5, 0.98),  // running span 2 probability
    (0.5, 0.98),  // running span 3 probability
    (0.5, 0.98),  // pasat probability
    (0.5, 0.98),  // cancellation probability
];

/// Loading of each parameter on the two latent axes plus an offset,
/// chosen so response-time means move opposite to the span thresholds
/// (slow responders have lower working-memory spans) and the accuracy
/// probabilities mix both axes.
const TEACHER_LOADINGS: [(f64, f64, f64); 12] = [
    (0.8, 0.2, 0.0),
    (-0.2, 0.5, 0.0),
    (0.9, -0.1, 0.2),
    (0.1, 0.4, -0.1),
    (-0.7, 0.3, 0.0),
    (-0.3, 0.5, 0.1),
    (-0.8, -0.2, 0.1),
    (-0.2, 0.6, 0.0),
    (0.7, 0.4, 0.3),
    (0.6, 0.5, -0.2),
    (0.5, -0.5, 0.0),
    (0.3, 0.7, 0.2),
];

/// Zero-information defaults for tasks an independent fit never saw:
/// neutral locations (midpoint threshold, unit response time, even odds)
/// with dispersions at the estimator floors. Deliberately degenerate so
/// an unobserved task reads as a failure-sized divergence rather than a
/// quietly plausible guess.
pub fn naive_defaults() -> ParamVector {
    ParamVector([
        5.5, 0.05, 5.5, 0.05, 0.0, 0.01, 0.0, 0.01, 0.5, 0.5, 0.5, 0.5,
    ])
}

/// Fixed smooth map from a 2-dimensional latent position to plausible
/// battery parameters; the data-generating "teacher" behind the synthetic
/// population.
pub fn teacher_params(z: &[f64; 2]) -> ParamVector {
    let mut out = [0.0; 12];
    for (j, slot) in out.iter_mut().enumerate() {
        let (a, b, c) = TEACHER_LOADINGS[j];
        let (lo, hi) = TEACHER_RANGES[j];
        let g = (a * z[0] + b * z[1] + c).tanh();
        *slot = lo + (hi - lo) * (0.5 + 0.5 * g);
    }
    ParamVector(out)
}

/// Latent positions of the synthetic population are drawn uniformly from
/// this box; bounded support keeps the scaled evaluation bounds inside
/// the posterior lattice.
pub const POPULATION_LATENT_RANGE: (f64, f64) = (-2.0, 2.0);

/// Draws a population of simulated full-battery sessions from the
/// teacher: latent positions are uniform over the population box, every
/// task contributes `trials_per_task` trials, and each session carries
/// its ground truth.
pub fn generate_population(cfg: &PopulationConfig) -> Result<Population> {
    let mut latent_rng = stream(cfg.seed, "population-latents", 0);
    let (z_lo, z_hi) = POPULATION_LATENT_RANGE;
    let mut sessions = Vec::with_capacity(cfg.count);
    let mut latents = Vec::with_capacity(cfg.count);
    let mut mean = [0.0; 12];
    for i in 0..cfg.count {
        let z = [
            latent_rng.random_range(z_lo..z_hi),
            latent_rng.random_range(z_lo..z_hi),
        ];
        let params = teacher_params(&z);
        params.validate()?;
        for (acc, &v) in mean.iter_mut().zip(params.as_slice()) {
            *acc += v;
        }
        let mut data = SessionDataset::new(format!("TR-{i:03}"));
        data.ground_truth = Some(params);
        data.ground_truth_latent = Some(z.to_vec());
        let mut trial_rng = stream(child_seed(cfg.seed, "population-bank", i as u64), "trials", 0);
        for spec in battery() {
            for _ in 0..cfg.trials_per_task {
                let stim = match spec.family {
                    Family::Sigmoid => Some(
                        trial_rng
                            .random_range(*STIMULUS_LEVELS.start()..=*STIMULUS_LEVELS.end()),
                    ),
                    _ => None,
                };
                data.trials
                    .push(sample_trial(spec, &params, stim, &mut trial_rng)?);
            }
        }
        sessions.push(data);
        latents.push(LatentPoint(z.to_vec()));
    }
    for acc in mean.iter_mut() {
        *acc /= cfg.count as f64;
    }
    let mean_params = ParamVector(mean);
    mean_params.validate()?;
    Ok(Population {
        sessions,
        latents,
        mean_params,
        config_seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn teacher_stays_inside_its_ranges() {
        for i in 0..200 {
            let t = i as f64 * 0.1 - 10.0;
            let z = [3.0 * t.sin(), 3.0 * (1.7 * t).cos()];
            let p = teacher_params(&z);
            p.validate().unwrap();
            for (j, (v, (lo, hi))) in p.0.iter().zip(TEACHER_RANGES).enumerate() {
                assert!(*v >= lo && *v <= hi, "slot {j} out of range");
            }
        }
    }

    #[test]
    fn population_is_deterministic_and_carries_ground_truth() {
        let cfg = PopulationConfig {
            count: 6,
            trials_per_task: 10,
            seed: 42,
        };
        let a = generate_population(&cfg).unwrap();
        let b = generate_population(&cfg).unwrap();
        assert_eq!(a.sessions.len(), 6);
        for (x, y) in a.sessions.iter().zip(&b.sessions) {
            assert_eq!(x.session_id, y.session_id);
            assert_eq!(x.trials, y.trials);
            assert_eq!(x.ground_truth, y.ground_truth);
        }
        for s in &a.sessions {
            assert_eq!(s.trials.len(), 80);
            assert!(s.ground_truth.is_some());
            s.validate().unwrap();
        }
        a.mean_params.validate().unwrap();
    }
}
