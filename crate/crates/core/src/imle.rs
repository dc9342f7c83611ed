//! Independent per-task maximum likelihood estimation.
//!
//! Each task is fit from its own trials alone: closed forms for the
//! lognormal and binomial families, constrained gradient descent with
//! multi-start for the psychometric sigmoid. Tasks with no observations
//! fall back to a caller-supplied default vector.
//!
//! Fits canonicalize their input order internally (samples are sorted,
//! sigmoid trials reduce to per-level counts), so any permutation of the
//! same trials yields bit-identical estimates.

use serde::{Deserialize, Serialize};

use crate::dist::{
    battery, clamp_prob, Family, ParamVector, SessionDataset, TaskId, STIMULUS_LEVELS,
};
use crate::dlvm::Adam;
use crate::error::{Error, Result};

/// Lower bound for the lognormal sigma estimate; keeps single-observation
/// fits from producing a degenerate distribution with infinite divergence.
pub const SIGMA_FLOOR: f64 = 0.01;

/// Box constraints for the sigmoid fit.
pub const THETA_BOUNDS: (f64, f64) = (1.0, 10.0);
pub const SPREAD_BOUNDS: (f64, f64) = (0.05, 5.0);

const N_LEVELS: usize = 8;

/// Per-task outcome of a session fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFit {
    pub fitted: bool,
    pub defaulted: bool,
    pub boundary_clamped: bool,
    pub n_obs: u64,
}

/// Result of fitting all eight tasks of one session independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImleFitReport {
    pub params: ParamVector,
    pub tasks: [TaskFit; 8],
}

impl ImleFitReport {
    /// Parameter JSON with a per-task flags object.
    pub fn to_json(&self) -> serde_json::Result<String> {
        #[derive(Serialize)]
        struct Flags<'a> {
            schema_version: u32,
            params: &'a [f64; 12],
            flags: std::collections::BTreeMap<&'static str, TaskFit>,
        }
        let mut flags = std::collections::BTreeMap::new();
        for (i, id) in TaskId::ALL.iter().enumerate() {
            flags.insert(id.name(), self.tasks[i]);
        }
        serde_json::to_string_pretty(&Flags {
            schema_version: crate::dist::PARAM_SCHEMA_VERSION,
            params: self.params.as_slice(),
            flags,
        })
    }
}

/// Maximum-likelihood lognormal fit: mean and population (divide-by-n)
/// standard deviation of the log samples, sigma floored at
/// [`SIGMA_FLOOR`].
pub fn fit_lognormal(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("fit_lognormal samples"));
    }
    for &x in samples {
        if x <= 0.0 || !x.is_finite() {
            return Err(Error::domain(
                "fit_lognormal",
                format!("sample {x} must be positive and finite"),
            ));
        }
    }
    let mut logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    logs.sort_by(f64::total_cmp);
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / n;
    let sigma = var.max(0.0).sqrt().max(SIGMA_FLOOR);
    Ok((mu, sigma))
}

/// Maximum-likelihood binomial fit: the success rate, clamped away from
/// the boundary.
pub fn fit_binomial(successes: u64, trials: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::domain("fit_binomial", "zero trials"));
    }
    if successes > trials {
        return Err(Error::domain(
            "fit_binomial",
            format!("successes {successes} exceed trials {trials}"),
        ));
    }
    Ok(clamp_prob(successes as f64 / trials as f64))
}

/// Result of a sigmoid fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidFit {
    pub theta: f64,
    pub spread: f64,
    /// True when the optimum sits on the constraint box.
    pub on_boundary: bool,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Exact Bernoulli NLL of per-level counts under the psychometric
/// sigmoid, in the softplus form `-ln p(u) = softplus(u)` with
/// `u = (L - θ)/s`. Finite for every point of the constraint box, with no
/// plateau at saturated probabilities.
pub fn sigmoid_nll(counts: &[(u64, u64); N_LEVELS], theta: f64, s: f64) -> f64 {
    let mut nll = 0.0;
    for (li, &(n, k)) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let level = f64::from(*STIMULUS_LEVELS.start() + li as u8);
        let u = (level - theta) / s;
        let sp = softplus(u);
        // -ln p = softplus(u); -ln(1-p) = softplus(u) - u.
        nll += k as f64 * sp + (n - k) as f64 * (sp - u);
    }
    nll
}

fn sigmoid_nll_grad(counts: &[(u64, u64); N_LEVELS], theta: f64, s: f64) -> (f64, f64) {
    let mut g_theta = 0.0;
    let mut g_s = 0.0;
    for (li, &(n, k)) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let level = f64::from(*STIMULUS_LEVELS.start() + li as u8);
        let u = (level - theta) / s;
        let p = 1.0 / (1.0 + u.exp());
        // dNLL/du = k - n·p, chained through u = (L - θ)/s.
        let dnll_du = k as f64 - n as f64 * p;
        g_theta += -dnll_du / s;
        g_s += -dnll_du * u / s;
    }
    (g_theta, g_s)
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Sigmoid fit from per-level counts: multi-start projected Adam followed
/// by alternating line searches, all within the constraint box.
pub fn fit_sigmoid_counts(counts: &[(u64, u64); N_LEVELS]) -> Result<SigmoidFit> {
    let total: u64 = counts.iter().map(|c| c.0).sum();
    if total == 0 {
        return Err(Error::EmptyInput("fit_sigmoid trials"));
    }
    let (theta_lo, theta_hi) = THETA_BOUNDS;
    let (s_lo, s_hi) = SPREAD_BOUNDS;

    // Nine starts across the box.
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &theta0 in &[2.5, 5.5, 8.5] {
        for &s0 in &[0.1, 0.6, 3.0] {
            let mut p = [theta0, s0];
            let mut adam = Adam::new(0.05, 2);
            for _ in 0..300 {
                let (gt, gs) = sigmoid_nll_grad(counts, p[0], p[1]);
                adam.step(&mut p, &[gt, gs]);
                p[0] = p[0].clamp(theta_lo, theta_hi);
                p[1] = p[1].clamp(s_lo, s_hi);
            }
            let nll = sigmoid_nll(counts, p[0], p[1]);
            if nll < best.0 {
                best = (nll, p[0], p[1]);
            }
        }
    }

    // Alternating golden-section polish with shrinking windows.
    let (mut theta, mut s) = (best.1, best.2);
    let mut w_theta = theta_hi - theta_lo;
    let mut w_s = s_hi - s_lo;
    for _ in 0..12 {
        let s_now = s;
        theta = golden_min(
            |t| sigmoid_nll(counts, t, s_now),
            (theta - w_theta).max(theta_lo),
            (theta + w_theta).min(theta_hi),
            60,
        );
        let t_now = theta;
        s = golden_min(
            |v| sigmoid_nll(counts, t_now, v),
            (s - w_s).max(s_lo),
            (s + w_s).min(s_hi),
            60,
        );
        w_theta *= 0.35;
        w_s *= 0.35;
    }
    // Keep whichever of the polished and Adam points scores better.
    if sigmoid_nll(counts, theta, s) > best.0 {
        theta = best.1;
        s = best.2;
    }

    let eps = 1e-9;
    let on_boundary = theta <= theta_lo + eps
        || theta >= theta_hi - eps
        || s <= s_lo + eps
        || s >= s_hi - eps;
    Ok(SigmoidFit {
        theta,
        spread: s,
        on_boundary,
    })
}

/// Sigmoid fit from raw `(level, correct)` trials.
pub fn fit_sigmoid(trials: &[(u8, bool)]) -> Result<SigmoidFit> {
    if trials.is_empty() {
        return Err(Error::EmptyInput("fit_sigmoid trials"));
    }
    let mut counts = [(0u64, 0u64); N_LEVELS];
    for &(level, ok) in trials {
        if !STIMULUS_LEVELS.contains(&level) {
            return Err(Error::domain(
                "fit_sigmoid",
                format!("level {level} outside presented range"),
            ));
        }
        let cell = &mut counts[(level - *STIMULUS_LEVELS.start()) as usize];
        cell.0 += 1;
        cell.1 += u64::from(ok);
    }
    fit_sigmoid_counts(&counts)
}

/// Fits every task independently from its own trials; tasks without
/// observations receive the default parameters.
pub fn fit_session(data: &SessionDataset, defaults: &ParamVector) -> Result<ImleFitReport> {
    defaults.validate()?;
    data.validate()?;
    let mut params = *defaults;
    let mut tasks = [TaskFit {
        fitted: false,
        defaulted: true,
        boundary_clamped: false,
        n_obs: 0,
    }; 8];

    for spec in battery() {
        let idx = spec.id.index();
        match spec.family {
            Family::Sigmoid => {
                let mut counts = [(0u64, 0u64); N_LEVELS];
                let mut n = 0u64;
                for t in data.task_trials(spec.id) {
                    let level = t.level.expect("validated sigmoid trial");
                    let ok = matches!(t.outcome, crate::dist::Outcome::Binary(true));
                    let cell = &mut counts[(level - *STIMULUS_LEVELS.start()) as usize];
                    cell.0 += 1;
                    cell.1 += u64::from(ok);
                    n += 1;
                }
                if n == 0 {
                    continue;
                }
                let fit = fit_sigmoid_counts(&counts)?;
                params.0[spec.slots[0]] = fit.theta;
                params.0[spec.slots[1]] = fit.spread;
                tasks[idx] = TaskFit {
                    fitted: true,
                    defaulted: false,
                    boundary_clamped: fit.on_boundary,
                    n_obs: n,
                };
            }
            Family::Lognormal => {
                let samples: Vec<f64> = data
                    .task_trials(spec.id)
                    .map(|t| match t.outcome {
                        crate::dist::Outcome::Rt(x) => x,
                        _ => unreachable!("validated RT trial"),
                    })
                    .collect();
                if samples.is_empty() {
                    continue;
                }
                let (mu, sigma) = fit_lognormal(&samples)?;
                params.0[spec.slots[0]] = mu;
                params.0[spec.slots[1]] = sigma;
                tasks[idx] = TaskFit {
                    fitted: true,
                    defaulted: false,
                    boundary_clamped: sigma <= SIGMA_FLOOR,
                    n_obs: samples.len() as u64,
                };
            }
            Family::Binomial => {
                let mut n = 0u64;
                let mut k = 0u64;
                for t in data.task_trials(spec.id) {
                    n += 1;
                    k += u64::from(matches!(t.outcome, crate::dist::Outcome::Binary(true)));
                }
                if n == 0 {
                    continue;
                }
                let p = fit_binomial(k, n)?;
                params.0[spec.slots[0]] = p;
                tasks[idx] = TaskFit {
                    fitted: true,
                    defaulted: false,
                    boundary_clamped: k == 0 || k == n,
                    n_obs: n,
                };
            }
        }
    }
    Ok(ImleFitReport { params, tasks })
}
