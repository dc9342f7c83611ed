use crate::dist::{clamp_prob, ParamVector, SessionDataset, TaskId, Trial, STIMULUS_LEVELS};
use crate::error::Result;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const N_LEVELS: usize = 8;

#[inline]
fn level_index(level: u8) -> usize {
    (level - *STIMULUS_LEVELS.start()) as usize
}

/// Sufficient statistics of a session's trials, grouped by task.
///
/// The likelihood of every family depends on the data only through counts
/// and the first two moments of the log response times, so both the NLL
/// and its parameter gradient cost O(1) per task regardless of how many
/// trials went in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionSummary {
    /// Per sigmoid task, per span level: (trials, successes).
    sigmoid: [[(u64, u64); N_LEVELS]; 2],
    /// Per lognormal task: (n, Σ ln x, Σ (ln x)²).
    lognormal: [(u64, f64, f64); 2],
    /// Per accuracy task: (trials, successes).
    binomial: [(u64, u64); 4],
    total: u64,
}

fn family_slot(task: TaskId) -> usize {
    match task {
        TaskId::CorsiComplex => 0,
        TaskId::CorsiSimple => 1,
        TaskId::Countermanding => 0,
        TaskId::Stroop => 1,
        TaskId::RunningSpan2 => 0,
        TaskId::RunningSpan3 => 1,
        TaskId::Pasat => 2,
        TaskId::Cancellation => 3,
    }
}

impl SessionSummary {
    pub fn new() -> Self {
        SessionSummary::default()
    }

    pub fn from_dataset(data: &SessionDataset) -> Result<Self> {
        let mut s = SessionSummary::new();
        for trial in &data.trials {
            s.push(trial)?;
        }
        Ok(s)
    }

    pub fn from_trials<'a>(trials: impl IntoIterator<Item = &'a Trial>) -> Result<Self> {
        let mut s = SessionSummary::new();
        for trial in trials {
            s.push(trial)?;
        }
        Ok(s)
    }

    /// Folds one trial into the statistics; the trial is validated first.
    pub fn push(&mut self, trial: &Trial) -> Result<()> {
        trial.validate()?;
        use crate::dist::Outcome;
        let slot = family_slot(trial.task);
        match (trial.task.family(), trial.outcome) {
            (crate::dist::Family::Sigmoid, Outcome::Binary(ok)) => {
                let cell = &mut self.sigmoid[slot][level_index(trial.level.unwrap())];
                cell.0 += 1;
                cell.1 += u64::from(ok);
            }
            (crate::dist::Family::Lognormal, Outcome::Rt(x)) => {
                let lx = x.ln();
                let cell = &mut self.lognormal[slot];
                cell.0 += 1;
                cell.1 += lx;
                cell.2 += lx * lx;
            }
            (crate::dist::Family::Binomial, Outcome::Binary(ok)) => {
                let cell = &mut self.binomial[slot];
                cell.0 += 1;
                cell.1 += u64::from(ok);
            }
            // validate() has already rejected mismatched outcome kinds
            _ => unreachable!("trial validation admitted a mismatched outcome"),
        }
        self.total += 1;
        Ok(())
    }

    pub fn total_trials(&self) -> u64 {
        self.total
    }

    /// Number of trials observed for one task.
    pub fn task_trials(&self, task: TaskId) -> u64 {
        let slot = family_slot(task);
        match task.family() {
            crate::dist::Family::Sigmoid => {
                self.sigmoid[slot].iter().map(|c| c.0).sum()
            }
            crate::dist::Family::Lognormal => self.lognormal[slot].0,
            crate::dist::Family::Binomial => self.binomial[slot].0,
        }
    }

    /// (trials, successes) per span level of a sigmoid task.
    pub fn sigmoid_counts(&self, task: TaskId) -> &[(u64, u64); N_LEVELS] {
        debug_assert_eq!(task.family(), crate::dist::Family::Sigmoid);
        &self.sigmoid[family_slot(task)]
    }

    /// (n, Σ ln x, Σ (ln x)²) of a lognormal task.
    pub fn lognormal_stats(&self, task: TaskId) -> (u64, f64, f64) {
        debug_assert_eq!(task.family(), crate::dist::Family::Lognormal);
        self.lognormal[family_slot(task)]
    }

    /// (trials, successes) of an accuracy task.
    pub fn binomial_counts(&self, task: TaskId) -> (u64, u64) {
        debug_assert_eq!(task.family(), crate::dist::Family::Binomial);
        self.binomial[family_slot(task)]
    }

    /// Negative log-likelihood of the summarized trials under `params`.
    pub fn nll(&self, params: &ParamVector) -> f64 {
        let mut nll = 0.0;
        for (i, task) in [TaskId::CorsiComplex, TaskId::CorsiSimple].iter().enumerate() {
            let (theta, s) = params.sigmoid(*task);
            for (li, &(n, k)) in self.sigmoid[i].iter().enumerate() {
                if n == 0 {
                    continue;
                }
                let level = f64::from(*STIMULUS_LEVELS.start() + li as u8);
                let p = clamp_prob(1.0 / (1.0 + ((level - theta) / s).exp()));
                nll -= k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
            }
        }
        for (i, task) in [TaskId::Countermanding, TaskId::Stroop].iter().enumerate() {
            let (n, sum, sumsq) = self.lognormal[i];
            if n == 0 {
                continue;
            }
            let (mu, sigma) = params.lognormal(*task);
            let nf = n as f64;
            let quad = sumsq - 2.0 * mu * sum + nf * mu * mu;
            nll += sum + nf * (sigma.ln() + LN_SQRT_2PI) + quad / (2.0 * sigma * sigma);
        }
        for (i, task) in [
            TaskId::RunningSpan2,
            TaskId::RunningSpan3,
            TaskId::Pasat,
            TaskId::Cancellation,
        ]
        .iter()
        .enumerate()
        {
            let (n, k) = self.binomial[i];
            if n == 0 {
                continue;
            }
            let p = clamp_prob(params.prob(*task));
            nll -= k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
        }
        nll
    }

    /// NLL and its gradient with respect to the 12 parameters.
    ///
    /// In regions where a probability sits on its clamp the local gradient
    /// is zero, matching the flat spot the clamp introduces.
    pub fn nll_grad(&self, params: &ParamVector, grad: &mut [f64; 12]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut nll = 0.0;
        for (i, task) in [TaskId::CorsiComplex, TaskId::CorsiSimple].iter().enumerate() {
            let spec = crate::dist::task_spec(*task);
            let (theta, s) = params.sigmoid(*task);
            let (g_theta, g_s) = (&mut 0.0, &mut 0.0);
            for (li, &(n, k)) in self.sigmoid[i].iter().enumerate() {
                if n == 0 {
                    continue;
                }
                let level = f64::from(*STIMULUS_LEVELS.start() + li as u8);
                let p_raw = 1.0 / (1.0 + ((level - theta) / s).exp());
                let p = clamp_prob(p_raw);
                nll -= k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
                if p_raw > crate::dist::PROB_CLAMP && p_raw < 1.0 - crate::dist::PROB_CLAMP {
                    let dnll_dp = -(k as f64) / p_raw + (n - k) as f64 / (1.0 - p_raw);
                    let pq = p_raw * (1.0 - p_raw);
                    *g_theta += dnll_dp * pq / s;
                    *g_s += dnll_dp * pq * (level - theta) / (s * s);
                }
            }
            grad[spec.slots[0]] = *g_theta;
            grad[spec.slots[1]] = *g_s;
        }
        for (i, task) in [TaskId::Countermanding, TaskId::Stroop].iter().enumerate() {
            let (n, sum, sumsq) = self.lognormal[i];
            if n == 0 {
                continue;
            }
            let spec = crate::dist::task_spec(*task);
            let (mu, sigma) = params.lognormal(*task);
            let nf = n as f64;
            let quad = sumsq - 2.0 * mu * sum + nf * mu * mu;
            nll += sum + nf * (sigma.ln() + LN_SQRT_2PI) + quad / (2.0 * sigma * sigma);
            grad[spec.slots[0]] = (nf * mu - sum) / (sigma * sigma);
            grad[spec.slots[1]] = nf / sigma - quad / (sigma * sigma * sigma);
        }
        for (i, task) in [
            TaskId::RunningSpan2,
            TaskId::RunningSpan3,
            TaskId::Pasat,
            TaskId::Cancellation,
        ]
        .iter()
        .enumerate()
        {
            let (n, k) = self.binomial[i];
            if n == 0 {
                continue;
            }
            let spec = crate::dist::task_spec(*task);
            let p = clamp_prob(params.prob(*task));
            nll -= k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
            grad[spec.slots[0]] = -(k as f64) / p + (n - k) as f64 / (1.0 - p);
        }
        nll
    }
}

/// Negative sum of per-trial log-likelihoods of `data` under `params`.
///
/// Additive over trials; an empty dataset scores zero.
pub fn session_nll(params: &ParamVector, data: &SessionDataset) -> Result<f64> {
    let summary = SessionSummary::from_dataset(data)?;
    Ok(summary.nll(params))
}
