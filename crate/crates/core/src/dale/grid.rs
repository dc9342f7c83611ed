use crate::dist::{battery, normal_cdf, psychometric_prob_raw, Family, ParamVector, TaskId};
use crate::dlvm::DecoderModel;
use crate::error::{Error, Result};

use super::acquisition::RT_BINS;

/// Regular lattice over a latent box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub points_per_dim: usize,
    pub lo: f64,
    pub hi: f64,
}

impl GridSpec {
    /// Default lattice: 61 points per dimension over [-4, 4] for one or
    /// two latent dimensions, 31 per dimension for three.
    pub fn default_for_dim(dim: usize) -> Self {
        GridSpec {
            dim,
            points_per_dim: if dim <= 2 { 61 } else { 31 },
            lo: -4.0,
            hi: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidConfig(format!(
                "grid dim must be 1..=3, got {}",
                self.dim
            )));
        }
        if self.points_per_dim < 2 {
            return Err(Error::InvalidConfig(
                "grid needs at least 2 points per dimension".into(),
            ));
        }
        if self.lo >= self.hi || self.lo.is_nan() || self.hi.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "grid bounds [{}, {}] are degenerate",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of lattice point `idx` in row-major order (last
    /// dimension fastest).
    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let m = self.points_per_dim;
        let step = (self.hi - self.lo) / (m - 1) as f64;
        let mut rest = idx;
        for d in (0..self.dim).rev() {
            let i = rest % m;
            rest /= m;
            out[d] = self.lo + i as f64 * step;
        }
    }
}

/// Per-candidate conditionals cached over the lattice so acquisition
/// scoring is a pure array reduction.
#[derive(Debug, Clone)]
pub(crate) struct BinaryCache {
    /// Success probability per grid point.
    pub probs: Vec<f64>,
    /// Bernoulli outcome entropy per grid point.
    pub entropy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct BinnedCache {
    /// Bin edges in log-RT space (RT_BINS + 1 entries; outermost bins
    /// absorb the tails).
    pub edges: Vec<f64>,
    /// Row-major `n_points x RT_BINS` conditional bin probabilities.
    pub probs: Vec<f64>,
    /// Outcome entropy per grid point.
    pub entropy: Vec<f64>,
}

/// Dense lattice with the decoded parameters and acquisition caches for
/// one model. Immutable once built; share it across sessions.
#[derive(Debug, Clone)]
pub struct Grid {
    pub spec: GridSpec,
    /// Flat coordinates, `len = n_points * dim`.
    pub points: Vec<f64>,
    /// Decoded parameter vector per lattice point.
    pub decoded: Vec<ParamVector>,
    /// Unnormalized standard-normal log-prior per point.
    pub log_prior: Vec<f64>,
    /// Conditional success probabilities for sigmoid candidates, indexed
    /// by (sigmoid task rank, level rank).
    pub(crate) sigmoid_cache: Vec<BinaryCache>,
    /// Conditional success probabilities for accuracy candidates.
    pub(crate) binomial_cache: Vec<BinaryCache>,
    /// Binned response-time conditionals for lognormal candidates.
    pub(crate) lognormal_cache: Vec<BinnedCache>,
}

impl Grid {
    pub fn build(model: &DecoderModel, spec: GridSpec) -> Result<Grid> {
        spec.validate()?;
        if spec.dim != model.latent_dim {
            return Err(Error::DimensionMismatch {
                expected: model.latent_dim,
                got: spec.dim,
            });
        }
        let n = spec.len();
        let mut points = vec![0.0; n * spec.dim];
        let mut decoded = Vec::with_capacity(n);
        let mut log_prior = Vec::with_capacity(n);
        let mut ws = crate::dlvm::DecoderWorkspace::default();
        let mut buf = vec![0.0; spec.dim];
        for i in 0..n {
            spec.point(i, &mut buf);
            points[i * spec.dim..(i + 1) * spec.dim].copy_from_slice(&buf);
            decoded.push(model.decode_into(&buf, &mut ws));
            log_prior.push(-0.5 * buf.iter().map(|v| v * v).sum::<f64>());
        }

        let mut sigmoid_cache = Vec::new();
        let mut binomial_cache = Vec::new();
        let mut lognormal_cache = Vec::new();
        for task_spec in battery() {
            match task_spec.family {
                Family::Sigmoid => {
                    for &level in task_spec.levels {
                        let mut probs = Vec::with_capacity(n);
                        let mut entropy = Vec::with_capacity(n);
                        for p in &decoded {
                            let (theta, s) = p.sigmoid(task_spec.id);
                            let q = psychometric_prob_raw(f64::from(level), theta, s);
                            probs.push(q);
                            entropy.push(crate::dist::bernoulli_entropy(q));
                        }
                        sigmoid_cache.push(BinaryCache { probs, entropy });
                    }
                }
                Family::Binomial => {
                    let mut probs = Vec::with_capacity(n);
                    let mut entropy = Vec::with_capacity(n);
                    for p in &decoded {
                        let q = p.prob(task_spec.id);
                        probs.push(q);
                        entropy.push(crate::dist::bernoulli_entropy(q));
                    }
                    binomial_cache.push(BinaryCache { probs, entropy });
                }
                Family::Lognormal => {
                    lognormal_cache.push(build_binned_cache(&decoded, task_spec.id));
                }
            }
        }

        Ok(Grid {
            spec,
            points,
            decoded,
            log_prior,
            sigmoid_cache,
            binomial_cache,
            lognormal_cache,
        })
    }

    pub fn len(&self) -> usize {
        self.decoded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decoded.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx * self.spec.dim..(idx + 1) * self.spec.dim]
    }

    pub(crate) fn binary_cache(&self, task: TaskId, level: Option<u8>) -> Option<&BinaryCache> {
        match task.family() {
            Family::Sigmoid => {
                let level = level?;
                let spec = crate::dist::task_spec(task);
                let rank = spec.levels.iter().position(|&l| l == level)?;
                let task_rank = match task {
                    TaskId::CorsiComplex => 0,
                    TaskId::CorsiSimple => 1,
                    _ => return None,
                };
                self.sigmoid_cache.get(task_rank * spec.levels.len() + rank)
            }
            Family::Binomial => {
                let rank = match task {
                    TaskId::RunningSpan2 => 0,
                    TaskId::RunningSpan3 => 1,
                    TaskId::Pasat => 2,
                    TaskId::Cancellation => 3,
                    _ => return None,
                };
                self.binomial_cache.get(rank)
            }
            Family::Lognormal => None,
        }
    }

    pub(crate) fn binned_cache(&self, task: TaskId) -> Option<&BinnedCache> {
        let rank = match task {
            TaskId::Countermanding => 0,
            TaskId::Stroop => 1,
            _ => return None,
        };
        self.lognormal_cache.get(rank)
    }
}

/// Equal-width bins in log-RT spanning mu +/- 4 sigma pooled over grid
/// points; the outermost bins absorb the remaining tail mass so each
/// conditional sums to one.
fn build_binned_cache(decoded: &[ParamVector], task: TaskId) -> BinnedCache {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in decoded {
        let (mu, sigma) = p.lognormal(task);
        lo = lo.min(mu - 4.0 * sigma);
        hi = hi.max(mu + 4.0 * sigma);
    }
    let edges: Vec<f64> = (0..=RT_BINS)
        .map(|j| lo + (hi - lo) * j as f64 / RT_BINS as f64)
        .collect();
    let n = decoded.len();
    let mut probs = vec![0.0; n * RT_BINS];
    let mut entropy = vec![0.0; n];
    for (i, p) in decoded.iter().enumerate() {
        let (mu, sigma) = p.lognormal(task);
        let row = &mut probs[i * RT_BINS..(i + 1) * RT_BINS];
        let mut prev_cdf = 0.0;
        for j in 0..RT_BINS {
            let upper = if j == RT_BINS - 1 {
                1.0
            } else {
                normal_cdf((edges[j + 1] - mu) / sigma)
            };
            row[j] = (upper - prev_cdf).max(0.0);
            prev_cdf = upper;
        }
        entropy[i] = row
            .iter()
            .map(|&q| if q > 0.0 { -q * q.ln() } else { 0.0 })
            .sum();
    }
    BinnedCache {
        edges,
        probs,
        entropy,
    }
}
