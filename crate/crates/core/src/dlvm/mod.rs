//! Nonlinear decoder from latent space to the 12-parameter vector, with
//! joint training of decoder weights and per-session latents by penalized
//! maximum likelihood.

mod adam;
mod decoder;
mod fit;
mod nll;
mod train;

pub use adam::Adam;
pub use decoder::{DecoderModel, DecoderWorkspace, Link, ModelGrads, TrainMeta, MODEL_SCHEMA_VERSION};
pub use fit::{
    descend_latent, fit_latent, fit_latent_summary, latent_objective, multi_start_points,
    FitOptions,
};
#[cfg(test)]
pub(crate) use train::random_model_for_tests as test_model;
pub use train::TrainOutput;
pub use nll::{session_nll, SessionSummary};
pub use train::{train, TrainConfig};

use serde::{Deserialize, Serialize};

/// A position in D-dimensional latent space, D in {1, 2, 3}. Units are
/// arbitrary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPoint(pub Vec<f64>);

impl LatentPoint {
    pub fn origin(dim: usize) -> Self {
        LatentPoint(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Euclidean distance to another point of the same dimension.
    pub fn distance(&self, other: &LatentPoint) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}
