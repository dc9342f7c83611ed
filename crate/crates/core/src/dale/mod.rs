//! Sequential Bayesian inference over latent space with a
//! mutual-information acquisition rule.
//!
//! The posterior lives on a dense lattice with exact discrete updates; a
//! gradient refinement from the lattice argmax produces the continuous
//! MAP estimate. Candidate trials are scored by the mutual information
//! between their outcome and the latent position, and the session loop
//! administers a fixed primer before information-driven selection starts.

mod acquisition;
mod grid;
mod posterior;
mod session;

pub use acquisition::{
    binary_mutual_information, candidate_set, mutual_information, mutual_information_raw,
    predictive_dist, select_next, Candidate, PredictiveDist, RT_BINS,
};
pub use grid::{Grid, GridSpec};
pub use posterior::{PosteriorState, SelectedBy};
pub use session::{run_dale_session, run_primer, DaleRun, TrajectoryStep, TrialSource};
