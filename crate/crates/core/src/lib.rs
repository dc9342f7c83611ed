//! Simulation and inference engine for executive-function test batteries.
//!
//! The crate models a session's performance on an eight-task battery with
//! twelve distributional parameters (psychometric sigmoids for the span
//! tasks, lognormals for the response-time tasks, Bernoulli/binomial
//! probabilities for the accuracy tasks) and provides three estimation
//! routes over that parameter space:
//!
//! * [`dlvm`]: a trained nonlinear decoder from a low-dimensional latent
//!   space to the full parameter vector, fit jointly with per-session
//!   latents by penalized maximum likelihood.
//! * [`dale`]: sequential Bayesian inference over the latent space with a
//!   mutual-information acquisition rule that picks the next task/stimulus.
//! * [`imle`]: a per-task maximum-likelihood baseline that assumes task
//!   independence.
//!
//! [`oracle`] generates ground-truth sessions and pre-seeded trial banks so
//! every sampling strategy consumes comparable randomness, and [`harness`]
//! orchestrates the recovery experiments and writes the CSV reports.

pub mod dale;
pub mod dist;
pub mod dlvm;
pub mod error;
pub mod harness;
pub mod imle;
pub mod oracle;
pub mod seeds;

pub use error::{Error, Result};
