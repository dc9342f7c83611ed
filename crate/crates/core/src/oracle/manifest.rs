//! Versioned JSON manifests for the generated datasets, plus conversion
//! between ground-truth sessions and the trial CSV schema.

use serde::{Deserialize, Serialize};

use super::ground_truth::GroundTruthSession;
use super::population::Population;
use crate::dist::{battery, ParamVector, SessionDataset, Trial};
use crate::dlvm::LatentPoint;
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// One session's identity: latent position, decoded parameters, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub latent: Vec<f64>,
    pub params: ParamVector,
    pub seed: u64,
}

/// Manifest of the simulated evaluation suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub schema_version: u32,
    pub root_seed: u64,
    pub bounds_scale: f64,
    pub n_per_task: usize,
    pub sessions: Vec<SessionMeta>,
}

/// Manifest of the synthetic training population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub trials_per_task: usize,
    pub mean_params: ParamVector,
    pub sessions: Vec<SessionMeta>,
}

fn check_version(found: u32) -> Result<()> {
    if found != MANIFEST_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: MANIFEST_SCHEMA_VERSION,
            found,
        });
    }
    Ok(())
}

impl SuiteManifest {
    pub fn from_suite(
        suite: &[GroundTruthSession],
        root_seed: u64,
        bounds_scale: f64,
        n_per_task: usize,
    ) -> Self {
        SuiteManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            root_seed,
            bounds_scale,
            n_per_task,
            sessions: suite
                .iter()
                .map(|s| SessionMeta {
                    session_id: s.session_id.clone(),
                    latent: s.latent.0.clone(),
                    params: s.params,
                    seed: s.seed,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SuiteManifest = serde_json::from_str(text)?;
        check_version(m.schema_version)?;
        Ok(m)
    }
}

impl PopulationManifest {
    pub fn from_population(pop: &Population) -> Self {
        PopulationManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            seed: pop.config_seed,
            trials_per_task: pop
                .sessions
                .first()
                .map(|s| s.trials.len() / battery().len())
                .unwrap_or(0),
            mean_params: pop.mean_params,
            sessions: pop
                .sessions
                .iter()
                .zip(&pop.latents)
                .map(|(s, z)| SessionMeta {
                    session_id: s.session_id.clone(),
                    latent: z.0.clone(),
                    params: s.ground_truth.expect("population carries ground truth"),
                    seed: pop.config_seed,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: PopulationManifest = serde_json::from_str(text)?;
        check_version(m.schema_version)?;
        Ok(m)
    }
}

/// Flattens a ground-truth session's banks (task-major, bank order) into
/// the trial dataset schema.
pub fn session_to_dataset(session: &GroundTruthSession) -> SessionDataset {
    let mut ds = SessionDataset::new(session.session_id.clone());
    ds.ground_truth = Some(session.params);
    ds.ground_truth_latent = Some(session.latent.0.clone());
    for bank in &session.banks {
        ds.trials.extend_from_slice(bank);
    }
    ds
}

/// Rebuilds a ground-truth session from its manifest entry and trial
/// rows; trials regroup into per-task banks preserving order.
pub fn session_from_parts(
    meta: &SessionMeta,
    dataset: &SessionDataset,
    n_per_task: usize,
) -> Result<GroundTruthSession> {
    let mut banks: [Vec<Trial>; 8] = Default::default();
    for trial in &dataset.trials {
        banks[trial.task.index()].push(*trial);
    }
    for (i, bank) in banks.iter().enumerate() {
        if bank.len() != n_per_task {
            return Err(Error::Malformed {
                what: "suite trials",
                msg: format!(
                    "session {} task {} has {} trials, manifest says {n_per_task}",
                    meta.session_id,
                    battery()[i].id.name(),
                    bank.len()
                ),
            });
        }
    }
    meta.params.validate()?;
    Ok(GroundTruthSession {
        session_id: meta.session_id.clone(),
        latent: LatentPoint(meta.latent.clone()),
        params: meta.params,
        banks,
        seed: meta.seed,
    })
}
