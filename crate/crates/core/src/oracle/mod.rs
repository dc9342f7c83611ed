//! Ground-truth generation: a synthetic training population, lattice
//! sampling of latent space, pre-seeded trial banks, and the normalized
//! negative-log-probability diagnostic.

mod ground_truth;
mod manifest;
mod population;

pub use ground_truth::{
    build_suite, default_bounds, grid_latents, make_ground_truth, normalized_nnlp, nnlp_context,
    GroundTruthSession, NnlpContext, SessionCursor, BANK_SIZE,
};
pub use manifest::{
    session_from_parts, session_to_dataset, PopulationManifest, SessionMeta, SuiteManifest,
    MANIFEST_SCHEMA_VERSION,
};
pub use population::{
    generate_population, naive_defaults, teacher_params, Population, PopulationConfig,
    POPULATION_LATENT_RANGE,
};
