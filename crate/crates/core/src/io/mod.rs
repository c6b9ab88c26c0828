//! Panel files, run configuration, synthetic data and result files.

mod config;
mod generate;
mod panel_file;
mod run;

pub use config::{Algorithm, ClusterConfig, DeltaMode, OneOrMany, RunConfig};
pub use generate::{cluster_mean, generate, GeneratedKind, GeneratedPanel, GEN_SD, GEN_SWITCH_T, GEN_T};
pub use panel_file::{load_panel, read_panel, write_panel};
pub use run::{
    dynamic_mixture_loglik, emit_results, run, static_mixture_loglik, Estimation, EstimationResult,
    CONVERGENCE_FILE, DELTA_FILE, MANIFEST_FILE, MEANS_FILE, MEMBERSHIPS_FILE, PRECISIONS_FILE, STATES_FILE,
    TRACE_FILE,
};
