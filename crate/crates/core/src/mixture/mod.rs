//! Static mixtures of DLMs: each series carries one membership vector over
//! the k clusters for the whole time window.

mod density;
mod em;
mod gibbs;
pub(crate) mod relabel;
mod summary;

pub use density::{log_density_table, membership_posterior, LogDensityTable};
pub use em::{em_estimate, static_q, EmSettings, StaticEstimate};
pub use gibbs::{
    gibbs_step_eta, gibbs_step_phi, gibbs_step_theta, gibbs_step_z, run_gibbs, GammaPrior, GibbsDraw,
    GibbsSettings, GibbsTrace,
};
pub use relabel::{
    default_reference_time, relabel_estimate, relabel_order, relabel_trace, relabel_groups, Relabel,
};
pub use summary::{summarize_paths, PathSummary};

pub(crate) use em::fit_clusters;
pub(crate) use gibbs::{draw_phi, draw_theta, mean_rows, Labels};

use crate::dlm::{DiagonalPrecision, DlmSpec, StatePath};
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

/// Tolerance for simplex rows.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// State path and observational precisions of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub theta: StatePath,
    pub phi: DiagonalPrecision,
}

#[derive(Debug, Clone)]
pub struct StaticMixtureModel {
    pub specs: Vec<DlmSpec>,
    pub panel: TimeSeriesPanel,
    /// Dirichlet prior on each membership vector.
    pub c0: Vec<f64>,
}

impl StaticMixtureModel {
    pub fn new(specs: Vec<DlmSpec>, panel: TimeSeriesPanel, c0: Vec<f64>) -> Result<Self> {
        check_specs(&specs, &panel)?;
        if c0.len() != specs.len() || c0.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("c0 needs k positive finite entries"));
        }
        Ok(Self { specs, panel, c0 })
    }

    /// Uniform Dirichlet prior.
    pub fn with_uniform_prior(specs: Vec<DlmSpec>, panel: TimeSeriesPanel) -> Result<Self> {
        let k = specs.len();
        Self::new(specs, panel, vec![1.0; k])
    }

    pub fn k(&self) -> usize {
        self.specs.len()
    }
}

pub(crate) fn check_specs(specs: &[DlmSpec], panel: &TimeSeriesPanel) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::invalid("need at least one cluster"));
    }
    if let Some(s) = specs.iter().find(|s| s.obs_dim() != panel.n_dims()) {
        return Err(Error::invalid(format!(
            "cluster spec '{}' has {} observation dimensions, panel has {}",
            s.label(),
            s.obs_dim(),
            panel.n_dims()
        )));
    }
    Ok(())
}

pub(crate) fn check_params(specs: &[DlmSpec], panel: &TimeSeriesPanel, params: &[ClusterParams]) -> Result<()> {
    if params.len() != specs.len() {
        return Err(Error::invalid("one parameter set per cluster is required"));
    }
    for (spec, p) in specs.iter().zip(params) {
        if p.theta.len() != panel.n_times() || p.theta.theta.iter().any(|v| v.len() != spec.state_dim()) {
            return Err(Error::invalid("state path does not match T or the state dimension"));
        }
        if p.phi.len() != spec.obs_dim() {
            return Err(Error::invalid("precision does not match the observation dimension"));
        }
    }
    Ok(())
}

/// Membership vectors and modal labels.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticMembership {
    pub eta: Vec<Vec<f64>>,
    pub z: Vec<usize>,
}

impl StaticMembership {
    pub fn from_eta(eta: Vec<Vec<f64>>) -> Self {
        let z = eta.iter().map(|row| argmax(row)).collect();
        Self { eta, z }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = j;
        }
    }
    best
}

/// `x ln x` with the convention `0 ln 0 = 0`.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Starting point shared by the static estimators.
#[derive(Debug, Clone)]
pub struct StaticStart {
    pub params: Vec<ClusterParams>,
    pub eta: Vec<Vec<f64>>,
}

/// Stream ids for per-cluster random streams; series use `0..n`.
pub(crate) const CLUSTER_STREAM_OFFSET: u64 = 1 << 40;
