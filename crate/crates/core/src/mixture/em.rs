use rayon::prelude::*;

use super::{
    check_params, log_density_table, membership_posterior, xlogx, ClusterParams, StaticMembership,
    StaticMixtureModel, StaticStart,
};
use crate::dlm::{fit_weighted_dlm, FitSettings, WeightedFit, WeightedObservations, Weights, DEFAULT_EPSILON_W};
use crate::error::{Error, Result};

/// Q decreases larger than this (relative) abort the run.
const Q_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Settings of the per-cluster weighted fits in the M-step.
    pub inner: FitSettings,
    pub epsilon: f64,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            inner: FitSettings::default(),
            epsilon: DEFAULT_EPSILON_W,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StaticEstimate {
    pub membership: StaticMembership,
    pub params: Vec<ClusterParams>,
    pub q_path: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Predictive log-likelihood of each cluster's weighted fit.
    pub cluster_log_likelihood: Vec<f64>,
}

impl StaticEstimate {
    pub fn final_q(&self) -> f64 {
        self.q_path.last().copied().unwrap_or(f64::NAN)
    }
}

/// `Σ_ij γ_ij ln η_ij` plus the weighted DLM objectives, with `η = γ`.
pub fn static_q(gamma: &[Vec<f64>], objectives: &[f64]) -> f64 {
    let entropy: f64 = gamma.iter().flatten().map(|&g| xlogx(g)).sum();
    entropy + objectives.iter().sum::<f64>()
}

pub(crate) fn fit_clusters(
    model_specs: &[crate::dlm::DlmSpec],
    panel: &crate::panel::TimeSeriesPanel,
    weights: Vec<Weights>,
    current: &[ClusterParams],
    inner: &FitSettings,
    epsilon: f64,
) -> Result<Vec<WeightedFit>> {
    weights
        .into_par_iter()
        .enumerate()
        .map(|(j, w)| {
            let data = WeightedObservations::new(panel, w, epsilon)?;
            fit_weighted_dlm(&model_specs[j], &data, Some(&current[j].theta), &current[j].phi, inner).map_err(|e| match e {
                Error::EmptyCluster { .. } => Error::EmptyCluster { cluster: j },
                other => other,
            })
        })
        .collect()
}

/// EM for the static mixture: the E-step computes the guarded membership
/// posteriors, the M-step sets `η = γ` and refits every cluster to its
/// weighted replicates.
pub fn em_estimate(model: &StaticMixtureModel, start: &StaticStart, settings: &EmSettings) -> Result<StaticEstimate> {
    if !(settings.tol > 0.0) || settings.max_iter == 0 {
        return Err(Error::invalid("EM needs tol > 0 and max_iter >= 1"));
    }
    let (specs, panel) = (&model.specs, &model.panel);
    check_params(specs, panel, &start.params)?;
    let (n, k, t_len) = (panel.n_series(), model.k(), panel.n_times());
    let mut params = start.params.clone();
    let mut eta = start.eta.clone();
    let mut q_path: Vec<f64> = Vec::new();
    let mut loglik = vec![0.0; k];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;
        let table = log_density_table(specs, panel, &params)?;
        let gamma: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| membership_posterior(&table, &eta[i], i))
            .collect::<Result<_>>()?;
        let weights = (0..k)
            .map(|j| Weights::per_series(gamma.iter().map(|g| g[j]).collect(), t_len))
            .collect::<Result<Vec<_>>>()?;
        let fits = fit_clusters(specs, panel, weights, &params, &settings.inner, settings.epsilon)?;
        let objectives: Vec<f64> = fits.iter().map(|f| f.final_objective()).collect();
        loglik = fits.iter().map(|f| f.log_likelihood).collect();
        params = fits
            .into_iter()
            .map(|f| ClusterParams {
                theta: f.path,
                phi: f.phi,
            })
            .collect();
        eta = gamma;
        let q = static_q(&eta, &objectives);
        if let Some(&prev) = q_path.last() {
            let decrease = prev - q;
            if decrease > Q_TOL * prev.abs().max(1.0) {
                return Err(Error::InternalConsistency {
                    what: "EM expected complete-data log-likelihood".into(),
                    decrease,
                });
            }
            q_path.push(q);
            if (q - prev).abs() < settings.tol * prev.abs().max(1.0) {
                converged = true;
                break;
            }
        } else {
            q_path.push(q);
        }
    }
    Ok(StaticEstimate {
        membership: StaticMembership::from_eta(eta),
        params,
        q_path,
        iterations,
        converged,
        cluster_log_likelihood: loglik,
    })
}
