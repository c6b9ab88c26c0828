//! Weighted single-DLM fit by coordinate ascent over the state path and the
//! observational precisions.

use nalgebra::{DMatrix, DVector};

use super::filter::{backward_smooth_mode, forward_filter, FilterOutput, StatePath};
use super::spec::DlmSpec;
use super::tiling::{scaled_prior, tile_replicates, DiagonalPrecision, Tiling, WeightedObservations};
use crate::error::{Error, Result};
use crate::linalg::{log_normal_pseudo, pseudo_quadratic, LN_2PI};

const PHI_MIN: f64 = 1e-200;
const PHI_MAX: f64 = 1e200;
/// Decreases larger than this (relative) abort the fit.
const CONSISTENCY_TOL: f64 = 1e-8;
const MAX_BACKTRACK: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightedFit {
    pub path: StatePath,
    pub phi: DiagonalPrecision,
    /// Objective after each completed sweep (preceded by the starting value
    /// when a starting path was supplied).
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Predictive log-likelihood of the tiled data at the final precisions.
    pub log_likelihood: f64,
}

impl WeightedFit {
    pub fn final_objective(&self) -> f64 {
        *self.objective.last().expect("at least one sweep")
    }
}

struct Pass {
    tiling: Tiling,
    filter: FilterOutput,
}

fn run_pass(spec: &DlmSpec, data: &WeightedObservations<'_>, phi: &DiagonalPrecision) -> Result<Pass> {
    let tiling = tile_replicates(spec, data, phi)?;
    let prior = scaled_prior(spec, phi, tiling.weight_per_time);
    let filter = forward_filter(spec, &tiling.obs, &prior)?;
    Ok(Pass { tiling, filter })
}

/// Weighted log-likelihood of the panel plus the log-density of the state
/// path under its evolution (including the initial prior step).
///
/// `W_t` is the discount evolution variance produced by the filter at `phi`.
pub fn weighted_objective(
    spec: &DlmSpec,
    data: &WeightedObservations<'_>,
    path: &StatePath,
    phi: &DiagonalPrecision,
) -> Result<f64> {
    let pass = run_pass(spec, data, phi)?;
    objective_with(spec, data, &pass, path, phi)
}

fn objective_with(
    spec: &DlmSpec,
    data: &WeightedObservations<'_>,
    pass: &Pass,
    path: &StatePath,
    phi: &DiagonalPrecision,
) -> Result<f64> {
    let panel = data.panel;
    if path.len() != panel.n_times() {
        return Err(Error::invalid("state path length differs from T"));
    }
    let m = spec.obs_dim();
    let phis = phi.values();
    let log_norm: f64 = phis.iter().map(|p| 0.5 * (p.ln() - LN_2PI)).sum();
    let mut obs_term = 0.0;
    for (t, kept) in pass.tiling.members.iter().enumerate() {
        let mean = path.obs_mean(spec, t);
        for &i in kept {
            let w = data.weights.get(i, t);
            let y = panel.obs(i, t);
            let sq: f64 = (0..m).map(|l| phis[l] * (y[l] - mean[l]).powi(2)).sum();
            obs_term += w * (log_norm - 0.5 * sq);
        }
    }
    let g = spec.evo_matrix();
    let mut evo_term = 0.0;
    let first = &path.theta[0] - &pass.filter.a[0];
    evo_term += log_normal_pseudo(&first, &pass.filter.r[0]).0;
    for t in 1..path.len() {
        let w = pass.filter.evolution_variance(spec, t)?;
        let x = &path.theta[t] - g * &path.theta[t - 1];
        evo_term += log_normal_pseudo(&x, &w).0;
    }
    Ok(obs_term + evo_term)
}

/// Maximizer of the objective over the precisions of each separable block
/// with the path held fixed; for coupled blocks the weighted observational
/// variance estimator is used.
fn precision_update(
    spec: &DlmSpec,
    data: &WeightedObservations<'_>,
    pass: &Pass,
    path: &StatePath,
    phi: &DiagonalPrecision,
) -> Result<Vec<f64>> {
    let panel = data.panel;
    let m = spec.obs_dim();
    let mut weight_sum = 0.0;
    let mut ssr = vec![0.0; m];
    for (t, kept) in pass.tiling.members.iter().enumerate() {
        let mean = path.obs_mean(spec, t);
        for &i in kept {
            let w = data.weights.get(i, t);
            weight_sum += w;
            let y = panel.obs(i, t);
            for l in 0..m {
                ssr[l] += w * (y[l] - mean[l]).powi(2);
            }
        }
    }
    let old = phi.values();
    let mut new = old.to_vec();
    let g = spec.evo_matrix();
    for block in spec.blocks() {
        if block.dims.is_empty() {
            continue;
        }
        if block.is_separable() {
            let l = block.dims[0];
            let idx = &block.states;
            let sub = |v: &DVector<f64>| DVector::from_iterator(idx.len(), idx.iter().map(|&s| v[s]));
            let sub_m = |c: &DMatrix<f64>| DMatrix::from_fn(idx.len(), idx.len(), |r, k| c[(idx[r], idx[k])]);
            let (q0, rank0) = pseudo_quadratic(&sub(&(&path.theta[0] - &pass.filter.a[0])), &sub_m(&pass.filter.r[0]));
            let mut quad = q0;
            let mut rank = rank0;
            for t in 1..path.len() {
                let w = pass.filter.evolution_variance(spec, t)?;
                let x = &path.theta[t] - g * &path.theta[t - 1];
                let (q, r) = pseudo_quadratic(&sub(&x), &sub_m(&w));
                quad += q;
                rank += r;
            }
            let count = weight_sum + rank as f64;
            let scale = ssr[l] + quad / old[l];
            new[l] = if scale > 0.0 { count / scale } else { PHI_MAX };
        } else {
            for &l in &block.dims {
                new[l] = if ssr[l] > 0.0 { weight_sum / ssr[l] } else { PHI_MAX };
            }
        }
    }
    for v in &mut new {
        *v = v.clamp(PHI_MIN, PHI_MAX);
    }
    Ok(new)
}

fn check_monotone(what: &str, previous: Option<f64>, current: f64) -> Result<()> {
    if let Some(prev) = previous {
        let decrease = prev - current;
        if decrease > CONSISTENCY_TOL * prev.abs().max(1.0) {
            return Err(Error::InternalConsistency {
                what: what.into(),
                decrease,
            });
        }
    }
    Ok(())
}

/// Fits one DLM to weighted replicates by alternating the exact state mode
/// given the precisions and the precision update given the path.
///
/// Every sweep is checked to not decrease the objective; precision updates
/// that would decrease it are pulled back toward the previous value.
pub fn fit_weighted_dlm(
    spec: &DlmSpec,
    data: &WeightedObservations<'_>,
    init_path: Option<&StatePath>,
    init_phi: &DiagonalPrecision,
    settings: &FitSettings,
) -> Result<WeightedFit> {
    if !(settings.tol > 0.0) || settings.max_iter == 0 {
        return Err(Error::invalid("fit needs tol > 0 and max_iter >= 1"));
    }
    let mut phi = init_phi.clone();
    let mut pass = run_pass(spec, data, &phi)?;
    if pass.tiling.is_empty() {
        return Err(Error::EmptyCluster { cluster: 0 });
    }
    let mut objective = Vec::new();
    if let Some(p) = init_path {
        objective.push(objective_with(spec, data, &pass, p, &phi)?);
    }
    let mut path = backward_smooth_mode(spec, &pass.filter)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < settings.max_iter {
        iterations += 1;
        if iterations > 1 {
            path = backward_smooth_mode(spec, &pass.filter)?;
        }
        let after_path = objective_with(spec, data, &pass, &path, &phi)?;
        check_monotone("weighted DLM objective (state step)", objective.last().copied(), after_path)?;

        let target = precision_update(spec, data, &pass, &path, &phi)?;
        let mut accepted = None;
        let mut step = 1.0;
        for _ in 0..MAX_BACKTRACK {
            let trial: Vec<f64> = phi
                .values()
                .iter()
                .zip(&target)
                .map(|(old, new)| (old.ln() * (1.0 - step) + new.ln() * step).exp().clamp(PHI_MIN, PHI_MAX))
                .collect();
            let trial = DiagonalPrecision::new(trial)?;
            let trial_pass = run_pass(spec, data, &trial)?;
            let value = objective_with(spec, data, &trial_pass, &path, &trial)?;
            if value >= after_path {
                accepted = Some((trial, trial_pass, value));
                break;
            }
            step *= 0.5;
        }
        let value = match accepted {
            Some((trial, trial_pass, value)) => {
                phi = trial;
                pass = trial_pass;
                value
            }
            None => after_path,
        };
        let previous = objective.last().copied();
        objective.push(value);
        if let Some(prev) = previous {
            if (value - prev).abs() <= settings.tol * prev.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    Ok(WeightedFit {
        path,
        phi,
        objective,
        iterations,
        converged,
        log_likelihood: pass.filter.log_likelihood,
    })
}

/// Starting precisions from the raw spread of the retained observations.
pub fn moment_precision(data: &WeightedObservations<'_>) -> Result<DiagonalPrecision> {
    let panel = data.panel;
    let m = panel.n_dims();
    let mut phi = Vec::with_capacity(m);
    for l in 0..m {
        let mut sw = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for i in 0..panel.n_series() {
            for t in 0..panel.n_times() {
                if data.retained(i, t) {
                    let w = data.weights.get(i, t);
                    let y = panel.value(i, t, l);
                    sw += w;
                    s1 += w * y;
                    s2 += w * y * y;
                }
            }
        }
        let var = if sw > 0.0 { (s2 / sw - (s1 / sw).powi(2)).max(0.0) } else { 0.0 };
        phi.push(if var > 1e-12 { 1.0 / var } else { 1.0 });
    }
    DiagonalPrecision::new(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlm::tiling::Weights;
    use crate::panel::TimeSeriesPanel;

    fn toy_panel() -> TimeSeriesPanel {
        TimeSeriesPanel::from_univariate(
            vec!["a".into(), "b".into()],
            &[
                vec![1.0, 1.4, 0.9, 1.8, 2.2],
                vec![1.2, 1.1, 1.5, 1.7, 2.6],
            ],
        )
        .unwrap()
    }

    #[test]
    fn objective_is_non_decreasing() {
        let panel = toy_panel();
        let spec = DlmSpec::random_walk(1, 0.8).unwrap();
        let data = WeightedObservations::members(&panel, &[0, 1]).unwrap();
        let start = StatePath {
            theta: vec![DVector::from_element(1, 0.0); 5],
            cov: None,
        };
        let fit = fit_weighted_dlm(
            &spec,
            &data,
            Some(&start),
            &DiagonalPrecision::new(vec![0.1]).unwrap(),
            &FitSettings::default(),
        )
        .unwrap();
        for pair in fit.objective.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-10, "{:?}", fit.objective);
        }
        assert!(fit.objective.len() >= 3);
        assert!(fit.objective[1] > fit.objective[0]);
    }

    #[test]
    fn all_weights_below_threshold_is_empty() {
        let panel = toy_panel();
        let spec = DlmSpec::random_walk(1, 0.8).unwrap();
        let w = Weights::per_series(vec![1e-10, 0.0], 5).unwrap();
        let data = WeightedObservations::new(&panel, w, 1e-8).unwrap();
        let err = fit_weighted_dlm(
            &spec,
            &data,
            None,
            &DiagonalPrecision::new(vec![1.0]).unwrap(),
            &FitSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyCluster { .. }));
    }

    #[test]
    fn coupled_spec_still_monotone() {
        let panel = TimeSeriesPanel::from_nested(
            vec!["a".into(), "b".into()],
            &[
                (0..8).map(|t| vec![t as f64 * 0.3, t as f64 * 0.7 + 0.2 * (t % 3) as f64]).collect(),
                (0..8).map(|t| vec![t as f64 * 0.25 + 0.1, t as f64 * 0.6]).collect(),
            ],
        )
        .unwrap();
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let spec = DlmSpec::new(f, DMatrix::identity(2, 2), 0.85).unwrap();
        assert!(!spec.blocks()[0].is_separable());
        let data = WeightedObservations::members(&panel, &[0, 1]).unwrap();
        let fit = fit_weighted_dlm(
            &spec,
            &data,
            None,
            &DiagonalPrecision::new(vec![1.0, 1.0]).unwrap(),
            &FitSettings::default(),
        )
        .unwrap();
        for pair in fit.objective.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-10, "{:?}", fit.objective);
        }
    }
}
