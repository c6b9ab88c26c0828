//! Starting values: k-means++ candidate series, one single-series fit per
//! candidate and structural set, greedy candidate-to-cluster assignment,
//! and membership and discount initialization.

use rand::Rng;
use rayon::prelude::*;

use crate::dlm::{
    fit_weighted_dlm, moment_precision, structural_sets, DlmSpec, FitSettings, WeightedObservations,
};
use crate::dynamic::{independent_weights, DynamicStart};
use crate::error::{Error, Result};
use crate::mixture::{log_density_table, membership_posterior, ClusterParams, StaticStart};
use crate::panel::TimeSeriesPanel;

/// Discount retries applied to a failing single-series fit.
const MAX_RETRIES: usize = 3;
pub const DELTA_SWITCHING: f64 = 0.5;
pub const DELTA_STABLE: f64 = 0.95;

/// Single-series fit of one candidate under one structural set.
#[derive(Debug, Clone)]
pub struct CandidateFit {
    pub params: ClusterParams,
    /// One-step-ahead predictive log-likelihood of the candidate.
    pub log_likelihood: f64,
    /// Evolution discount that produced the fit (after retries).
    pub discount: f64,
}

#[derive(Debug, Clone)]
pub struct InitPlan {
    pub candidates: Vec<usize>,
    pub structural_sets: Vec<Vec<usize>>,
    /// `fits[s][c]`: candidate `c` under the structure of set `s`.
    pub fits: Vec<Vec<CandidateFit>>,
    /// Number of single-series fits that were kept (`l × k`).
    pub fit_count: usize,
    /// Cluster `j` starts from candidate `assignment[j]`.
    pub assignment: Vec<usize>,
}

/// Per-dimension standardized, flattened copy of every series.
fn standardized(panel: &TimeSeriesPanel) -> Vec<Vec<f64>> {
    let moments = panel.dimension_moments();
    let m = panel.n_dims();
    (0..panel.n_series())
        .map(|i| {
            panel
                .series(i)
                .iter()
                .enumerate()
                .map(|(x, v)| {
                    let (mean, sd) = moments[x % m];
                    if sd > 0.0 {
                        (v - mean) / sd
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// k-means++ seeding over series: the first pick is uniform, each further
/// pick has probability proportional to the squared distance to the nearest
/// series already picked.
pub fn kmeanspp_select<R: Rng + ?Sized>(panel: &TimeSeriesPanel, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = panel.n_series();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot pick {k} candidates among {n} series")));
    }
    let x = standardized(panel);
    let dist2 = |a: usize, b: usize| -> f64 { x[a].iter().zip(&x[b]).map(|(u, v)| (u - v).powi(2)).sum() };
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(i, chosen[0])).collect();
    while chosen.len() < k {
        let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
        let total: f64 = free.iter().map(|&i| nearest[i]).sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = *free.iter().rev().find(|&&i| nearest[i] > 0.0).expect("positive mass");
            for &i in &free {
                acc += nearest[i];
                if u < acc && nearest[i] > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        for i in 0..n {
            nearest[i] = nearest[i].min(dist2(i, pick));
        }
    }
    Ok(chosen)
}

/// Unit-weight fit of one series, retried with the discount moved halfway
/// to one when it fails or does not converge.
pub fn fit_single_series(
    spec: &DlmSpec,
    panel: &TimeSeriesPanel,
    series: usize,
    settings: &FitSettings,
) -> Result<CandidateFit> {
    let data = WeightedObservations::members(panel, &[series])?;
    let phi = moment_precision(&data)?;
    let mut spec = spec.clone();
    let mut last = String::new();
    for attempt in 0..=MAX_RETRIES {
        match fit_weighted_dlm(&spec, &data, None, &phi, settings) {
            Ok(fit) if fit.converged && fit.log_likelihood.is_finite() => {
                return Ok(CandidateFit {
                    params: ClusterParams {
                        theta: fit.path,
                        phi: fit.phi,
                    },
                    log_likelihood: fit.log_likelihood,
                    discount: spec.discount(),
                });
            }
            Ok(fit) => last = format!("no convergence after {} sweeps", fit.iterations),
            Err(e) => last = e.to_string(),
        }
        if attempt < MAX_RETRIES {
            log::debug!("series {}: retrying single-series fit ({last})", panel.id(series));
            spec = spec.with_discount((1.0 + spec.discount()) / 2.0)?;
        }
    }
    Err(Error::Initialization {
        series: panel.id(series).to_string(),
        reason: last,
    })
}

/// Fits every candidate once per structural set and assigns candidates to
/// clusters greedily by likelihood relative to the candidate's average over
/// sets.
pub fn build_plan(
    specs: &[DlmSpec],
    panel: &TimeSeriesPanel,
    candidates: Vec<usize>,
    settings: &FitSettings,
) -> Result<InitPlan> {
    let k = specs.len();
    if candidates.len() != k {
        return Err(Error::invalid("one candidate per cluster is required"));
    }
    let sets = structural_sets(specs);
    let jobs: Vec<(usize, usize)> = (0..sets.len()).flat_map(|s| (0..k).map(move |c| (s, c))).collect();
    let results: Vec<CandidateFit> = jobs
        .par_iter()
        .map(|&(s, c)| fit_single_series(&specs[sets[s][0]], panel, candidates[c], settings))
        .collect::<Result<_>>()?;
    let mut fits: Vec<Vec<CandidateFit>> = vec![Vec::with_capacity(k); sets.len()];
    for ((s, _), fit) in jobs.into_iter().zip(results) {
        fits[s].push(fit);
    }
    let fit_count = fits.iter().map(Vec::len).sum();

    let l = sets.len() as f64;
    let mean_ll: Vec<f64> = (0..k)
        .map(|c| fits.iter().map(|f| f[c].log_likelihood).sum::<f64>() / l)
        .collect();
    let mut pairs: Vec<(usize, usize, f64)> = (0..sets.len())
        .flat_map(|s| {
            let fits = &fits;
            let mean_ll = &mean_ll;
            (0..k).map(move |c| (s, c, fits[s][c].log_likelihood - mean_ll[c]))
        })
        .collect();
    // best relative score first; ties keep set then candidate order
    pairs.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut free_slots: Vec<std::collections::VecDeque<usize>> =
        sets.iter().map(|s| s.iter().copied().collect()).collect();
    let mut used = vec![false; k];
    let mut assignment = vec![usize::MAX; k];
    for (s, c, _) in pairs {
        if used[c] {
            continue;
        }
        if let Some(j) = free_slots[s].pop_front() {
            assignment[j] = c;
            used[c] = true;
        }
    }
    Ok(InitPlan {
        candidates,
        structural_sets: sets,
        fits,
        fit_count,
        assignment,
    })
}

/// Starting cluster parameters from the plan.
pub fn initial_params(specs: &[DlmSpec], plan: &InitPlan) -> Vec<ClusterParams> {
    (0..specs.len())
        .map(|j| {
            let s = plan.structural_sets.iter().position(|set| set.contains(&j)).expect("every cluster has a set");
            plan.fits[s][plan.assignment[j]].params.clone()
        })
        .collect()
}

/// Static memberships from the cluster likelihoods alone.
pub fn initial_static_eta(specs: &[DlmSpec], panel: &TimeSeriesPanel, params: &[ClusterParams]) -> Result<Vec<Vec<f64>>> {
    let table = log_density_table(specs, panel, params)?;
    let uniform = vec![1.0 / specs.len() as f64; specs.len()];
    (0..panel.n_series()).map(|i| membership_posterior(&table, &uniform, i)).collect()
}

/// Per-time memberships from the single-time cluster likelihoods.
pub fn initial_dynamic_eta(
    specs: &[DlmSpec],
    panel: &TimeSeriesPanel,
    params: &[ClusterParams],
) -> Result<Vec<Vec<Vec<f64>>>> {
    independent_weights(&log_density_table(specs, panel, params)?)
}

/// Plan built from a seeded k-means++ draw.
pub fn plan_from_seed(specs: &[DlmSpec], panel: &TimeSeriesPanel, seed: u64, settings: &FitSettings) -> Result<InitPlan> {
    let mut rng = crate::random::stream(seed, INIT_STREAM);
    let candidates = kmeanspp_select(panel, specs.len(), &mut rng)?;
    build_plan(specs, panel, candidates, settings)
}

/// Stream id reserved for initialization draws.
const INIT_STREAM: u64 = u64::MAX;

pub fn initialize_static(
    specs: &[DlmSpec],
    panel: &TimeSeriesPanel,
    seed: u64,
    settings: &FitSettings,
) -> Result<(InitPlan, StaticStart)> {
    let plan = plan_from_seed(specs, panel, seed, settings)?;
    let params = initial_params(specs, &plan);
    let eta = initial_static_eta(specs, panel, &params)?;
    Ok((plan, StaticStart { params, eta }))
}

pub fn initialize_dynamic(
    specs: &[DlmSpec],
    panel: &TimeSeriesPanel,
    seed: u64,
    settings: &FitSettings,
) -> Result<(InitPlan, DynamicStart)> {
    let plan = plan_from_seed(specs, panel, seed, settings)?;
    let params = initial_params(specs, &plan);
    let eta = initial_dynamic_eta(specs, panel, &params)?;
    Ok((plan, DynamicStart { params, eta }))
}

/// Moderate discount for series whose modal cluster changes between any two
/// adjacent times of a quick independent-weights fit, near one otherwise.
pub fn initialize_delta(eta: &[Vec<Vec<f64>>]) -> Vec<f64> {
    eta.iter()
        .map(|series| {
            let modal: Vec<usize> = series.iter().map(|e| crate::mixture::argmax(e)).collect();
            if modal.windows(2).any(|w| w[0] != w[1]) {
                DELTA_SWITCHING
            } else {
                DELTA_STABLE
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::stream;

    #[test]
    fn all_series_when_k_equals_n() {
        let panel = TimeSeriesPanel::from_univariate(
            vec!["a".into(), "b".into(), "c".into()],
            &[vec![0.0, 1.0], vec![2.0, 1.0], vec![5.0, 5.0]],
        )
        .unwrap();
        let mut pick = kmeanspp_select(&panel, 3, &mut stream(1, 0)).unwrap();
        pick.sort();
        assert_eq!(pick, vec![0, 1, 2]);
    }

    #[test]
    fn identical_series_fall_back_to_uniform() {
        let panel =
            TimeSeriesPanel::from_univariate(vec!["a".into(), "b".into()], &[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let mut pick = kmeanspp_select(&panel, 2, &mut stream(5, 0)).unwrap();
        pick.sort();
        assert_eq!(pick, vec![0, 1]);
    }

    #[test]
    fn delta_rule() {
        let stay = vec![vec![0.9, 0.1]; 4];
        let flip: Vec<Vec<f64>> = (0..4).map(|t| if t % 2 == 0 { vec![0.9, 0.1] } else { vec![0.1, 0.9] }).collect();
        assert_eq!(initialize_delta(&[stay, flip]), vec![DELTA_STABLE, DELTA_SWITCHING]);
    }
}
