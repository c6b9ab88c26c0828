use std::f64::consts::LN_10;

use rayon::prelude::*;

use super::{check_params, ClusterParams};
use crate::dlm::DlmSpec;
use crate::error::{Error, Result};
use crate::linalg::LN_2PI;
use crate::panel::TimeSeriesPanel;

/// `ln N_m(y_it; F_j θ_jt, V_j)` for every series, cluster and time.
#[derive(Debug, Clone)]
pub struct LogDensityTable {
    n: usize,
    k: usize,
    t: usize,
    values: Vec<f64>,
}

impl LogDensityTable {
    pub fn n_series(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_times(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, t: usize) -> f64 {
        self.values[(i * self.k + j) * self.t + t]
    }

    /// The T log-densities of series `i` under cluster `j`.
    pub fn series(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.k + j) * self.t;
        &self.values[start..start + self.t]
    }
}

pub fn log_density_table(
    specs: &[DlmSpec],
    panel: &TimeSeriesPanel,
    params: &[ClusterParams],
) -> Result<LogDensityTable> {
    check_params(specs, panel, params)?;
    let (n, k, t_len, m) = (panel.n_series(), specs.len(), panel.n_times(), panel.n_dims());
    for p in params {
        if p.phi.values().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("observational variance must be positive definite"));
        }
    }
    let means: Vec<Vec<Vec<f64>>> = specs
        .iter()
        .zip(params)
        .map(|(s, p)| (0..t_len).map(|t| p.theta.obs_mean(s, t).as_slice().to_vec()).collect())
        .collect();
    let norms: Vec<f64> = params
        .iter()
        .map(|p| p.phi.values().iter().map(|v| 0.5 * (v.ln() - LN_2PI)).sum())
        .collect();
    let mut values = vec![0.0; n * k * t_len];
    values.par_chunks_mut(k * t_len).enumerate().for_each(|(i, out)| {
        for j in 0..k {
            let phi = params[j].phi.values();
            for t in 0..t_len {
                let y = panel.obs(i, t);
                let mu = &means[j][t];
                let sq: f64 = (0..m).map(|l| phi[l] * (y[l] - mu[l]).powi(2)).sum();
                out[j * t_len + t] = norms[j] - 0.5 * sq;
            }
        }
    });
    Ok(LogDensityTable { n, k, t: t_len, values })
}

/// `P(Z_i = j | ·)` through the mean order-of-magnitude rescaling.
///
/// With `Ō_ij` the average `log10` density of series `i` under cluster `j`
/// and `Ō_i = max_j Ō_ij`, every cluster's product of densities is
/// multiplied by `10^{-T Ō_i}` before the weighted terms are normalized.
pub fn membership_posterior(table: &LogDensityTable, eta_i: &[f64], i: usize) -> Result<Vec<f64>> {
    let k = table.k();
    if eta_i.len() != k {
        return Err(Error::invalid("membership vector has the wrong length"));
    }
    if eta_i.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::invalid("membership vector has a negative entry"));
    }
    let t_len = table.n_times() as f64;
    let sums: Vec<f64> = (0..k).map(|j| table.series(i, j).iter().sum()).collect();
    let o_bar = sums
        .iter()
        .map(|s| s / LN_10 / t_len)
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = t_len * o_bar * LN_10;
    let logs: Vec<f64> = (0..k)
        .map(|j| {
            if eta_i[j] == 0.0 {
                f64::NEG_INFINITY
            } else {
                eta_i[j].ln() + sums[j] - shift
            }
        })
        .collect();
    // a zero weight on the leading cluster can still push every term under
    // the smallest double; a second shift by the leading weighted term keeps
    // the largest term at exactly one
    let lead = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lead = if lead.is_finite() { lead } else { 0.0 };
    let mut terms: Vec<f64> = logs.iter().map(|l| (l - lead).exp()).collect();
    let total: f64 = terms.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegeneratePosterior { series: i });
    }
    terms.iter_mut().for_each(|v| *v /= total);
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlm::{DiagonalPrecision, StatePath};
    use nalgebra::DVector;

    fn flat(value: f64, t: usize, phi: f64) -> ClusterParams {
        ClusterParams {
            theta: StatePath {
                theta: vec![DVector::from_element(1, value); t],
                cov: None,
            },
            phi: DiagonalPrecision::new(vec![phi]).unwrap(),
        }
    }

    #[test]
    fn zero_residual_density() {
        let panel = TimeSeriesPanel::from_univariate(vec!["a".into()], &[vec![0.7, 0.7]]).unwrap();
        let spec = DlmSpec::random_walk(1, 0.9).unwrap();
        let table = log_density_table(&[spec], &panel, &[flat(0.7, 2, 4.0)]).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI / 4.0).ln();
        assert!((table.get(0, 0, 1) - expected).abs() < 1e-14);
    }

    #[test]
    fn identical_clusters_return_prior() {
        let panel = TimeSeriesPanel::from_univariate(vec!["a".into()], &[vec![0.1, 0.5, 0.2]]).unwrap();
        let spec = DlmSpec::random_walk(1, 0.9).unwrap();
        let p = flat(0.3, 3, 2.0);
        let table = log_density_table(&[spec.clone(), spec], &panel, &[p.clone(), p]).unwrap();
        let post = membership_posterior(&table, &[0.3, 0.7], 0).unwrap();
        assert!((post[0] - 0.3).abs() < 1e-14 && (post[1] - 0.7).abs() < 1e-14);
    }

    #[test]
    fn single_cluster_is_certain() {
        let panel = TimeSeriesPanel::from_univariate(vec!["a".into()], &[vec![10.0; 4]]).unwrap();
        let spec = DlmSpec::random_walk(1, 0.9).unwrap();
        let table = log_density_table(&[spec], &panel, &[flat(-10.0, 4, 100.0)]).unwrap();
        assert_eq!(membership_posterior(&table, &[1.0], 0).unwrap(), vec![1.0]);
    }
}
