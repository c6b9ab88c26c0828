//! Membership posteriors where the plain product of densities underflows,
//! with an extended-exponent reference.

use dlmix::dlm::{DiagonalPrecision, DlmSpec, StatePath};
use dlmix::mixture::ClusterParams;
use dlmix::TimeSeriesPanel;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::extended::{normal_pdf, ExtFloat};

pub struct UnderflowCase {
    pub specs: Vec<DlmSpec>,
    pub panel: TimeSeriesPanel,
    pub params: Vec<ClusterParams>,
    pub eta: Vec<f64>,
}

/// One univariate series, k in 2..=4 random-walk clusters whose means sit
/// close together so the posterior is not one-hot.
pub fn underflow_case(seed: u64, t_len: usize) -> UnderflowCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=4);
    let base: Vec<f64> = (0..t_len).map(|t| (t as f64 / 7.0).sin()).collect();
    // wide noise keeps every density below one, so the product underflows
    let phi0: f64 = rng.random_range(5e-4..3e-3);
    let y: Vec<f64> = base
        .iter()
        .map(|b| b + rng.sample::<f64, _>(StandardNormal) / phi0.sqrt())
        .collect();
    // offsets of the order of one posterior SD keep the clusters competitive
    let spread = rng.random_range(0.0..3.0) / (t_len as f64 * phi0).sqrt();
    let phi_jitter = 0.05 / (t_len as f64).sqrt();
    let params = (0..k)
        .map(|_| {
            let off = spread * rng.sample::<f64, _>(StandardNormal);
            let phi = phi0 * (1.0 + phi_jitter * rng.sample::<f64, _>(StandardNormal));
            ClusterParams {
                theta: StatePath {
                    theta: base.iter().map(|b| DVector::from_element(1, b + off)).collect(),
                    cov: None,
                },
                phi: DiagonalPrecision::new(vec![phi]).unwrap(),
            }
        })
        .collect();
    let mut eta: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = eta.iter().sum();
    eta.iter_mut().for_each(|e| *e /= s);
    UnderflowCase {
        specs: vec![DlmSpec::random_walk(1, 0.9).unwrap(); k],
        panel: TimeSeriesPanel::from_univariate(vec!["x".into()], &[y]).unwrap(),
        params,
        eta,
    }
}

/// Product of the raw densities in plain f64, which underflows.
pub fn naive_products(case: &UnderflowCase) -> Vec<f64> {
    let y = case.panel.series(0);
    case.params
        .iter()
        .map(|p| {
            let phi = p.phi.values()[0];
            y.iter().zip(&p.theta.theta).map(|(y, th)| normal_pdf(*y, th[0], phi)).product()
        })
        .collect()
}

/// `η_j Π_t N(y_t) / Σ_l η_l Π_t N(y_t)` with an unbounded exponent.
pub fn extended_posterior(case: &UnderflowCase) -> Vec<f64> {
    let y = case.panel.series(0);
    let terms: Vec<ExtFloat> = case
        .params
        .iter()
        .zip(&case.eta)
        .map(|(p, e)| {
            let phi = p.phi.values()[0];
            y.iter()
                .zip(&p.theta.theta)
                .fold(ExtFloat::from_f64(*e), |acc, (y, th)| acc.mul_f64(normal_pdf(*y, th[0], phi)))
        })
        .collect();
    let total = terms.iter().fold(ExtFloat::zero(), |a, b| a.add(*b));
    terms.iter().map(|t| t.ratio(total)).collect()
}
