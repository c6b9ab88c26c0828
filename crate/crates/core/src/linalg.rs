//! Small dense linear-algebra helpers shared by the filter and the objectives.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Draws from `N(mean, cov)` for a symmetric PSD `cov`, which may be singular.
///
/// Uses a Cholesky factor when one exists, otherwise a clamped eigen
/// decomposition.
pub(crate) fn sample_mvn<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> DVector<f64> {
    let p = mean.len();
    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = symmetrize(cov);
    if let Some(chol) = Cholesky::new(cov.clone()) {
        return mean + chol.l() * z;
    }
    let eig = SymmetricEigen::new(cov);
    let scaled = DVector::from_fn(p, |i, _| eig.eigenvalues[i].max(0.0).sqrt() * z[i]);
    mean + eig.eigenvectors * scaled
}

/// Log-density of `x ~ N(0, cov)` restricted to the range of `cov`.
///
/// Returns `(log_density, rank)`. Directions with eigenvalue below
/// `1e-12 * max_eigenvalue` are treated as degenerate and dropped; a zero
/// covariance yields `(0.0, 0)`.
pub(crate) fn log_normal_pseudo(x: &DVector<f64>, cov: &DMatrix<f64>) -> (f64, usize) {
    let eig = SymmetricEigen::new(symmetrize(cov));
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if max_ev <= 0.0 {
        return (0.0, 0);
    }
    let cutoff = max_ev * 1e-12;
    let mut rank = 0;
    let mut acc = 0.0;
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cutoff {
            let proj = eig.eigenvectors.column(i).dot(x);
            acc += LN_2PI + ev.ln() + proj * proj / ev;
            rank += 1;
        }
    }
    (-0.5 * acc, rank)
}

/// Quadratic form `x' cov^+ x` over the range of `cov`, with its rank.
pub(crate) fn pseudo_quadratic(x: &DVector<f64>, cov: &DMatrix<f64>) -> (f64, usize) {
    let eig = SymmetricEigen::new(symmetrize(cov));
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if max_ev <= 0.0 {
        return (0.0, 0);
    }
    let cutoff = max_ev * 1e-12;
    let mut rank = 0;
    let mut acc = 0.0;
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cutoff {
            let proj = eig.eigenvectors.column(i).dot(x);
            acc += proj * proj / ev;
            rank += 1;
        }
    }
    (acc, rank)
}
