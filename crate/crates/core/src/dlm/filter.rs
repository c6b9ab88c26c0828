//! Kalman forward filtering with discount-factor evolution variance, the
//! backward (Rauch-Tung-Striebel) mode recursion and backward sampling.
//!
//! Observations at each time step are processed one scalar at a time, which is
//! exact for the diagonal observational covariances used throughout the crate.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use super::spec::DlmSpec;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, sample_mvn, symmetrize, LN_2PI};

/// Default scale of the diffuse state prior.
pub const DIFFUSE_SCALE: f64 = 1e6;

/// Observations available at one time step: `y = F θ + ν`, `ν ~ N(0, diag(var))`.
///
/// `f` may be a tiling of several copies of a spec's observation matrix, and
/// may have zero rows when nothing is observed.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeObs {
    pub f: DMatrix<f64>,
    pub y: DVector<f64>,
    pub var: DVector<f64>,
}

impl TimeObs {
    pub fn new(f: DMatrix<f64>, y: DVector<f64>, var: DVector<f64>) -> Result<Self> {
        if f.nrows() != y.len() || var.len() != y.len() {
            return Err(Error::invalid("observation block dimensions disagree"));
        }
        if var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("observation variances must be positive and finite"));
        }
        if y.iter().any(|v| !v.is_finite()) || !all_finite(&f) {
            return Err(Error::invalid("observations must be finite"));
        }
        Ok(Self { f, y, var })
    }

    /// No observation at this step.
    pub fn empty(state_dim: usize) -> Self {
        Self {
            f: DMatrix::zeros(0, state_dim),
            y: DVector::zeros(0),
            var: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Gaussian prior `θ_0 ~ N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl StatePrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::invalid("prior covariance must be p x p"));
        }
        if !all_finite(&cov) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("prior must be finite"));
        }
        Ok(Self { mean, cov })
    }

    /// `m0 = 0`, `C0 = 1e6 I`.
    pub fn diffuse(state_dim: usize) -> Self {
        Self {
            mean: DVector::zeros(state_dim),
            cov: DMatrix::identity(state_dim, state_dim) * DIFFUSE_SCALE,
        }
    }
}

/// Per-step moments of the forward pass; index `t` is the 0-based time.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub prior: StatePrior,
    /// Prior means `a_t = G m_{t-1}`.
    pub a: Vec<DVector<f64>>,
    /// Prior covariances `R_t = G C_{t-1} G' / δ`.
    pub r: Vec<DMatrix<f64>>,
    /// Filtered means.
    pub m: Vec<DVector<f64>>,
    /// Filtered covariances.
    pub c: Vec<DMatrix<f64>>,
    /// Sum of one-step-ahead predictive log-densities.
    pub log_likelihood: f64,
}

impl FilterOutput {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Evolution covariance `W_t` used to move from `t - 1` to `t`.
    pub fn evolution_variance(&self, spec: &DlmSpec, t: usize) -> Result<DMatrix<f64>> {
        let prev = if t == 0 { &self.prior.cov } else { &self.c[t - 1] };
        discount_evolution_variance(spec, prev)
    }
}

/// A state trajectory, with smoothed covariances when it is a point estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub theta: Vec<DVector<f64>>,
    pub cov: Option<Vec<DMatrix<f64>>>,
}

impl StatePath {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `F θ_t`.
    pub fn obs_mean(&self, spec: &DlmSpec, t: usize) -> DVector<f64> {
        spec.obs_matrix() * &self.theta[t]
    }

    /// Standard deviations of `F θ_t` under the smoothed covariance, if present.
    pub fn obs_sd(&self, spec: &DlmSpec, t: usize) -> Option<DVector<f64>> {
        let cov = self.cov.as_ref()?;
        let f = spec.obs_matrix();
        let v = f * &cov[t] * f.transpose();
        Some(DVector::from_fn(v.nrows(), |i, _| v[(i, i)].max(0.0).sqrt()))
    }
}

/// `W_t = ((1 - δ) / δ) G C_{t-1} G'`.
pub fn discount_evolution_variance(spec: &DlmSpec, c_prev: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = spec.state_dim();
    if c_prev.nrows() != p || c_prev.ncols() != p {
        return Err(Error::invalid("previous covariance must be p x p"));
    }
    if !all_finite(c_prev) {
        return Err(Error::invalid("previous covariance is not finite"));
    }
    let delta = spec.discount();
    if delta == 1.0 {
        return Ok(DMatrix::zeros(p, p));
    }
    let g = spec.evo_matrix();
    Ok(symmetrize(&(g * c_prev * g.transpose())) * ((1.0 - delta) / delta))
}

pub fn forward_filter(spec: &DlmSpec, obs: &[TimeObs], prior: &StatePrior) -> Result<FilterOutput> {
    let p = spec.state_dim();
    if obs.is_empty() {
        return Err(Error::invalid("at least one time step is required"));
    }
    if prior.mean.len() != p {
        return Err(Error::invalid("prior dimension does not match the spec"));
    }
    let g = spec.evo_matrix();
    let delta = spec.discount();
    let n = obs.len();
    let mut out = FilterOutput {
        prior: prior.clone(),
        a: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        log_likelihood: 0.0,
    };
    let mut mean = prior.mean.clone();
    let mut cov = prior.cov.clone();
    for (t, block) in obs.iter().enumerate() {
        if block.f.ncols() != p {
            return Err(Error::invalid(format!(
                "observation matrix at t = {} has {} columns, expected {p}",
                t + 1,
                block.f.ncols()
            )));
        }
        let a = g * &mean;
        let r = symmetrize(&(g * &cov * g.transpose())) / delta;
        mean = a.clone();
        cov = r.clone();
        for row in 0..block.len() {
            let f = block.f.row(row).transpose();
            let pf = &cov * &f;
            let q = f.dot(&pf) + block.var[row];
            if !(q > 0.0) || !q.is_finite() {
                return Err(Error::numerical(t + 1, "singular innovation variance"));
            }
            let e = block.y[row] - f.dot(&mean);
            out.log_likelihood += -0.5 * (LN_2PI + q.ln() + e * e / q);
            let gain = &pf / q;
            mean += &gain * e;
            cov -= &gain * pf.transpose();
        }
        cov = symmetrize(&cov);
        if !all_finite(&cov) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(t + 1, "non-finite filtered moments"));
        }
        out.a.push(a);
        out.r.push(r);
        out.m.push(mean.clone());
        out.c.push(cov.clone());
    }
    Ok(out)
}

/// Convenience wrapper for a single series: `y` is `T x m` and the
/// observational covariance is `diag(1 / precision)`.
pub fn forward_filter_dense(
    spec: &DlmSpec,
    y: &DMatrix<f64>,
    precision: &[f64],
    prior: &StatePrior,
) -> Result<FilterOutput> {
    let m = spec.obs_dim();
    if y.ncols() != m || precision.len() != m {
        return Err(Error::invalid("observations must have one column per obs dimension"));
    }
    let var = DVector::from_iterator(m, precision.iter().map(|p| 1.0 / p));
    let obs = (0..y.nrows())
        .map(|t| {
            TimeObs::new(
                spec.obs_matrix().clone(),
                y.row(t).transpose(),
                var.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    forward_filter(spec, &obs, prior)
}

/// Backward gain `B_t = C_t G' R_{t+1}^{-1}`.
fn backward_gain(spec: &DlmSpec, fo: &FilterOutput, t: usize) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(fo.r[t + 1].clone())
        .ok_or_else(|| Error::numerical(t + 2, "singular prior covariance in backward gain"))?;
    // B' = R^{-1} G C
    let rhs = spec.evo_matrix() * &fo.c[t];
    Ok(chol.solve(&rhs).transpose())
}

/// Mode (= mean) of the joint smoothing distribution, with smoothed covariances.
pub fn backward_smooth_mode(spec: &DlmSpec, fo: &FilterOutput) -> Result<StatePath> {
    let n = fo.len();
    if n == 0 {
        return Err(Error::invalid("empty filter output"));
    }
    let mut theta = vec![DVector::zeros(0); n];
    let mut cov = vec![DMatrix::zeros(0, 0); n];
    theta[n - 1] = fo.m[n - 1].clone();
    cov[n - 1] = fo.c[n - 1].clone();
    for t in (0..n - 1).rev() {
        let b = backward_gain(spec, fo, t)?;
        theta[t] = &fo.m[t] + &b * (&theta[t + 1] - &fo.a[t + 1]);
        cov[t] = symmetrize(&(&fo.c[t] + &b * (&cov[t + 1] - &fo.r[t + 1]) * b.transpose()));
    }
    Ok(StatePath {
        theta,
        cov: Some(cov),
    })
}

/// One joint draw from the smoothing distribution.
pub fn backward_sample<R: Rng + ?Sized>(
    spec: &DlmSpec,
    fo: &FilterOutput,
    rng: &mut R,
) -> Result<StatePath> {
    let n = fo.len();
    if n == 0 {
        return Err(Error::invalid("empty filter output"));
    }
    let mut theta = vec![DVector::zeros(0); n];
    theta[n - 1] = sample_mvn(rng, &fo.m[n - 1], &fo.c[n - 1]);
    for t in (0..n - 1).rev() {
        let b = backward_gain(spec, fo, t)?;
        let h = &fo.m[t] + &b * (&theta[t + 1] - &fo.a[t + 1]);
        let hc = &fo.c[t] - &b * &fo.r[t + 1] * b.transpose();
        theta[t] = sample_mvn(rng, &h, &hc);
    }
    Ok(StatePath { theta, cov: None })
}
