use nalgebra::{DMatrix, DVector};

use super::filter::{StatePrior, TimeObs, DIFFUSE_SCALE};
use super::spec::DlmSpec;
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

/// Weights below this are dropped before tiling.
pub const DEFAULT_EPSILON_W: f64 = 1e-8;

/// Diagonal observational precisions `φ_1 … φ_m`, i.e. `V = diag(1 / φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPrecision(Vec<f64>);

impl DiagonalPrecision {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::invalid("precision vector is empty"));
        }
        if phi.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid(format!(
                "precisions must be positive and finite, got {phi:?}"
            )));
        }
        Ok(Self(phi))
    }

    pub fn uniform(m: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.0.iter().map(|p| 1.0 / p).collect()
    }
}

/// Observation weights, either one per series or one per series and time.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    n_series: usize,
    n_times: usize,
    per_time: bool,
    values: Vec<f64>,
}

impl Weights {
    pub fn per_series(values: Vec<f64>, n_times: usize) -> Result<Self> {
        Self::check(&values)?;
        Ok(Self {
            n_series: values.len(),
            n_times,
            per_time: false,
            values,
        })
    }

    /// `values[i * n_times + t]`.
    pub fn per_time(n_series: usize, n_times: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_series * n_times {
            return Err(Error::invalid("per-time weights need n * T values"));
        }
        Self::check(&values)?;
        Ok(Self {
            n_series,
            n_times,
            per_time: true,
            values,
        })
    }

    pub fn ones(n_series: usize, n_times: usize) -> Self {
        Self {
            n_series,
            n_times,
            per_time: false,
            values: vec![1.0; n_series],
        }
    }

    fn check(values: &[f64]) -> Result<()> {
        if values.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize) -> f64 {
        if self.per_time {
            self.values[i * self.n_times + t]
        } else {
            self.values[i]
        }
    }

    pub fn n_series(&self) -> usize {
        self.n_series
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn is_per_time(&self) -> bool {
        self.per_time
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|w| *w *= factor);
        Self::check(&out.values)?;
        Ok(out)
    }
}

/// A panel together with the weights one cluster assigns to it.
#[derive(Debug, Clone)]
pub struct WeightedObservations<'a> {
    pub panel: &'a TimeSeriesPanel,
    pub weights: Weights,
    pub epsilon: f64,
}

impl<'a> WeightedObservations<'a> {
    pub fn new(panel: &'a TimeSeriesPanel, weights: Weights, epsilon: f64) -> Result<Self> {
        if weights.n_series() != panel.n_series() || weights.n_times() != panel.n_times() {
            return Err(Error::invalid("weights do not match the panel shape"));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::invalid("truncation threshold must be non-negative"));
        }
        Ok(Self {
            panel,
            weights,
            epsilon,
        })
    }

    /// Unit weights for the listed members and zero elsewhere.
    pub fn members(panel: &'a TimeSeriesPanel, members: &[usize]) -> Result<Self> {
        let mut w = vec![0.0; panel.n_series()];
        for &i in members {
            w[i] = 1.0;
        }
        Self::new(panel, Weights::per_series(w, panel.n_times())?, DEFAULT_EPSILON_W)
    }

    #[inline]
    pub fn retained(&self, i: usize, t: usize) -> bool {
        let w = self.weights.get(i, t);
        w > 0.0 && w >= self.epsilon
    }
}

/// Result of stacking the retained replicates at every time step.
#[derive(Debug, Clone)]
pub struct Tiling {
    pub obs: Vec<TimeObs>,
    /// Retained series at each time step, in tiling order.
    pub members: Vec<Vec<usize>>,
    /// Mean over time of the total retained weight.
    pub weight_per_time: f64,
}

impl Tiling {
    pub fn retained_count(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.retained_count() == 0
    }
}

/// Vertical tiling of `F` over the retained replicates with observational
/// covariance `diag(γ^{-1}) ⊗ V`. Time steps with no retained replicate
/// become empty observation blocks.
pub fn tile_replicates(
    spec: &DlmSpec,
    data: &WeightedObservations<'_>,
    phi: &DiagonalPrecision,
) -> Result<Tiling> {
    let panel = data.panel;
    let m = spec.obs_dim();
    if panel.n_dims() != m || phi.len() != m {
        return Err(Error::invalid(format!(
            "spec has {m} obs dimensions, panel {} and precision {}",
            panel.n_dims(),
            phi.len()
        )));
    }
    let f = spec.obs_matrix();
    let p = spec.state_dim();
    let mut obs = Vec::with_capacity(panel.n_times());
    let mut members = Vec::with_capacity(panel.n_times());
    let mut total_weight = 0.0;
    for t in 0..panel.n_times() {
        let kept: Vec<usize> = (0..panel.n_series()).filter(|&i| data.retained(i, t)).collect();
        let rows = kept.len() * m;
        let mut ft = DMatrix::zeros(rows, p);
        let mut yt = DVector::zeros(rows);
        let mut vt = DVector::zeros(rows);
        for (r, &i) in kept.iter().enumerate() {
            let w = data.weights.get(i, t);
            total_weight += w;
            ft.view_mut((r * m, 0), (m, p)).copy_from(f);
            for l in 0..m {
                yt[r * m + l] = panel.value(i, t, l);
                vt[r * m + l] = 1.0 / (phi.values()[l] * w);
            }
        }
        obs.push(TimeObs::new(ft, yt, vt)?);
        members.push(kept);
    }
    Ok(Tiling {
        obs,
        members,
        weight_per_time: total_weight / panel.n_times() as f64,
    })
}

/// Diffuse prior expressed in units of one time step's observational
/// information: each state component gets variance
/// `1e6 / (φ_l * weight_per_time)` for the dimension `l` that drives it.
///
/// Scaling every observational variance by a constant scales this prior by
/// the same constant, so the fitted state path is invariant to it.
pub fn scaled_prior(spec: &DlmSpec, phi: &DiagonalPrecision, weight_per_time: f64) -> StatePrior {
    let p = spec.state_dim();
    let info = if weight_per_time > 0.0 { weight_per_time } else { 1.0 };
    let vars = phi.variances();
    let overall = vars.iter().sum::<f64>() / vars.len() as f64;
    let mut diag = DVector::from_element(p, overall);
    for block in spec.blocks() {
        let scale = if block.dims.is_empty() {
            overall
        } else {
            block.dims.iter().map(|&l| vars[l]).sum::<f64>() / block.dims.len() as f64
        };
        for &s in &block.states {
            diag[s] = scale;
        }
    }
    StatePrior {
        mean: DVector::zeros(p),
        cov: DMatrix::from_diagonal(&(diag * (DIFFUSE_SCALE / info))),
    }
}
