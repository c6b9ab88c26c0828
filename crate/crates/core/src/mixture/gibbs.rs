use rayon::prelude::*;

use super::relabel::{default_reference_time, relabel_trace, Relabel};
use super::summary::{summarize_paths, PathSummary};
use super::{
    check_params, log_density_table, membership_posterior, ClusterParams, LogDensityTable, StaticMixtureModel,
    StaticStart, CLUSTER_STREAM_OFFSET,
};
use crate::dlm::{
    backward_sample, forward_filter, scaled_prior, tile_replicates, DiagonalPrecision, DlmSpec, StatePath,
    WeightedObservations, Weights, DEFAULT_EPSILON_W,
};
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;
use crate::random::{categorical_draw, dirichlet_draw, gamma_draw, stream, StreamRng};

const RATE_FLOOR: f64 = 1e-30;

/// Gamma prior on each observational precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self {
            shape: 1e-3,
            rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub phi_prior: GammaPrior,
    /// Ordering used to relabel the draws; chosen from the start when absent.
    pub relabel: Option<Relabel>,
}

impl GibbsSettings {
    pub fn new(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            thin,
            seed,
            phi_prior: GammaPrior::default(),
            relabel: None,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::invalid("iterations must exceed burn-in"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thinning must be at least 1"));
        }
        if !(self.phi_prior.shape > 0.0 && self.phi_prior.rate >= 0.0) {
            return Err(Error::invalid("precision prior needs shape > 0 and rate >= 0"));
        }
        Ok(())
    }

    /// Whether the draw after iteration `iter` (0-based) is stored.
    pub(crate) fn keeps(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in + 1).is_multiple_of(self.thin)
    }

    pub fn kept_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsDraw {
    pub eta: Vec<Vec<f64>>,
    pub z: Vec<usize>,
    pub theta: Vec<StatePath>,
    pub phi: Vec<DiagonalPrecision>,
}

#[derive(Debug, Clone)]
pub struct GibbsTrace {
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub relabel: Relabel,
    pub draws: Vec<GibbsDraw>,
}

impl GibbsTrace {
    pub fn theta_summary(&self, spec: &DlmSpec, j: usize) -> PathSummary {
        let paths: Vec<&StatePath> = self.draws.iter().map(|d| &d.theta[j]).collect();
        summarize_paths(spec, &paths)
    }

    pub fn mean_eta(&self) -> Vec<Vec<f64>> {
        mean_rows(self.draws.iter().map(|d| &d.eta))
    }

    /// Share of draws placing each series in each cluster.
    pub fn z_frequencies(&self) -> Vec<Vec<f64>> {
        let n = self.draws[0].z.len();
        let k = self.draws[0].theta.len();
        let mut freq = vec![vec![0.0; k]; n];
        for d in &self.draws {
            for (i, &z) in d.z.iter().enumerate() {
                freq[i][z] += 1.0;
            }
        }
        let total = self.draws.len() as f64;
        freq.iter_mut().flatten().for_each(|v| *v /= total);
        freq
    }

    pub fn modal_z(&self) -> Vec<usize> {
        self.z_frequencies().iter().map(|f| super::argmax(f)).collect()
    }

    pub fn mean_phi(&self, j: usize) -> Vec<f64> {
        let m = self.draws[0].phi[j].len();
        let mut out = vec![0.0; m];
        for d in &self.draws {
            for (o, v) in out.iter_mut().zip(d.phi[j].values()) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= self.draws.len() as f64);
        out
    }
}

pub(crate) fn mean_rows<'a>(rows: impl Iterator<Item = &'a Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    let mut acc: Option<Vec<Vec<f64>>> = None;
    let mut count = 0.0;
    for r in rows {
        count += 1.0;
        match &mut acc {
            None => acc = Some(r.clone()),
            Some(a) => a.iter_mut().flatten().zip(r.iter().flatten()).for_each(|(x, y)| *x += y),
        }
    }
    let mut out = acc.unwrap_or_default();
    out.iter_mut().flatten().for_each(|v| *v /= count);
    out
}

/// Cluster labels, either fixed per series or varying over time.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Labels<'a> {
    Static(&'a [usize]),
    Dynamic(&'a [Vec<usize>]),
}

impl Labels<'_> {
    #[inline]
    fn get(&self, i: usize, t: usize) -> usize {
        match self {
            Labels::Static(z) => z[i],
            Labels::Dynamic(z) => z[i][t],
        }
    }
}

/// One categorical draw of each `Z_i` from its guarded full conditional.
pub fn gibbs_step_z(table: &LogDensityTable, eta: &[Vec<f64>], rngs: &mut [StreamRng]) -> Result<Vec<usize>> {
    rngs.par_iter_mut()
        .enumerate()
        .map(|(i, rng)| {
            let post = membership_posterior(table, &eta[i], i)?;
            Ok(categorical_draw(rng, &post))
        })
        .collect()
}

/// `η_i ~ Dirichlet(c0 + e_{Z_i})`.
pub fn gibbs_step_eta(z: &[usize], c0: &[f64], rngs: &mut [StreamRng]) -> Vec<Vec<f64>> {
    rngs.par_iter_mut()
        .zip(z)
        .map(|(rng, &zi)| {
            let mut alpha = c0.to_vec();
            alpha[zi] += 1.0;
            dirichlet_draw(rng, &alpha)
        })
        .collect()
}

pub(crate) fn draw_phi(
    spec: &DlmSpec,
    j: usize,
    panel: &TimeSeriesPanel,
    labels: Labels<'_>,
    theta: &StatePath,
    prior: &GammaPrior,
    rng: &mut StreamRng,
) -> DiagonalPrecision {
    let m = panel.n_dims();
    let mut count = 0usize;
    let mut ssr = vec![0.0; m];
    for t in 0..panel.n_times() {
        let mean = theta.obs_mean(spec, t);
        for i in 0..panel.n_series() {
            if labels.get(i, t) != j {
                continue;
            }
            count += 1;
            let y = panel.obs(i, t);
            for l in 0..m {
                ssr[l] += (y[l] - mean[l]).powi(2);
            }
        }
    }
    let phi = (0..m)
        .map(|l| {
            let shape = prior.shape + count as f64 / 2.0;
            let mut rate = prior.rate + ssr[l] / 2.0;
            if count > 0 && !(rate > RATE_FLOOR) {
                log::warn!("cluster {j}: zero residual sum of squares in dimension {l}, precision rate floored");
                rate = RATE_FLOOR;
            } else if count == 0 {
                rate = rate.max(RATE_FLOOR);
            }
            gamma_draw(rng, shape, rate)
        })
        .collect();
    DiagonalPrecision::new(phi).expect("positive finite draws")
}

/// `φ_jl ~ Gamma(a0 + n_j T / 2, b0 + SSR_jl / 2)`; clusters without members
/// draw from the prior.
pub fn gibbs_step_phi(
    specs: &[DlmSpec],
    panel: &TimeSeriesPanel,
    z: &[usize],
    theta: &[StatePath],
    prior: &GammaPrior,
    rngs: &mut [StreamRng],
) -> Vec<DiagonalPrecision> {
    rngs.par_iter_mut()
        .enumerate()
        .map(|(j, rng)| draw_phi(&specs[j], j, panel, Labels::Static(z), &theta[j], prior, rng))
        .collect()
}

pub(crate) fn draw_theta(
    spec: &DlmSpec,
    j: usize,
    panel: &TimeSeriesPanel,
    labels: Labels<'_>,
    phi: &DiagonalPrecision,
    rng: &mut StreamRng,
) -> Result<StatePath> {
    let (n, t_len) = (panel.n_series(), panel.n_times());
    let mut w = Vec::with_capacity(n * t_len);
    for i in 0..n {
        for t in 0..t_len {
            w.push(if labels.get(i, t) == j { 1.0 } else { 0.0 });
        }
    }
    let data = WeightedObservations::new(panel, Weights::per_time(n, t_len, w)?, DEFAULT_EPSILON_W)?;
    let tiling = tile_replicates(spec, &data, phi)?;
    let prior = scaled_prior(spec, phi, tiling.weight_per_time);
    let fo = forward_filter(spec, &tiling.obs, &prior)?;
    backward_sample(spec, &fo, rng)
}

/// Forward filtering and backward sampling of each cluster's states over
/// the tiled replicates of its members.
pub fn gibbs_step_theta(
    specs: &[DlmSpec],
    panel: &TimeSeriesPanel,
    z: &[usize],
    phi: &[DiagonalPrecision],
    rngs: &mut [StreamRng],
) -> Result<Vec<StatePath>> {
    rngs.par_iter_mut()
        .enumerate()
        .map(|(j, rng)| draw_theta(&specs[j], j, panel, Labels::Static(z), &phi[j], rng))
        .collect()
}

/// Gibbs sampler cycling `Z → η → φ → θ`; draws are relabeled before return.
pub fn run_gibbs(model: &StaticMixtureModel, start: &StaticStart, settings: &GibbsSettings) -> Result<GibbsTrace> {
    settings.validate()?;
    let (specs, panel) = (&model.specs, &model.panel);
    check_params(specs, panel, &start.params)?;
    if start.eta.len() != panel.n_series() || start.eta.iter().any(|r| r.len() != model.k()) {
        return Err(Error::invalid("starting memberships must be n x k"));
    }
    let k = model.k();
    let mut series_rngs: Vec<StreamRng> = (0..panel.n_series() as u64).map(|i| stream(settings.seed, i)).collect();
    let mut cluster_rngs: Vec<StreamRng> =
        (0..k as u64).map(|j| stream(settings.seed, CLUSTER_STREAM_OFFSET + j)).collect();
    let mut eta = start.eta.clone();
    let mut theta: Vec<StatePath> = start.params.iter().map(|p| p.theta.clone()).collect();
    let mut phi: Vec<DiagonalPrecision> = start.params.iter().map(|p| p.phi.clone()).collect();
    let mut draws = Vec::with_capacity(settings.kept_draws());
    for iter in 0..settings.iterations {
        let params: Vec<ClusterParams> = theta
            .iter()
            .zip(&phi)
            .map(|(t, p)| ClusterParams {
                theta: t.clone(),
                phi: p.clone(),
            })
            .collect();
        let table = log_density_table(specs, panel, &params)?;
        let z = gibbs_step_z(&table, &eta, &mut series_rngs)?;
        eta = gibbs_step_eta(&z, &model.c0, &mut series_rngs);
        phi = gibbs_step_phi(specs, panel, &z, &theta, &settings.phi_prior, &mut cluster_rngs);
        theta = gibbs_step_theta(specs, panel, &z, &phi, &mut cluster_rngs)?;
        if settings.keeps(iter) {
            draws.push(GibbsDraw {
                eta: eta.clone(),
                z,
                theta: theta.clone(),
                phi: phi.clone(),
            });
        }
    }
    let relabel = settings.relabel.unwrap_or_else(|| {
        let paths: Vec<&StatePath> = start.params.iter().map(|p| &p.theta).collect();
        Relabel {
            t_ref: default_reference_time(specs, &paths, 0),
            coord: 0,
        }
    });
    let mut trace = GibbsTrace {
        seed: settings.seed,
        iterations: settings.iterations,
        burn_in: settings.burn_in,
        thin: settings.thin,
        relabel,
        draws,
    };
    relabel_trace(specs, &mut trace, &relabel)?;
    Ok(trace)
}
