//! Dynamic mixtures of DLMs: memberships vary over time and follow an
//! evolutional Dirichlet process per series.

use rand::Rng;
use rayon::prelude::*;

use crate::dlm::{DiagonalPrecision, DlmSpec, FitSettings, StatePath, Weights, DEFAULT_EPSILON_W};
use crate::edp::{
    default_delta_grid, delta_grid_optimize, delta_marginal_loglik, delta_sir_draw, edp_backward_mode,
    edp_backward_sample, edp_forward_filter, EdpState,
};
use crate::error::{Error, Result};
use crate::mixture::relabel::{apply, permute};
use crate::mixture::{default_reference_time, relabel_order, Relabel};
use crate::mixture::{
    argmax, check_params, check_specs, draw_phi, draw_theta, fit_clusters, log_density_table, mean_rows,
    summarize_paths, ClusterParams, GammaPrior, Labels, LogDensityTable, PathSummary, CLUSTER_STREAM_OFFSET,
};
use crate::panel::TimeSeriesPanel;
use crate::random::{categorical_draw, categorical_inverse, stream, StreamRng};

#[derive(Debug, Clone)]
pub struct DynamicMixtureModel {
    pub specs: Vec<DlmSpec>,
    pub panel: TimeSeriesPanel,
    /// Dirichlet prior of each series' initial weights.
    pub c0: Vec<Vec<f64>>,
    /// Weight discount of each series.
    pub delta: Vec<f64>,
}

impl DynamicMixtureModel {
    pub fn new(specs: Vec<DlmSpec>, panel: TimeSeriesPanel, c0: Vec<Vec<f64>>, delta: Vec<f64>) -> Result<Self> {
        check_specs(&specs, &panel)?;
        let (n, k) = (panel.n_series(), specs.len());
        if c0.len() != n || c0.iter().any(|c| c.len() != k || c.iter().any(|v| !(*v > 0.0 && v.is_finite()))) {
            return Err(Error::invalid("c0 needs n rows of k positive finite entries"));
        }
        if delta.len() != n || delta.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return Err(Error::invalid("each series needs a weight discount in (0, 1]"));
        }
        Ok(Self { specs, panel, c0, delta })
    }

    /// Uniform prior and a common discount.
    pub fn with_uniform_prior(specs: Vec<DlmSpec>, panel: TimeSeriesPanel, delta: f64) -> Result<Self> {
        let (n, k) = (panel.n_series(), specs.len());
        Self::new(specs, panel, vec![vec![1.0; k]; n], vec![delta; n])
    }

    pub fn k(&self) -> usize {
        self.specs.len()
    }
}

#[derive(Debug, Clone)]
pub struct DynamicStart {
    pub params: Vec<ClusterParams>,
    /// `n × T × k` weights.
    pub eta: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicMembership {
    pub eta: Vec<Vec<Vec<f64>>>,
    pub z: Vec<Vec<usize>>,
    pub edp_states: Vec<EdpState>,
}

/// `P(Z_it = j | ·)` for a single time, normalized after a max-log shift.
pub fn membership_posterior_t(table: &LogDensityTable, eta_it: &[f64], i: usize, t: usize) -> Result<Vec<f64>> {
    let k = table.k();
    if eta_it.len() != k || eta_it.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::invalid("membership vector must have k non-negative entries"));
    }
    let logs: Vec<f64> = (0..k)
        .map(|j| {
            if eta_it[j] == 0.0 {
                f64::NEG_INFINITY
            } else {
                eta_it[j].ln() + table.get(i, j, t)
            }
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut terms: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = terms.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegeneratePosterior { series: i });
    }
    terms.iter_mut().for_each(|v| *v /= total);
    Ok(terms)
}

fn check_start(model: &DynamicMixtureModel, params: &[ClusterParams], eta: &[Vec<Vec<f64>>]) -> Result<()> {
    check_params(&model.specs, &model.panel, params)?;
    let (t_len, k) = (model.panel.n_times(), model.k());
    if eta.len() != model.panel.n_series() || eta.iter().any(|r| r.len() != t_len || r.iter().any(|e| e.len() != k)) {
        return Err(Error::invalid("starting weights must be n x T x k"));
    }
    Ok(())
}

fn pack(theta: &[StatePath], phi: &[DiagonalPrecision]) -> Vec<ClusterParams> {
    theta
        .iter()
        .zip(phi)
        .map(|(t, p)| ClusterParams {
            theta: t.clone(),
            phi: p.clone(),
        })
        .collect()
}

fn modal_path(eta_i: &[Vec<f64>]) -> Vec<usize> {
    eta_i.iter().map(|e| argmax(e)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGibbsSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub phi_prior: GammaPrior,
    /// Draw each series' discount by importance resampling every iteration.
    pub estimate_delta: bool,
    pub sir_proposals: usize,
    pub relabel: Option<Relabel>,
}

impl DynamicGibbsSettings {
    pub fn new(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            thin,
            seed,
            phi_prior: GammaPrior::default(),
            estimate_delta: false,
            sir_proposals: 200,
            relabel: None,
        }
    }

    pub fn kept_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicDraw {
    pub eta: Vec<Vec<Vec<f64>>>,
    pub z: Vec<Vec<usize>>,
    pub theta: Vec<StatePath>,
    pub phi: Vec<DiagonalPrecision>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DynamicTrace {
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub relabel: Relabel,
    pub draws: Vec<DynamicDraw>,
}

impl DynamicTrace {
    pub fn theta_summary(&self, spec: &DlmSpec, j: usize) -> PathSummary {
        let paths: Vec<&StatePath> = self.draws.iter().map(|d| &d.theta[j]).collect();
        summarize_paths(spec, &paths)
    }

    /// Posterior mean weights, `n × T × k`.
    pub fn mean_eta(&self) -> Vec<Vec<Vec<f64>>> {
        let n = self.draws[0].eta.len();
        (0..n).map(|i| mean_rows(self.draws.iter().map(|d| &d.eta[i]))).collect()
    }

    /// Share of draws with `Z_it = j`, `n × T × k`.
    pub fn z_frequencies(&self) -> Vec<Vec<Vec<f64>>> {
        let d0 = &self.draws[0];
        let (n, t_len, k) = (d0.z.len(), d0.z[0].len(), d0.theta.len());
        let mut freq = vec![vec![vec![0.0; k]; t_len]; n];
        for d in &self.draws {
            for i in 0..n {
                for t in 0..t_len {
                    freq[i][t][d.z[i][t]] += 1.0;
                }
            }
        }
        let total = self.draws.len() as f64;
        freq.iter_mut().flatten().flatten().for_each(|v| *v /= total);
        freq
    }

    pub fn modal_z(&self) -> Vec<Vec<usize>> {
        self.z_frequencies().iter().map(|f| modal_path(f)).collect()
    }

    pub fn mean_delta(&self) -> Vec<f64> {
        let n = self.draws[0].delta.len();
        (0..n)
            .map(|i| self.draws.iter().map(|d| d.delta[i]).sum::<f64>() / self.draws.len() as f64)
            .collect()
    }

    pub fn mean_phi(&self, j: usize) -> Vec<f64> {
        let m = self.draws[0].phi[j].len();
        let mut out = vec![0.0; m];
        for d in &self.draws {
            out.iter_mut().zip(d.phi[j].values()).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|v| *v /= self.draws.len() as f64);
        out
    }
}

/// Gibbs sampler for the dynamic mixture. Each iteration draws every
/// `Z_it`, optionally each `δ_i`, each weight path by forward filtering and
/// backward sampling, then `φ` and `θ` per cluster over the members
/// present at each time.
pub fn run_gibbs_dynamic(
    model: &DynamicMixtureModel,
    start: &DynamicStart,
    settings: &DynamicGibbsSettings,
) -> Result<DynamicTrace> {
    if settings.iterations <= settings.burn_in || settings.thin == 0 {
        return Err(Error::invalid("need iterations > burn-in and thinning >= 1"));
    }
    if settings.estimate_delta && settings.sir_proposals == 0 {
        return Err(Error::invalid("SIR needs at least one proposal"));
    }
    check_start(model, &start.params, &start.eta)?;
    let (specs, panel) = (&model.specs, &model.panel);
    let (n, t_len, k) = (panel.n_series(), panel.n_times(), model.k());
    let mut series_rngs: Vec<StreamRng> = (0..n as u64).map(|i| stream(settings.seed, i)).collect();
    let mut cluster_rngs: Vec<StreamRng> =
        (0..k as u64).map(|j| stream(settings.seed, CLUSTER_STREAM_OFFSET + j)).collect();
    let mut eta = start.eta.clone();
    let mut delta = model.delta.clone();
    let mut theta: Vec<StatePath> = start.params.iter().map(|p| p.theta.clone()).collect();
    let mut phi: Vec<DiagonalPrecision> = start.params.iter().map(|p| p.phi.clone()).collect();
    let mut draws = Vec::with_capacity(settings.kept_draws());
    for iter in 0..settings.iterations {
        let table = log_density_table(specs, panel, &pack(&theta, &phi))?;
        let updated: Vec<(Vec<usize>, f64, Vec<Vec<f64>>)> = series_rngs
            .par_iter_mut()
            .enumerate()
            .map(|(i, rng)| {
                let z = (0..t_len)
                    .map(|t| Ok(categorical_draw(rng, &membership_posterior_t(&table, &eta[i][t], i, t)?)))
                    .collect::<Result<Vec<usize>>>()?;
                let d = if settings.estimate_delta {
                    delta_sir_draw(&model.c0[i], &z, settings.sir_proposals, rng)?
                } else {
                    delta[i]
                };
                let state = edp_forward_filter(&model.c0[i], d, &z)?;
                let path = edp_backward_sample(&state, rng);
                Ok((z, d, path.eta))
            })
            .collect::<Result<_>>()?;
        let mut z = Vec::with_capacity(n);
        for (i, (zi, di, ei)) in updated.into_iter().enumerate() {
            z.push(zi);
            delta[i] = di;
            eta[i] = ei;
        }
        let labels = Labels::Dynamic(&z);
        phi = cluster_rngs
            .par_iter_mut()
            .enumerate()
            .map(|(j, rng)| draw_phi(&specs[j], j, panel, labels, &theta[j], &settings.phi_prior, rng))
            .collect();
        theta = cluster_rngs
            .par_iter_mut()
            .enumerate()
            .map(|(j, rng)| draw_theta(&specs[j], j, panel, labels, &phi[j], rng))
            .collect::<Result<_>>()?;
        if iter >= settings.burn_in && (iter - settings.burn_in + 1).is_multiple_of(settings.thin) {
            draws.push(DynamicDraw {
                eta: eta.clone(),
                z,
                theta: theta.clone(),
                phi: phi.clone(),
                delta: delta.clone(),
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
    for draw in &mut draws {
        let paths: Vec<&StatePath> = draw.theta.iter().collect();
        let perm = relabel_order(specs, &paths, &relabel)?;
        draw.theta = permute(&draw.theta, &perm);
        apply(
            &perm,
            &mut draw.phi,
            draw.eta.iter_mut().flatten(),
            draw.z.iter_mut().flatten(),
        );
    }
    Ok(DynamicTrace {
        seed: settings.seed,
        iterations: settings.iterations,
        burn_in: settings.burn_in,
        thin: settings.thin,
        relabel,
        draws,
    })
}

/// How the weight discounts are handled by the point estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaUpdate {
    Fixed,
    /// Grid maximization of the marginal likelihood of the simulated labels.
    Grid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemSettings {
    /// Monte Carlo size per series and iteration.
    pub m: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub inner: FitSettings,
    pub seed: u64,
    pub delta_update: DeltaUpdate,
    pub epsilon: f64,
}

impl SemSettings {
    pub fn new(seed: u64) -> Self {
        Self {
            m: 10,
            tol: 1e-6,
            max_iter: 100,
            inner: FitSettings::default(),
            seed,
            delta_update: DeltaUpdate::Fixed,
            epsilon: DEFAULT_EPSILON_W,
        }
    }

    pub fn estimating_delta(mut self) -> Self {
        self.delta_update = DeltaUpdate::Grid(default_delta_grid());
        self
    }
}

#[derive(Debug, Clone)]
pub struct DynamicEstimate {
    pub membership: DynamicMembership,
    pub params: Vec<ClusterParams>,
    pub delta: Vec<f64>,
    /// Relative change of the cluster parameters at each iteration.
    pub change_path: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub cluster_log_likelihood: Vec<f64>,
    /// Final weighted DLM objective of each cluster.
    pub cluster_objective: Vec<f64>,
}

fn relative_change(old: &[ClusterParams], new: &[ClusterParams]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, b) in old.iter().zip(new) {
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in a.theta.theta.iter().zip(&b.theta.theta) {
            num += (x - y).norm_squared();
            den += x.norm_squared();
        }
        worst = worst.max(num.sqrt() / den.sqrt().max(1e-12));
        for (x, y) in a.phi.values().iter().zip(b.phi.values()) {
            worst = worst.max((x - y).abs() / x.abs());
        }
    }
    worst
}

fn per_time_weights(eta: &[Vec<Vec<f64>>], k: usize) -> Result<Vec<Weights>> {
    let (n, t_len) = (eta.len(), eta[0].len());
    (0..k)
        .map(|j| {
            let w = eta.iter().flat_map(|row| row.iter().map(move |e| e[j])).collect();
            Weights::per_time(n, t_len, w)
        })
        .collect()
}

fn finish(
    model: &DynamicMixtureModel,
    eta: Vec<Vec<Vec<f64>>>,
    delta: &[f64],
) -> Result<DynamicMembership> {
    let z: Vec<Vec<usize>> = eta.iter().map(|e| modal_path(e)).collect();
    let edp_states = z
        .iter()
        .enumerate()
        .map(|(i, zi)| edp_forward_filter(&model.c0[i], delta[i], zi))
        .collect::<Result<_>>()?;
    Ok(DynamicMembership { eta, z, edp_states })
}

/// Stochastic EM. Per series, `M` label paths are simulated from the
/// single-time conditionals (with common random numbers across
/// iterations); the weight path is the renormalized average of
/// the backward-mode paths of those labels. Each cluster is then refit with
/// per-time weights equal to the averaged memberships.
pub fn sem_estimate(model: &DynamicMixtureModel, start: &DynamicStart, settings: &SemSettings) -> Result<DynamicEstimate> {
    if settings.m == 0 || settings.max_iter == 0 || !(settings.tol > 0.0) {
        return Err(Error::invalid("SEM needs M >= 1, max_iter >= 1 and tol > 0"));
    }
    if let DeltaUpdate::Grid(g) = &settings.delta_update {
        if g.is_empty() || g.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return Err(Error::invalid("discount grid must be a non-empty subset of (0, 1]"));
        }
    }
    check_start(model, &start.params, &start.eta)?;
    let (specs, panel) = (&model.specs, &model.panel);
    let (t_len, k) = (panel.n_times(), model.k());
    let n = panel.n_series();
    // the same uniforms drive the label simulation at every iteration, so
    // the iteration settles on a fixed point instead of moving within its
    // Monte Carlo noise
    let uniforms: Vec<Vec<Vec<f64>>> = (0..n as u64)
        .map(|i| {
            let mut rng = stream(settings.seed, i);
            (0..settings.m).map(|_| (0..t_len).map(|_| rng.random::<f64>()).collect()).collect()
        })
        .collect();
    let mut params = start.params.clone();
    let mut eta = start.eta.clone();
    let mut delta = model.delta.clone();
    let mut change_path = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut loglik = vec![0.0; k];
    let mut objective = vec![0.0; k];
    while iterations < settings.max_iter {
        iterations += 1;
        let table = log_density_table(specs, panel, &params)?;
        let updated: Vec<(f64, Vec<Vec<f64>>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let probs = (0..t_len)
                    .map(|t| membership_posterior_t(&table, &eta[i][t], i, t))
                    .collect::<Result<Vec<_>>>()?;
                let paths: Vec<Vec<usize>> = uniforms[i]
                    .iter()
                    .map(|u| probs.iter().zip(u).map(|(p, &u)| categorical_inverse(p, u)).collect())
                    .collect();
                let d = match &settings.delta_update {
                    DeltaUpdate::Fixed => delta[i],
                    DeltaUpdate::Grid(grid) => grid_joint(&model.c0[i], &paths, grid)?,
                };
                let mut avg = vec![vec![0.0; k]; t_len];
                for z in &paths {
                    let mode = edp_backward_mode(&edp_forward_filter(&model.c0[i], d, z)?);
                    for (a, e) in avg.iter_mut().zip(&mode.eta) {
                        a.iter_mut().zip(e).for_each(|(x, y)| *x += y);
                    }
                }
                for row in &mut avg {
                    let total: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= total);
                }
                Ok((d, avg))
            })
            .collect::<Result<_>>()?;
        for (i, (d, e)) in updated.into_iter().enumerate() {
            delta[i] = d;
            eta[i] = e;
        }
        let fits = fit_clusters(specs, panel, per_time_weights(&eta, k)?, &params, &settings.inner, settings.epsilon)?;
        loglik = fits.iter().map(|f| f.log_likelihood).collect();
        objective = fits.iter().map(|f| f.final_objective()).collect();
        let new: Vec<ClusterParams> = fits
            .into_iter()
            .map(|f| ClusterParams {
                theta: f.path,
                phi: f.phi,
            })
            .collect();
        let change = relative_change(&params, &new);
        params = new;
        change_path.push(change);
        if change < settings.tol {
            converged = true;
            break;
        }
    }
    Ok(DynamicEstimate {
        membership: finish(model, eta, &delta)?,
        params,
        delta,
        change_path,
        iterations,
        converged,
        cluster_log_likelihood: loglik,
        cluster_objective: objective,
    })
}

/// Grid maximizer of the summed marginal log-likelihood over the simulated
/// label paths; ties go to the larger value.
fn grid_joint(c0: &[f64], paths: &[Vec<usize>], grid: &[f64]) -> Result<f64> {
    if paths.len() == 1 {
        return delta_grid_optimize(c0, &paths[0], grid);
    }
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &d in grid {
        let mut v = 0.0;
        for z in paths {
            v += delta_marginal_loglik(c0, d, z)?;
        }
        let tie = (v - best.1).abs() <= 1e-12 * v.abs().max(1.0);
        if v > best.1 || (tie && d > best.0) {
            best = (d, v);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndependentSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub inner: FitSettings,
    pub epsilon: f64,
}

impl Default for IndependentSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100,
            inner: FitSettings::default(),
            epsilon: DEFAULT_EPSILON_W,
        }
    }
}

/// Single-time memberships `η_itj ∝ N_m(y_it; F_j θ_jt, V_j)` with no
/// coupling over time.
pub fn independent_weights(table: &LogDensityTable) -> Result<Vec<Vec<Vec<f64>>>> {
    let k = table.k();
    let uniform = vec![1.0 / k as f64; k];
    (0..table.n_series())
        .map(|i| {
            (0..table.n_times())
                .map(|t| membership_posterior_t(table, &uniform, i, t))
                .collect()
        })
        .collect()
}

/// Alternates the time-independent memberships with weighted cluster fits.
pub fn independent_weights_estimate(
    model: &DynamicMixtureModel,
    start: &[ClusterParams],
    settings: &IndependentSettings,
) -> Result<DynamicEstimate> {
    if settings.max_iter == 0 || !(settings.tol > 0.0) {
        return Err(Error::invalid("need max_iter >= 1 and tol > 0"));
    }
    let (specs, panel) = (&model.specs, &model.panel);
    check_params(specs, panel, start)?;
    let k = model.k();
    let mut params = start.to_vec();
    let mut change_path = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut loglik = vec![0.0; k];
    let mut objective = vec![0.0; k];
    let mut eta = independent_weights(&log_density_table(specs, panel, &params)?)?;
    while iterations < settings.max_iter {
        iterations += 1;
        let fits = fit_clusters(specs, panel, per_time_weights(&eta, k)?, &params, &settings.inner, settings.epsilon)?;
        loglik = fits.iter().map(|f| f.log_likelihood).collect();
        objective = fits.iter().map(|f| f.final_objective()).collect();
        let new: Vec<ClusterParams> = fits
            .into_iter()
            .map(|f| ClusterParams {
                theta: f.path,
                phi: f.phi,
            })
            .collect();
        let change = relative_change(&params, &new);
        params = new;
        eta = independent_weights(&log_density_table(specs, panel, &params)?)?;
        change_path.push(change);
        if change < settings.tol {
            converged = true;
            break;
        }
    }
    let delta = model.delta.clone();
    Ok(DynamicEstimate {
        membership: finish(model, eta, &delta)?,
        params,
        delta,
        change_path,
        iterations,
        converged,
        cluster_log_likelihood: loglik,
        cluster_objective: objective,
    })
}

/// Relabels a point estimate in place; returns the permutation used.
pub fn relabel_dynamic_estimate(
    specs: &[DlmSpec],
    est: &mut DynamicEstimate,
    relabel: &Relabel,
) -> Result<Vec<usize>> {
    let paths: Vec<&StatePath> = est.params.iter().map(|p| &p.theta).collect();
    let perm = relabel_order(specs, &paths, relabel)?;
    apply(
        &perm,
        &mut est.params,
        est.membership.eta.iter_mut().flatten(),
        est.membership.z.iter_mut().flatten(),
    );
    if perm.iter().enumerate().any(|(a, &b)| a != b) {
        for s in &mut est.membership.edp_states {
            s.c0 = permute(&s.c0, &perm);
            for c in &mut s.c {
                *c = permute(c, &perm);
            }
        }
    }
    Ok(perm)
}
