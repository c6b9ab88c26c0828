//! Orchestration of a configured fit and serialization of its results.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{Algorithm, DeltaMode, OneOrMany, RunConfig};
use crate::dlm::{DlmSpec, FitSettings, StatePath};
use crate::dynamic::{
    independent_weights_estimate, relabel_dynamic_estimate, run_gibbs_dynamic, sem_estimate, DeltaUpdate,
    DynamicEstimate, DynamicGibbsSettings, DynamicMixtureModel, DynamicTrace, IndependentSettings, SemSettings,
};
use crate::edp::default_delta_grid;
use crate::error::{Error, Result};
use crate::init::{initialize_delta, initialize_dynamic, initialize_static};
use crate::mixture::{
    default_reference_time, em_estimate, log_density_table, relabel_estimate, run_gibbs, ClusterParams,
    EmSettings, GammaPrior, GibbsSettings, GibbsTrace, LogDensityTable, PathSummary, Relabel, StaticEstimate,
    StaticMixtureModel,
};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone)]
pub enum Estimation {
    StaticEm(StaticEstimate),
    StaticGibbs(GibbsTrace),
    /// Stochastic EM or independent weights.
    Dynamic(DynamicEstimate),
    DynamicGibbs(DynamicTrace),
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub config: RunConfig,
    pub specs: Vec<DlmSpec>,
    pub panel: TimeSeriesPanel,
    pub estimation: Estimation,
    /// Weight discounts the dynamic estimators started from.
    pub initial_delta: Option<Vec<f64>>,
    pub relabel: Relabel,
    pub init_candidates: Vec<usize>,
    pub init_fit_count: usize,
    pub wall_time_secs: f64,
}

impl EstimationResult {
    pub fn k(&self) -> usize {
        self.specs.len()
    }

    /// Modal cluster per series (static) or per series and time (dynamic).
    pub fn modal_static(&self) -> Option<Vec<usize>> {
        match &self.estimation {
            Estimation::StaticEm(e) => Some(e.membership.z.clone()),
            Estimation::StaticGibbs(tr) => Some(tr.modal_z()),
            _ => None,
        }
    }

    pub fn modal_dynamic(&self) -> Option<Vec<Vec<usize>>> {
        match &self.estimation {
            Estimation::Dynamic(e) => Some(e.membership.z.clone()),
            Estimation::DynamicGibbs(tr) => Some(tr.modal_z()),
            _ => None,
        }
    }

    pub fn theta_summary(&self, j: usize) -> PathSummary {
        let spec = &self.specs[j];
        match &self.estimation {
            Estimation::StaticEm(e) => PathSummary::from_point(spec, &e.params[j].theta),
            Estimation::Dynamic(e) => PathSummary::from_point(spec, &e.params[j].theta),
            Estimation::StaticGibbs(tr) => tr.theta_summary(spec, j),
            Estimation::DynamicGibbs(tr) => tr.theta_summary(spec, j),
        }
    }

    pub fn phi(&self, j: usize) -> Vec<f64> {
        match &self.estimation {
            Estimation::StaticEm(e) => e.params[j].phi.values().to_vec(),
            Estimation::Dynamic(e) => e.params[j].phi.values().to_vec(),
            Estimation::StaticGibbs(tr) => tr.mean_phi(j),
            Estimation::DynamicGibbs(tr) => tr.mean_phi(j),
        }
    }

    pub fn iterations(&self) -> usize {
        match &self.estimation {
            Estimation::StaticEm(e) => e.iterations,
            Estimation::Dynamic(e) => e.iterations,
            Estimation::StaticGibbs(tr) => tr.iterations,
            Estimation::DynamicGibbs(tr) => tr.iterations,
        }
    }

    /// Convergence flag of the point estimators.
    pub fn converged(&self) -> Option<bool> {
        match &self.estimation {
            Estimation::StaticEm(e) => Some(e.converged),
            Estimation::Dynamic(e) => Some(e.converged),
            _ => None,
        }
    }

    /// Mixture log-likelihood at the point estimate, or its average over
    /// the kept draws.
    pub fn log_likelihood(&self) -> Result<f64> {
        let (specs, panel) = (&self.specs, &self.panel);
        match &self.estimation {
            Estimation::StaticEm(e) => {
                static_mixture_loglik(&log_density_table(specs, panel, &e.params)?, &e.membership.eta)
            }
            Estimation::Dynamic(e) => {
                dynamic_mixture_loglik(&log_density_table(specs, panel, &e.params)?, &e.membership.eta)
            }
            Estimation::StaticGibbs(tr) => Ok(mean(&static_draw_logliks(specs, panel, tr)?)),
            Estimation::DynamicGibbs(tr) => Ok(mean(&dynamic_draw_logliks(specs, panel, tr)?)),
        }
    }

    /// Final EM objective; `None` for the other algorithms.
    pub fn final_objective(&self) -> Option<f64> {
        match &self.estimation {
            Estimation::StaticEm(e) => Some(e.final_q()),
            _ => None,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `Σ_i ln Σ_j η_ij Π_t N(y_it; F_j θ_jt, V_j)`.
pub fn static_mixture_loglik(table: &LogDensityTable, eta: &[Vec<f64>]) -> Result<f64> {
    check_eta_shape(table, eta.len(), eta.iter().all(|e| e.len() == table.k()))?;
    Ok((0..table.n_series())
        .map(|i| log_sum_exp((0..table.k()).map(|j| eta[i][j].ln() + table.series(i, j).iter().sum::<f64>())))
        .sum())
}

/// `Σ_i Σ_t ln Σ_j η_itj N(y_it; F_j θ_jt, V_j)`.
pub fn dynamic_mixture_loglik(table: &LogDensityTable, eta: &[Vec<Vec<f64>>]) -> Result<f64> {
    let ok = eta
        .iter()
        .all(|e| e.len() == table.n_times() && e.iter().all(|r| r.len() == table.k()));
    check_eta_shape(table, eta.len(), ok)?;
    Ok((0..table.n_series())
        .flat_map(|i| (0..table.n_times()).map(move |t| (i, t)))
        .map(|(i, t)| log_sum_exp((0..table.k()).map(|j| eta[i][t][j].ln() + table.get(i, j, t))))
        .sum())
}

fn check_eta_shape(table: &LogDensityTable, n: usize, ok: bool) -> Result<()> {
    if n != table.n_series() || !ok {
        return Err(Error::invalid("membership weights do not match the density table"));
    }
    Ok(())
}

fn draw_params(theta: &[StatePath], phi: &[crate::dlm::DiagonalPrecision]) -> Vec<ClusterParams> {
    theta
        .iter()
        .zip(phi)
        .map(|(theta, phi)| ClusterParams {
            theta: theta.clone(),
            phi: phi.clone(),
        })
        .collect()
}

fn static_draw_logliks(specs: &[DlmSpec], panel: &TimeSeriesPanel, tr: &GibbsTrace) -> Result<Vec<f64>> {
    tr.draws
        .iter()
        .map(|d| static_mixture_loglik(&log_density_table(specs, panel, &draw_params(&d.theta, &d.phi))?, &d.eta))
        .collect()
}

fn dynamic_draw_logliks(specs: &[DlmSpec], panel: &TimeSeriesPanel, tr: &DynamicTrace) -> Result<Vec<f64>> {
    tr.draws
        .iter()
        .map(|d| dynamic_mixture_loglik(&log_density_table(specs, panel, &draw_params(&d.theta, &d.phi))?, &d.eta))
        .collect()
}

/// Checks the parts of the configuration that depend on the panel.
fn check_against_panel(config: &RunConfig, panel: &TimeSeriesPanel) -> Result<()> {
    let k = config.k();
    if panel.n_series() < k {
        return Err(Error::Config(format!("{k} clusters but only {} series", panel.n_series())));
    }
    if panel.n_times() < 2 {
        return Err(Error::Data("at least two time points are required".into()));
    }
    if let Some(t) = config.relabel_time {
        if t > panel.n_times() {
            return Err(Error::Config(format!("relabel_time {t} exceeds T = {}", panel.n_times())));
        }
    }
    if config.relabel_coord > panel.n_dims() {
        return Err(Error::Config(format!(
            "relabel_coord {} exceeds the {} observation dimensions",
            config.relabel_coord,
            panel.n_dims()
        )));
    }
    if let (Some(OneOrMany::Many(d)), true) = (&config.delta, config.algorithm.is_dynamic()) {
        if d.len() != panel.n_series() {
            return Err(Error::Config(format!("delta has {} values for {} series", d.len(), panel.n_series())));
        }
    }
    Ok(())
}

fn point_relabel(config: &RunConfig, specs: &[DlmSpec], params: &[ClusterParams]) -> Relabel {
    let coord = config.relabel_coord - 1;
    let t_ref = match config.relabel_time {
        Some(t) => t - 1,
        None => {
            let paths: Vec<&StatePath> = params.iter().map(|p| &p.theta).collect();
            default_reference_time(specs, &paths, coord)
        }
    };
    Relabel { t_ref, coord }
}

fn fixed_relabel(config: &RunConfig) -> Option<Relabel> {
    config.relabel_time.map(|t| Relabel {
        t_ref: t - 1,
        coord: config.relabel_coord - 1,
    })
}

/// Initializes and runs the configured estimator, then relabels.
pub fn run(config: &RunConfig, panel: &TimeSeriesPanel) -> Result<EstimationResult> {
    config.validate()?;
    check_against_panel(config, panel)?;
    let started = Instant::now();
    let specs = config.specs(panel.n_dims())?;
    let k = specs.len();
    let inner = FitSettings::default();
    let c0 = match &config.c0 {
        Some(c) => c.expand(k, "c0")?,
        None => vec![1.0; k],
    };
    let phi_prior = GammaPrior {
        shape: config.phi_prior_shape,
        rate: config.phi_prior_rate,
    };
    let (estimation, initial_delta, relabel, plan) = if config.algorithm.is_dynamic() {
        let (plan, start) = initialize_dynamic(&specs, panel, config.seed, &inner)?;
        let delta = match (config.delta_mode, &config.delta) {
            (DeltaMode::Fixed, Some(d)) => d.expand(panel.n_series(), "delta")?,
            _ => initialize_delta(&start.eta),
        };
        let model = DynamicMixtureModel::new(
            specs.clone(),
            panel.clone(),
            vec![c0.clone(); panel.n_series()],
            delta.clone(),
        )?;
        let (est, relabel) = match config.algorithm {
            Algorithm::DynamicGibbs => {
                let mut s = DynamicGibbsSettings::new(config.iterations, config.burn_in, config.thin, config.seed);
                s.phi_prior = phi_prior;
                s.estimate_delta = config.delta_mode == DeltaMode::Estimate;
                s.sir_proposals = config.sir_proposals;
                s.relabel = fixed_relabel(config);
                let tr = run_gibbs_dynamic(&model, &start, &s)?;
                let r = tr.relabel;
                (Estimation::DynamicGibbs(tr), r)
            }
            Algorithm::DynamicSem => {
                let mut s = SemSettings::new(config.seed);
                s.m = config.mc_size;
                s.tol = config.tol;
                s.max_iter = config.max_iter();
                s.inner = inner;
                s.epsilon = config.epsilon_w;
                if config.delta_mode == DeltaMode::Estimate {
                    s.delta_update = DeltaUpdate::Grid(default_delta_grid());
                }
                let mut est = sem_estimate(&model, &start, &s)?;
                let r = point_relabel(config, &specs, &est.params);
                relabel_dynamic_estimate(&specs, &mut est, &r)?;
                (Estimation::Dynamic(est), r)
            }
            _ => {
                let s = IndependentSettings {
                    tol: config.tol,
                    max_iter: config.max_iter(),
                    inner,
                    epsilon: config.epsilon_w,
                };
                let mut est = independent_weights_estimate(&model, &start.params, &s)?;
                let r = point_relabel(config, &specs, &est.params);
                relabel_dynamic_estimate(&specs, &mut est, &r)?;
                (Estimation::Dynamic(est), r)
            }
        };
        (est, Some(delta), relabel, plan)
    } else {
        let (plan, start) = initialize_static(&specs, panel, config.seed, &inner)?;
        let model = StaticMixtureModel::new(specs.clone(), panel.clone(), c0)?;
        let (est, relabel) = if config.algorithm == Algorithm::StaticGibbs {
            let mut s = GibbsSettings::new(config.iterations, config.burn_in, config.thin, config.seed);
            s.phi_prior = phi_prior;
            s.relabel = fixed_relabel(config);
            let tr = run_gibbs(&model, &start, &s)?;
            let r = tr.relabel;
            (Estimation::StaticGibbs(tr), r)
        } else {
            let s = EmSettings {
                tol: config.tol,
                max_iter: config.max_iter(),
                inner,
                epsilon: config.epsilon_w,
            };
            let mut est = em_estimate(&model, &start, &s)?;
            let r = point_relabel(config, &specs, &est.params);
            let StaticEstimate { params, membership, .. } = &mut est;
            relabel_estimate(&specs, params, membership.eta.iter_mut(), membership.z.iter_mut(), &r)?;
            (Estimation::StaticEm(est), r)
        };
        (est, None, relabel, plan)
    };
    Ok(EstimationResult {
        config: config.clone(),
        specs,
        panel: panel.clone(),
        estimation,
        initial_delta,
        relabel,
        init_candidates: plan.candidates,
        init_fit_count: plan.fit_count,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// File names written by [`emit_results`].
pub const MEANS_FILE: &str = "means.csv";
pub const MEMBERSHIPS_FILE: &str = "memberships.csv";
pub const STATES_FILE: &str = "states.csv";
pub const PRECISIONS_FILE: &str = "precisions.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const DELTA_FILE: &str = "delta.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    fn create(dir: &Path, name: &str, header: &[String]) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = Self {
            writer: csv::Writer::from_writer(file),
            path,
        };
        out.row(header)?;
        Ok(out)
    }

    fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        let path = &self.path;
        self.writer
            .write_record(fields)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn dim_suffix(m: usize, base: &str, l: usize) -> String {
    if m == 1 {
        base.to_string()
    } else {
        format!("{base}_{}", l + 1)
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

#[derive(Serialize)]
struct Manifest<'a> {
    run: RunSection,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct RunSection {
    seed: u64,
    algorithm: String,
    n_series: usize,
    n_times: usize,
    n_dims: usize,
    k: usize,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    kept_draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    wall_time_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_objective: Option<f64>,
    log_likelihood: f64,
    relabel_time: usize,
    relabel_coord: usize,
    init_candidates: Vec<String>,
    init_fit_count: usize,
    cluster_labels: Vec<String>,
    files: Vec<String>,
}

/// Copy of the configuration with every optional field filled with the
/// value actually used.
fn resolved_config(result: &EstimationResult) -> RunConfig {
    let mut c = result.config.clone();
    c.k = Some(result.k());
    c.max_iter = Some(c.max_iter());
    c.relabel_time = Some(result.relabel.t_ref + 1);
    c.relabel_coord = result.relabel.coord + 1;
    if c.c0.is_none() {
        c.c0 = Some(OneOrMany::Many(vec![1.0; result.k()]));
    }
    if c.delta.is_none() {
        c.delta = Some(match &result.initial_delta {
            Some(d) => OneOrMany::Many(d.clone()),
            None => OneOrMany::Many(Vec::new()),
        });
    }
    for (cl, spec) in c.clusters.iter_mut().zip(&result.specs) {
        cl.label = Some(spec.label().to_string());
    }
    c
}

/// Writes the result files into `out_dir`, creating it if needed. Returns
/// the paths written.
pub fn emit_results(result: &EstimationResult, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let panel = &result.panel;
    let (n, t_len, m, k) = (panel.n_series(), panel.n_times(), panel.n_dims(), result.k());
    let mut files = vec![MEANS_FILE, MEMBERSHIPS_FILE, STATES_FILE, PRECISIONS_FILE];

    // cluster means with ±2 SD bands
    let mut header: Vec<String> = ["cluster", "label", "time"].iter().map(|s| s.to_string()).collect();
    for l in 0..m {
        for base in ["mean", "sd", "lower", "upper"] {
            header.push(dim_suffix(m, base, l));
        }
    }
    let mut means = CsvOut::create(dir, MEANS_FILE, &header)?;
    let mut states = CsvOut::create(
        dir,
        STATES_FILE,
        &["cluster", "time", "state", "mean", "sd"].map(String::from),
    )?;
    let summaries: Vec<PathSummary> = (0..k).map(|j| result.theta_summary(j)).collect();
    for (j, s) in summaries.iter().enumerate() {
        for t in 0..t_len {
            let mut rec = vec![(j + 1).to_string(), result.specs[j].label().to_string(), (t + 1).to_string()];
            for l in 0..m {
                let (mu, sd) = (s.obs_mean[t][l], s.obs_sd[t][l]);
                rec.extend([fmt(mu), fmt(sd), fmt(mu - 2.0 * sd), fmt(mu + 2.0 * sd)]);
            }
            means.row(&rec)?;
            for p in 0..s.mean[t].len() {
                states.row(&[(j + 1).to_string(), (t + 1).to_string(), (p + 1).to_string(), fmt(s.mean[t][p]), fmt(s.sd[t][p])])?;
            }
        }
    }
    means.finish()?;
    states.finish()?;

    let mut prec = CsvOut::create(dir, PRECISIONS_FILE, &["cluster", "dim", "phi"].map(String::from))?;
    for j in 0..k {
        for (l, v) in result.phi(j).iter().enumerate() {
            prec.row(&[(j + 1).to_string(), (l + 1).to_string(), fmt(*v)])?;
        }
    }
    prec.finish()?;

    match &result.estimation {
        Estimation::StaticEm(_) | Estimation::StaticGibbs(_) => {
            let (eta, z) = match &result.estimation {
                Estimation::StaticEm(e) => (e.membership.eta.clone(), e.membership.z.clone()),
                Estimation::StaticGibbs(tr) => (tr.mean_eta(), tr.modal_z()),
                _ => unreachable!(),
            };
            let mut mem = CsvOut::create(dir, MEMBERSHIPS_FILE, &["series_id", "cluster", "eta", "modal"].map(String::from))?;
            for i in 0..n {
                for j in 0..k {
                    mem.row(&[panel.id(i).to_string(), (j + 1).to_string(), fmt(eta[i][j]), u8::from(z[i] == j).to_string()])?;
                }
            }
            mem.finish()?;
        }
        Estimation::Dynamic(_) | Estimation::DynamicGibbs(_) => {
            let (eta, z, delta) = match &result.estimation {
                Estimation::Dynamic(e) => (e.membership.eta.clone(), e.membership.z.clone(), e.delta.clone()),
                Estimation::DynamicGibbs(tr) => (tr.mean_eta(), tr.modal_z(), tr.mean_delta()),
                _ => unreachable!(),
            };
            let mut mem = CsvOut::create(
                dir,
                MEMBERSHIPS_FILE,
                &["series_id", "time", "cluster", "eta", "modal"].map(String::from),
            )?;
            for i in 0..n {
                for t in 0..t_len {
                    for j in 0..k {
                        mem.row(&[
                            panel.id(i).to_string(),
                            (t + 1).to_string(),
                            (j + 1).to_string(),
                            fmt(eta[i][t][j]),
                            u8::from(z[i][t] == j).to_string(),
                        ])?;
                    }
                }
            }
            mem.finish()?;
            let initial = result.initial_delta.as_deref().unwrap_or(&delta);
            let mut out = CsvOut::create(dir, DELTA_FILE, &["series_id", "initial", "delta"].map(String::from))?;
            for i in 0..n {
                out.row(&[panel.id(i).to_string(), fmt(initial[i]), fmt(delta[i])])?;
            }
            out.finish()?;
            files.push(DELTA_FILE);
        }
    }

    // convergence path of the point estimators
    let path: Option<(&str, &[f64])> = match &result.estimation {
        Estimation::StaticEm(e) => Some(("q", &e.q_path)),
        Estimation::Dynamic(e) => Some(("relative_change", &e.change_path)),
        _ => None,
    };
    if let Some((name, values)) = path {
        let mut out = CsvOut::create(dir, CONVERGENCE_FILE, &["iteration".to_string(), name.to_string()])?;
        for (it, v) in values.iter().enumerate() {
            out.row(&[(it + 1).to_string(), fmt(*v)])?;
        }
        out.finish()?;
        files.push(CONVERGENCE_FILE);
    }

    let mut kept_draws = None;
    if matches!(result.estimation, Estimation::StaticGibbs(_) | Estimation::DynamicGibbs(_)) {
        let header = ["draw", "parameter", "series_id", "cluster", "dim", "value"].map(String::from);
        let mut out = CsvOut::create(dir, TRACE_FILE, &header)?;
        let blank = String::new;
        let mut put = |d: usize, name: &str, i: Option<usize>, j: Option<usize>, l: Option<usize>, v: String| {
            out.row(&[
                (d + 1).to_string(),
                name.to_string(),
                i.map(|i| panel.id(i).to_string()).unwrap_or_else(blank),
                j.map(|j| (j + 1).to_string()).unwrap_or_else(blank),
                l.map(|l| (l + 1).to_string()).unwrap_or_else(blank),
                v,
            ])
        };
        match &result.estimation {
            Estimation::StaticGibbs(tr) => {
                let ll = static_draw_logliks(&result.specs, panel, tr)?;
                for (d, draw) in tr.draws.iter().enumerate() {
                    put(d, "log_likelihood", None, None, None, fmt(ll[d]))?;
                    for (j, phi) in draw.phi.iter().enumerate() {
                        for (l, v) in phi.values().iter().enumerate() {
                            put(d, "phi", None, Some(j), Some(l), fmt(*v))?;
                        }
                    }
                    for i in 0..n {
                        for j in 0..k {
                            put(d, "eta", Some(i), Some(j), None, fmt(draw.eta[i][j]))?;
                        }
                        put(d, "z", Some(i), Some(draw.z[i]), None, (draw.z[i] + 1).to_string())?;
                    }
                }
                kept_draws = Some(tr.draws.len());
            }
            Estimation::DynamicGibbs(tr) => {
                let ll = dynamic_draw_logliks(&result.specs, panel, tr)?;
                for (d, draw) in tr.draws.iter().enumerate() {
                    put(d, "log_likelihood", None, None, None, fmt(ll[d]))?;
                    for (j, phi) in draw.phi.iter().enumerate() {
                        for (l, v) in phi.values().iter().enumerate() {
                            put(d, "phi", None, Some(j), Some(l), fmt(*v))?;
                        }
                    }
                    for i in 0..n {
                        put(d, "delta", Some(i), None, None, fmt(draw.delta[i]))?;
                    }
                }
                kept_draws = Some(tr.draws.len());
            }
            _ => unreachable!(),
        }
        out.finish()?;
        files.push(TRACE_FILE);
    }

    files.push(MANIFEST_FILE);
    let config = resolved_config(result);
    let manifest = Manifest {
        run: RunSection {
            seed: result.config.seed,
            algorithm: result.config.algorithm.name().to_string(),
            n_series: n,
            n_times: t_len,
            n_dims: m,
            k,
            iterations: result.iterations(),
            kept_draws,
            converged: result.converged(),
            wall_time_secs: result.wall_time_secs,
            final_objective: result.final_objective(),
            log_likelihood: result.log_likelihood()?,
            relabel_time: result.relabel.t_ref + 1,
            relabel_coord: result.relabel.coord + 1,
            init_candidates: result.init_candidates.iter().map(|&i| panel.id(i).to_string()).collect(),
            init_fit_count: result.init_fit_count,
            cluster_labels: result.specs.iter().map(|s| s.label().to_string()).collect(),
            files: files.iter().map(|s| s.to_string()).collect(),
        },
        config: &config,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::invalid(format!("manifest: {e}")))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(files.iter().map(|f| dir.join(f)).collect())
}
