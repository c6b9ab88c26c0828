use nalgebra::DVector;

use crate::dlm::{DlmSpec, StatePath};

/// Pointwise mean and standard deviation of a state path and of `F θ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub mean: Vec<DVector<f64>>,
    pub sd: Vec<DVector<f64>>,
    pub obs_mean: Vec<DVector<f64>>,
    pub obs_sd: Vec<DVector<f64>>,
}

impl PathSummary {
    /// Summary of a point estimate, using its smoothed covariances when present.
    pub fn from_point(spec: &DlmSpec, path: &StatePath) -> Self {
        let t_len = path.len();
        let p = spec.state_dim();
        let m = spec.obs_dim();
        let mut sd = Vec::with_capacity(t_len);
        let mut obs_sd = Vec::with_capacity(t_len);
        for t in 0..t_len {
            match &path.cov {
                Some(c) => {
                    sd.push(DVector::from_fn(p, |s, _| c[t][(s, s)].max(0.0).sqrt()));
                    obs_sd.push(path.obs_sd(spec, t).expect("covariances present"));
                }
                None => {
                    sd.push(DVector::zeros(p));
                    obs_sd.push(DVector::zeros(m));
                }
            }
        }
        Self {
            mean: path.theta.clone(),
            sd,
            obs_mean: (0..t_len).map(|t| path.obs_mean(spec, t)).collect(),
            obs_sd,
        }
    }
}

/// Monte Carlo summary of sampled paths.
pub fn summarize_paths(spec: &DlmSpec, paths: &[&StatePath]) -> PathSummary {
    assert!(!paths.is_empty(), "at least one path");
    let t_len = paths[0].len();
    let n = paths.len() as f64;
    let moments = |get: &dyn Fn(&StatePath, usize) -> DVector<f64>| {
        let mut mean = Vec::with_capacity(t_len);
        let mut sd = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let first = get(paths[0], t);
            let mut s1 = DVector::zeros(first.len());
            let mut s2 = DVector::zeros(first.len());
            for p in paths {
                let v = get(p, t);
                s2 += v.component_mul(&v);
                s1 += v;
            }
            let mu = &s1 / n;
            let var = (&s2 / n - mu.component_mul(&mu)).map(|v| v.max(0.0));
            // unbiased when more than one draw
            let scale = if paths.len() > 1 { n / (n - 1.0) } else { 1.0 };
            sd.push(var.map(|v| (v * scale).sqrt()));
            mean.push(mu);
        }
        (mean, sd)
    };
    let (mean, sd) = moments(&|p, t| p.theta[t].clone());
    let (obs_mean, obs_sd) = moments(&|p, t| p.obs_mean(spec, t));
    PathSummary {
        mean,
        sd,
        obs_mean,
        obs_sd,
    }
}
