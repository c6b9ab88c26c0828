//! Run configuration, read from TOML: top-level keys plus one `[[cluster]]`
//! table per cluster.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dlm::{DlmSpec, Family, DEFAULT_EPSILON_W};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    StaticGibbs,
    StaticEm,
    DynamicGibbs,
    DynamicSem,
    Independent,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::StaticGibbs => "static_gibbs",
            Algorithm::StaticEm => "static_em",
            Algorithm::DynamicGibbs => "dynamic_gibbs",
            Algorithm::DynamicSem => "dynamic_sem",
            Algorithm::Independent => "independent",
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, Algorithm::DynamicGibbs | Algorithm::DynamicSem | Algorithm::Independent)
    }

    pub fn is_gibbs(self) -> bool {
        matches!(self, Algorithm::StaticGibbs | Algorithm::DynamicGibbs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// Use `delta` as given.
    Fixed,
    /// 0.5 for series that switch cluster in a quick independent-weights
    /// fit, 0.95 otherwise.
    Heuristic,
    /// Heuristic start, then grid updates (SEM) or importance-resampling
    /// draws (Gibbs).
    Estimate,
}

/// A single value for every entry or one value per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn expand(&self, len: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            OneOrMany::One(v) => Ok(vec![*v; len]),
            OneOrMany::Many(v) if v.len() == len => Ok(v.clone()),
            OneOrMany::Many(v) => Err(Error::Config(format!("{what} has {} values, expected {len}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Same family for every observation dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    /// One family per observation dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub families: Option<Vec<Family>>,
    /// Evolution discount in (0, 1].
    pub discount: f64,
}

fn d_iterations() -> usize {
    2000
}
fn d_burn_in() -> usize {
    500
}
fn d_one() -> usize {
    1
}
fn d_tol() -> f64 {
    1e-6
}
fn d_mc() -> usize {
    10
}
fn d_delta_mode() -> DeltaMode {
    DeltaMode::Heuristic
}
fn d_prior() -> f64 {
    1e-3
}
fn d_sir() -> usize {
    200
}
fn d_eps() -> f64 {
    DEFAULT_EPSILON_W
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Optional cross-check of the number of `[[cluster]]` tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_burn_in")]
    pub burn_in: usize,
    #[serde(default = "d_one")]
    pub thin: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
    /// Defaults to 500 for `static_em` and 100 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    /// Monte Carlo size of the stochastic EM.
    #[serde(default = "d_mc")]
    pub mc_size: usize,
    #[serde(default = "d_delta_mode")]
    pub delta_mode: DeltaMode,
    /// Weight discounts for `delta_mode = "fixed"`: one value or one per series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<OneOrMany>,
    /// Dirichlet prior: one value or one per cluster.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<OneOrMany>,
    /// 1-based reference time for relabeling; chosen from the start when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relabel_time: Option<usize>,
    /// 1-based observation coordinate used for relabeling.
    #[serde(default = "d_one")]
    pub relabel_coord: usize,
    #[serde(default = "d_prior")]
    pub phi_prior_shape: f64,
    #[serde(default = "d_prior")]
    pub phi_prior_rate: f64,
    #[serde(default = "d_sir")]
    pub sir_proposals: usize,
    #[serde(default = "d_eps")]
    pub epsilon_w: f64,
    #[serde(rename = "cluster")]
    pub clusters: Vec<ClusterConfig>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The `[config]` table of a run manifest.
    pub fn from_manifest_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().trim().to_string()))?;
        let config = table
            .remove("config")
            .ok_or_else(|| Error::Config("manifest has no [config] table".into()))?;
        let cfg: RunConfig = config.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration file, or the `[config]` table of a manifest
    /// written by a previous run.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if text.lines().any(|l| l.trim() == "[config]") {
            Self::from_manifest_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter.unwrap_or(if self.algorithm == Algorithm::StaticEm { 500 } else { 100 })
    }

    /// Checks everything that does not depend on the panel.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.clusters.is_empty() {
            return cfg("at least one [[cluster]] table is required".into());
        }
        if let Some(k) = self.k {
            if k != self.clusters.len() {
                return cfg(format!("k = {k} but {} [[cluster]] tables are given", self.clusters.len()));
            }
        }
        for (j, c) in self.clusters.iter().enumerate() {
            if c.family.is_some() == c.families.is_some() {
                return cfg(format!("cluster {}: give exactly one of family or families", j + 1));
            }
            if c.families.as_ref().is_some_and(|f| f.is_empty()) {
                return cfg(format!("cluster {}: families is empty", j + 1));
            }
            if !(c.discount > 0.0 && c.discount <= 1.0) {
                return cfg(format!("cluster {}: discount {} outside (0, 1]", j + 1, c.discount));
            }
        }
        if self.algorithm.is_gibbs() {
            if self.iterations <= self.burn_in {
                return cfg("iterations must exceed burn_in".into());
            }
            if self.thin == 0 {
                return cfg("thin must be at least 1".into());
            }
        }
        if !(self.tol > 0.0) {
            return cfg("tol must be positive".into());
        }
        if self.max_iter == Some(0) {
            return cfg("max_iter must be at least 1".into());
        }
        if self.mc_size == 0 {
            return cfg("mc_size must be at least 1".into());
        }
        if self.delta_mode == DeltaMode::Fixed && self.delta.is_none() && self.algorithm.is_dynamic() {
            return cfg("delta_mode = \"fixed\" needs delta".into());
        }
        let deltas = match &self.delta {
            Some(OneOrMany::One(v)) => vec![*v],
            Some(OneOrMany::Many(v)) => v.clone(),
            None => Vec::new(),
        };
        if deltas.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return cfg("delta values must lie in (0, 1]".into());
        }
        if let Some(c0) = &self.c0 {
            let c = c0.expand(self.k(), "c0")?;
            if c.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return cfg("c0 entries must be positive".into());
            }
        }
        if self.relabel_time == Some(0) || self.relabel_coord == 0 {
            return cfg("relabel_time and relabel_coord are 1-based".into());
        }
        if !(self.phi_prior_shape > 0.0 && self.phi_prior_rate >= 0.0) {
            return cfg("phi_prior_shape must be positive and phi_prior_rate non-negative".into());
        }
        if self.sir_proposals == 0 {
            return cfg("sir_proposals must be at least 1".into());
        }
        if !(self.epsilon_w >= 0.0) {
            return cfg("epsilon_w must be non-negative".into());
        }
        Ok(())
    }

    /// Cluster specs for an `m`-dimensional panel.
    pub fn specs(&self, m: usize) -> Result<Vec<DlmSpec>> {
        self.clusters
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let families = match (&c.family, &c.families) {
                    (Some(f), _) => vec![*f; m],
                    (_, Some(fs)) if fs.len() == m => fs.clone(),
                    (_, Some(fs)) => {
                        return Err(Error::Config(format!(
                            "cluster {}: {} families for {m} observation dimensions",
                            j + 1,
                            fs.len()
                        )))
                    }
                    _ => unreachable!("validated"),
                };
                let label = c.label.clone().unwrap_or_else(|| format!("cluster_{}", j + 1));
                let base = DlmSpec::per_dimension(&families, c.discount).map_err(|e| Error::Config(e.to_string()))?;
                let (f, g) = (base.obs_matrix().clone(), base.evo_matrix().clone());
                DlmSpec::with_label(f, g, c.discount, label).map_err(|e| Error::Config(e.to_string()))
            })
            .collect()
    }
}
