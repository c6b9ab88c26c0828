//! Synthetic two-cluster panels: two smooth mean paths that approach each
//! other, touch their closest point at `t = 39` and separate again.

use rand_distr::{Distribution, Normal};

use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;
use crate::random::stream;

pub const GEN_T: usize = 60;
pub const GEN_SD: f64 = 0.1;
/// 1-based time of closest approach, where switching series change cluster.
pub const GEN_SWITCH_T: usize = 39;
pub const GEN_PER_CLUSTER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratedKind {
    Static,
    Dynamic,
    /// Static panel with single-time outliers in some upper-cluster series.
    Outlier,
}

impl std::str::FromStr for GeneratedKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "static" => Ok(Self::Static),
            "dynamic" => Ok(Self::Dynamic),
            "outlier" => Ok(Self::Outlier),
            other => Err(format!("unknown dataset kind '{other}' (static, dynamic or outlier)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedPanel {
    pub panel: TimeSeriesPanel,
    /// True cluster of every series at every time (0 = lower mean path).
    pub labels: Vec<Vec<usize>>,
    /// 1-based first time in the new cluster, for switching series.
    pub switch_times: Vec<Option<usize>>,
    /// `(series, 1-based time)` of injected outliers.
    pub outliers: Vec<(usize, usize)>,
}

/// Mean of cluster `j` (0 = lower, 1 = upper) at 1-based time `t`.
pub fn cluster_mean(j: usize, t: usize) -> f64 {
    let x = t as f64;
    let base = 1.5 * (x / 10.0).sin();
    let c = GEN_SWITCH_T as f64;
    let scale = if t <= GEN_SWITCH_T { c - 1.0 } else { (GEN_T - GEN_SWITCH_T) as f64 };
    let gap = 1.2 + 4.8 * ((x - c) / scale).powi(2);
    if j == 0 {
        base - gap / 2.0
    } else {
        base + gap / 2.0
    }
}

/// Outlier positions: (upper-cluster member offset, 1-based time).
const OUTLIER_SPOTS: [(usize, usize); 3] = [(0, 12), (3, 27), (6, 51)];

pub fn generate(kind: GeneratedKind, seed: u64) -> Result<GeneratedPanel> {
    let noise = Normal::new(0.0, GEN_SD).expect("valid sd");
    let n = match kind {
        GeneratedKind::Dynamic => 2 * GEN_PER_CLUSTER + 2,
        _ => 2 * GEN_PER_CLUSTER,
    };
    let mut ids = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut switch_times = Vec::with_capacity(n);
    for i in 0..n {
        ids.push(format!("s{:02}", i + 1));
        let path: Vec<usize> = if i < 2 * GEN_PER_CLUSTER {
            switch_times.push(None);
            vec![i / GEN_PER_CLUSTER; GEN_T]
        } else {
            switch_times.push(Some(GEN_SWITCH_T));
            (1..=GEN_T).map(|t| if t < GEN_SWITCH_T { 1 } else { 0 }).collect()
        };
        let mut rng = stream(seed, i as u64);
        values.push(
            (1..=GEN_T)
                .map(|t| cluster_mean(path[t - 1], t) + noise.sample(&mut rng))
                .collect::<Vec<f64>>(),
        );
        labels.push(path);
    }
    let mut outliers = Vec::new();
    if kind == GeneratedKind::Outlier {
        for (offset, t) in OUTLIER_SPOTS {
            let i = GEN_PER_CLUSTER + offset;
            let mut rng = stream(seed, (1 << 20) + i as u64);
            values[i][t - 1] = cluster_mean(0, t) + noise.sample(&mut rng);
            outliers.push((i, t));
        }
    }
    Ok(GeneratedPanel {
        panel: TimeSeriesPanel::from_univariate(ids, &values)?,
        labels,
        switch_times,
        outliers,
    })
}

impl GeneratedPanel {
    /// Writes `series_id,time_index,cluster,outlier` with 1-based clusters.
    pub fn write_truth(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let io_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        w.write_record(["series_id", "time_index", "cluster", "outlier"]).map_err(io_err)?;
        for (i, labels) in self.labels.iter().enumerate() {
            for (t, j) in labels.iter().enumerate() {
                let outlier = self.outliers.contains(&(i, t + 1));
                w.write_record([
                    self.panel.id(i).to_string(),
                    (t + 1).to_string(),
                    (j + 1).to_string(),
                    u8::from(outlier).to_string(),
                ])
                .map_err(io_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
