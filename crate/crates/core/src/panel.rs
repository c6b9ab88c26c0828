use crate::error::{Error, Result};

/// A balanced panel of `n` series observed at the same `T` time points, each
/// observation an `m`-vector.
///
/// Storage is series-major: `data[(i * T + t) * m + l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    ids: Vec<String>,
    n_times: usize,
    n_dims: usize,
    data: Vec<f64>,
}

impl TimeSeriesPanel {
    pub fn new(ids: Vec<String>, n_times: usize, n_dims: usize, data: Vec<f64>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("panel needs at least one series"));
        }
        if n_times == 0 || n_dims == 0 {
            return Err(Error::invalid("panel needs T >= 1 and m >= 1"));
        }
        if data.len() != ids.len() * n_times * n_dims {
            return Err(Error::invalid(format!(
                "panel data has {} values, expected n*T*m = {}",
                data.len(),
                ids.len() * n_times * n_dims
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let i = pos / (n_times * n_dims);
            let t = (pos / n_dims) % n_times;
            return Err(Error::invalid(format!(
                "non-finite value for series {} at t = {}",
                ids[i],
                t + 1
            )));
        }
        Ok(Self {
            ids,
            n_times,
            n_dims,
            data,
        })
    }

    /// Builds a panel from nested `series -> time -> dimension` vectors.
    pub fn from_nested(ids: Vec<String>, values: &[Vec<Vec<f64>>]) -> Result<Self> {
        if values.len() != ids.len() {
            return Err(Error::invalid("one value block per series id is required"));
        }
        let n_times = values.first().map_or(0, Vec::len);
        let n_dims = values
            .first()
            .and_then(|s| s.first())
            .map_or(0, Vec::len);
        let mut data = Vec::with_capacity(ids.len() * n_times * n_dims);
        for series in values {
            if series.len() != n_times {
                return Err(Error::invalid("all series must share T"));
            }
            for obs in series {
                if obs.len() != n_dims {
                    return Err(Error::invalid("all observations must share m"));
                }
                data.extend_from_slice(obs);
            }
        }
        Self::new(ids, n_times, n_dims, data)
    }

    /// Univariate convenience constructor.
    pub fn from_univariate(ids: Vec<String>, values: &[Vec<f64>]) -> Result<Self> {
        let nested: Vec<Vec<Vec<f64>>> = values
            .iter()
            .map(|s| s.iter().map(|&v| vec![v]).collect())
            .collect();
        Self::from_nested(ids, &nested)
    }

    pub fn n_series(&self) -> usize {
        self.ids.len()
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// The `m` values of series `i` at time `t` (0-based).
    #[inline]
    pub fn obs(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.n_times + t) * self.n_dims;
        &self.data[start..start + self.n_dims]
    }

    #[inline]
    pub fn value(&self, i: usize, t: usize, l: usize) -> f64 {
        self.data[(i * self.n_times + t) * self.n_dims + l]
    }

    /// The whole series `i` flattened as `T * m` values.
    pub fn series(&self, i: usize) -> &[f64] {
        let len = self.n_times * self.n_dims;
        &self.data[i * len..(i + 1) * len]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Panel restricted to the listed series, in the given order.
    pub fn subset(&self, series: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(series.len());
        let mut data = Vec::with_capacity(series.len() * self.n_times * self.n_dims);
        for &i in series {
            if i >= self.n_series() {
                return Err(Error::invalid(format!("series index {i} out of range")));
            }
            ids.push(self.ids[i].clone());
            data.extend_from_slice(self.series(i));
        }
        Self::new(ids, self.n_times, self.n_dims, data)
    }

    /// Per-dimension mean and standard deviation over all series and times.
    pub fn dimension_moments(&self) -> Vec<(f64, f64)> {
        let count = (self.n_series() * self.n_times) as f64;
        (0..self.n_dims)
            .map(|l| {
                let mean = self.data.iter().skip(l).step_by(self.n_dims).sum::<f64>() / count;
                let var = self
                    .data
                    .iter()
                    .skip(l)
                    .step_by(self.n_dims)
                    .map(|v| (v - mean).powi(2))
                    .sum::<f64>()
                    / count;
                (mean, var.sqrt())
            })
            .collect()
    }
}
