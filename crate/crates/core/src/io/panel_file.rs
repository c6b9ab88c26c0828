use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

/// Reads a long-format panel: `series_id,time_index,<value columns…>`.
///
/// Series are ordered lexicographically by id; `T` is the largest time
/// index and every `(series_id, time_index)` pair in `1..=T` must appear
/// exactly once. Row numbers in errors count the header as row 1.
pub fn load_panel(path: impl AsRef<Path>) -> Result<TimeSeriesPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file)
}

pub fn read_panel<R: std::io::Read>(reader: R) -> Result<TimeSeriesPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            msg: e.to_string(),
        })?
        .clone();
    if header.len() < 3 || &header[0] != "series_id" || &header[1] != "time_index" {
        return Err(Error::Parse {
            row: 1,
            msg: "header must start with series_id,time_index and name at least one value column".into(),
        });
    }
    let m = header.len() - 2;
    let mut cells: BTreeMap<String, HashMap<usize, (usize, Vec<f64>)>> = BTreeMap::new();
    let mut t_max = 0;
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if record.len() != m + 2 {
            return Err(Error::Parse {
                row,
                msg: format!("expected {} fields, found {}", m + 2, record.len()),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                row,
                msg: "empty series_id".into(),
            });
        }
        let t: usize = record[1].parse().map_err(|_| Error::Parse {
            row,
            msg: format!("time_index '{}' is not a positive integer", &record[1]),
        })?;
        if t == 0 {
            return Err(Error::Parse {
                row,
                msg: "time_index starts at 1".into(),
            });
        }
        let mut values = Vec::with_capacity(m);
        for l in 0..m {
            let cell = &record[l + 2];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("column '{}': '{cell}' is not a number", &header[l + 2]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("column '{}': missing or non-finite values are not supported", &header[l + 2]),
                });
            }
            values.push(v);
        }
        let series = cells.entry(id.clone()).or_default();
        if let Some((first, _)) = series.get(&t) {
            return Err(Error::Parse {
                row,
                msg: format!("duplicate entry for ({id}, {t}), first seen at row {first}"),
            });
        }
        series.insert(t, (row, values));
        t_max = t_max.max(t);
    }
    if cells.is_empty() {
        return Err(Error::Data("panel file has no data rows".into()));
    }
    let mut ids = Vec::with_capacity(cells.len());
    let mut data = Vec::with_capacity(cells.len() * t_max * m);
    for (id, series) in cells {
        for t in 1..=t_max {
            match series.get(&t) {
                Some((_, v)) => data.extend_from_slice(v),
                None => return Err(Error::Data(format!("missing entry for ({id}, {t})"))),
            }
        }
        ids.push(id);
    }
    TimeSeriesPanel::new(ids, t_max, m, data).map_err(|e| Error::Data(e.to_string()))
}

/// Writes a panel in the format read by [`load_panel`]; values use the
/// shortest representation that parses back to the same double.
pub fn write_panel(path: impl AsRef<Path>, panel: &TimeSeriesPanel, value_names: Option<&[String]>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut header = vec!["series_id".to_string(), "time_index".to_string()];
    match value_names {
        Some(names) => header.extend(names.iter().cloned()),
        None if panel.n_dims() == 1 => header.push("value".into()),
        None => header.extend((1..=panel.n_dims()).map(|l| format!("value_{l}"))),
    }
    w.write_record(&header).map_err(io_err)?;
    for i in 0..panel.n_series() {
        for t in 0..panel.n_times() {
            let mut rec = vec![panel.id(i).to_string(), (t + 1).to_string()];
            rec.extend(panel.obs(i, t).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
