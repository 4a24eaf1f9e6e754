//! CSV formats for series, lagged datasets, correlation matrices, relevance
//! scores and training logs. Floats are written in shortest round-trip form,
//! so reading a file back reproduces every value bit for bit.

use std::fs;
use std::path::Path;

use fimgate_core::datagen::{LagLabel, LaggedDataset, TimeSeriesPair};
use fimgate_core::fim::CorrelationMatrix;
use fimgate_core::gating::ScoreVector;
use fimgate_core::trainer::LossBreakdown;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(Error::io(dir)),
        _ => Ok(()),
    }
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(Error::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(Error::csv(path))?;
    for row in rows {
        w.write_record(row).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn parse_f64(path: &Path, row: usize, column: &str, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: format!("`{cell}` is not a number"),
    })
}

pub(crate) fn column_index(path: &Path, headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

/// Reads every record, tagging it with its 1-based data row number.
pub(crate) fn records(path: &Path) -> Result<(csv::StringRecord, Vec<(usize, csv::StringRecord)>)> {
    let mut r = reader(path)?;
    let headers = r.headers().map_err(Error::csv(path))?.clone();
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        out.push((i + 1, rec.map_err(Error::csv(path))?));
    }
    Ok((headers, out))
}

/// Writes `t,u,y`.
pub fn write_series(path: &Path, series: &TimeSeriesPair) -> Result<()> {
    let header = ["t", "u", "y"].map(String::from);
    let rows = series
        .u()
        .iter()
        .zip(series.y())
        .enumerate()
        .map(|(t, (u, y))| [t.to_string(), fmt_f64(*u), fmt_f64(*y)]);
    write_rows(path, &header, rows)
}

/// Reads two named numeric columns as an input/output pair.
pub fn read_series(path: &Path, input_column: &str, output_column: &str) -> Result<TimeSeriesPair> {
    let (headers, rows) = records(path)?;
    let iu = column_index(path, &headers, input_column)?;
    let iy = column_index(path, &headers, output_column)?;
    let mut u = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for (row, rec) in &rows {
        let cell = |i: usize, name: &str| -> Result<f64> {
            let raw = rec.get(i).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: *row,
                column: name.to_string(),
                message: "missing cell".into(),
            })?;
            let v = parse_f64(path, *row, name, raw)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: *row,
                    column: name.to_string(),
                    message: format!("`{raw}` is not finite"),
                });
            }
            Ok(v)
        };
        u.push(cell(iu, input_column)?);
        y.push(cell(iy, output_column)?);
    }
    Ok(TimeSeriesPair::new(u, y)?)
}

/// Writes the regressor columns followed by `target`.
pub fn write_lagged(path: &Path, data: &LaggedDataset) -> Result<()> {
    let header: Vec<String> = data
        .labels
        .iter()
        .map(ToString::to_string)
        .chain(std::iter::once("target".to_string()))
        .collect();
    let rows = (0..data.n_rows()).map(|i| {
        data.x
            .row(i)
            .iter()
            .copied()
            .chain(std::iter::once(data.targets[i]))
            .map(fmt_f64)
            .collect::<Vec<_>>()
    });
    write_rows(path, &header, rows)
}

/// Reads a file produced by [`write_lagged`]. Scaling metadata is not stored.
pub fn read_lagged(path: &Path) -> Result<LaggedDataset> {
    let (headers, rows) = records(path)?;
    let n_cols = headers.len();
    if n_cols < 2 || headers.get(n_cols - 1) != Some("target") {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: "target".into(),
        });
    }
    let labels = headers
        .iter()
        .take(n_cols - 1)
        .map(|h| {
            h.parse::<LagLabel>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: 0,
                column: h.to_string(),
                message: "not a lag label".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let d = labels.len();
    let mut values = Vec::with_capacity(rows.len() * d);
    let mut targets = Vec::with_capacity(rows.len());
    for (row, rec) in &rows {
        for (j, cell) in rec.iter().enumerate() {
            let v = parse_f64(path, *row, &headers[j], cell)?;
            if j < d {
                values.push(v);
            } else {
                targets.push(v);
            }
        }
    }
    let lag = labels.iter().map(|l| l.lag).max().unwrap_or(0);
    Ok(LaggedDataset {
        x: DMatrix::from_row_slice(targets.len(), d, &values),
        targets,
        lag,
        labels,
        scaling: None,
    })
}

/// Square matrix with a leading `column_label` column.
pub fn write_correlation(path: &Path, c: &CorrelationMatrix, labels: &[LagLabel]) -> Result<()> {
    let m = c.matrix();
    let header: Vec<String> = std::iter::once("column_label".to_string())
        .chain(labels.iter().map(ToString::to_string))
        .collect();
    let rows = labels.iter().enumerate().map(|(i, l)| {
        std::iter::once(l.to_string())
            .chain(m.row(i).iter().map(|v| fmt_f64(*v)))
            .collect::<Vec<_>>()
    });
    write_rows(path, &header, rows)
}

/// Writes `column_label,alpha`.
pub fn write_scores(path: &Path, labels: &[LagLabel], alpha: &ScoreVector) -> Result<()> {
    let header = ["column_label", "alpha"].map(String::from);
    let rows = labels
        .iter()
        .zip(alpha.as_slice())
        .map(|(l, a)| [l.to_string(), fmt_f64(*a)]);
    write_rows(path, &header, rows)
}

/// Writes `epoch,mse,var_penalty,total` with 1-based epochs.
pub fn write_history(path: &Path, history: &[LossBreakdown]) -> Result<()> {
    let header = ["epoch", "mse", "var_penalty", "total"].map(String::from);
    let rows = history.iter().enumerate().map(|(e, l)| {
        [
            (e + 1).to_string(),
            fmt_f64(l.mse),
            fmt_f64(l.var_penalty),
            fmt_f64(l.total),
        ]
    });
    write_rows(path, &header, rows)
}
