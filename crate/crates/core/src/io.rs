//! CSV and JSON file formats.
//!
//! Numbers are written in full-precision scientific notation (`{:e}`), which
//! round-trips every `f64` exactly.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bench::format_float;
use crate::design::SystemSpec;
use crate::error::{Error, Result};
use crate::estimator::{Dataset, ImpulseResponseEstimate};
use crate::spectrum::FrequencyResponse;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn format_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        context: format!("{}:{}", path.display(), line),
        message: message.into(),
    }
}

/// Rows of comma-separated numbers; `header` skips a first line that does not parse.
fn parse_rows(path: &Path, text: &str, header: bool) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if header && i == 0 => continue,
            Err(e) => return Err(format_error(path, i + 1, e.to_string())),
        }
    }
    Ok(rows)
}

/// Matrix as row-major CSV without a header.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format_float(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &matrix_to_csv(m))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let rows = parse_rows(path, &read_text(path)?, false)?;
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(format_error(path, i + 1, format!("expected {ncols} columns")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

/// Two columns with header `normalised_frequency,magnitude_db`.
pub fn write_frequency_response_csv(path: &Path, r: &FrequencyResponse) -> Result<()> {
    let mut out = String::from("normalised_frequency,magnitude_db\n");
    for (f, m) in r.frequency.iter().zip(&r.magnitude_db) {
        out.push_str(&format!("{},{}\n", format_float(*f), format_float(*m)));
    }
    write_text(path, &out)
}

/// Single column of taps, no header.
pub fn write_estimate_csv(path: &Path, est: &ImpulseResponseEstimate) -> Result<()> {
    let out: String = est.theta.iter().map(|v| format_float(*v) + "\n").collect();
    write_text(path, &out)
}

pub fn read_estimate_csv(path: &Path) -> Result<Vec<f64>> {
    let rows = parse_rows(path, &read_text(path)?, true)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| match r.as_slice() {
            [v] => Ok(*v),
            _ => Err(format_error(path, i + 1, "expected one column")),
        })
        .collect()
}

/// Dataset metadata stored next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub noise_sigma: f64,
}

/// `data.csv` → `data.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `u,y` columns with a header plus the JSON sidecar.
pub fn write_dataset(csv_path: &Path, data: &Dataset) -> Result<()> {
    let mut out = String::from("u,y\n");
    for (u, y) in data.u.iter().zip(&data.y) {
        out.push_str(&format!("{},{}\n", format_float(*u), format_float(*y)));
    }
    write_text(csv_path, &out)?;
    let meta = DatasetSidecar {
        n_samples: data.len(),
        seed: data.seed,
        noise_sigma: data.noise_sigma,
    };
    write_text(&sidecar_path(csv_path), &(serde_json::to_string_pretty(&meta)? + "\n"))
}

/// Reads a two-column `u,y` CSV (header optional) and its sidecar, if present.
pub fn read_dataset(csv_path: &Path) -> Result<Dataset> {
    let rows = parse_rows(csv_path, &read_text(csv_path)?, true)?;
    let mut u = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        match r.as_slice() {
            [a, b] => {
                u.push(*a);
                y.push(*b);
            }
            _ => return Err(format_error(csv_path, i + 1, "expected two columns u,y")),
        }
    }
    let mut data = Dataset::new(u, y)?;
    let side = sidecar_path(csv_path);
    if side.exists() {
        let meta: DatasetSidecar = serde_json::from_str(&read_text(&side)?)?;
        if meta.n_samples != data.len() {
            return Err(Error::Format {
                context: side.display().to_string(),
                message: format!("sidecar N = {} but the CSV has {} rows", meta.n_samples, data.len()),
            });
        }
        data = data.with_metadata(meta.seed, meta.noise_sigma);
    }
    Ok(data)
}

pub fn read_system_json(path: &Path) -> Result<SystemSpec> {
    let s: SystemSpec = serde_json::from_str(&read_text(path)?)?;
    s.validate()?;
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}
