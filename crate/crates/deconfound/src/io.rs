//! CSV and JSON file formats shared by the CLI and the FFI layer.
//!
//! Matrices are CSV with a `x1,...,xp` style header and one sample per line;
//! floats are written with shortest round-trip precision so identical runs
//! produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{Dataset, ScmConfig};
use crate::scores::ScoreRequest;

pub fn write_matrix_csv(path: &Path, matrix: &Array2<f64>, prefix: &str) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (1..=matrix.ncols())
        .map(|j| format!("{prefix}{j}"))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            Error::invalid(format!("bad numeric field in {}: {e}", path.display()))
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{} holds no data rows", path.display())));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::shape(format!("ragged rows in {}", path.display())));
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, p), flat).map_err(|e| Error::shape(e.to_string()))
}

/// Dataset bundle written by `generate`: X.csv plus optional H.csv and
/// S_true.csv companions, aligned row-for-row.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let x_path = dir.join("X.csv");
    write_matrix_csv(&x_path, &dataset.x, "x")?;
    written.push(x_path);
    if let Some(h) = &dataset.h {
        let h_path = dir.join("H.csv");
        write_matrix_csv(&h_path, h, "h")?;
        written.push(h_path);
    }
    if let Some(s) = &dataset.s_true {
        let s_path = dir.join("S_true.csv");
        write_matrix_csv(&s_path, s, "s")?;
        written.push(s_path);
        let meta_path = dir.join("meta.json");
        let meta = DatasetMeta {
            config: dataset.config.clone(),
            seed: dataset.seed,
            n: dataset.n(),
            s_known_columns: dataset.known_s_columns(),
        };
        let file = File::create(&meta_path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), &meta)?;
        written.push(meta_path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: ScmConfig,
    pub seed: u64,
    pub n: usize,
    pub s_known_columns: Vec<usize>,
}

/// Single-file JSON bundle of a dataset, for interop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub x: Vec<Vec<f64>>,
    pub h: Option<Vec<Vec<f64>>>,
    pub s_true: Option<Vec<Vec<f64>>>,
    pub s_known_columns: Vec<usize>,
    pub config: ScmConfig,
    pub seed: u64,
}

fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl DatasetBundle {
    pub fn from_dataset(ds: &Dataset) -> DatasetBundle {
        DatasetBundle {
            x: matrix_to_rows(&ds.x),
            h: ds.h.as_ref().map(matrix_to_rows),
            s_true: ds.s_true.as_ref().map(matrix_to_rows),
            s_known_columns: ds.known_s_columns(),
            config: ds.config.clone(),
            seed: ds.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub suggested_m: usize,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_parent_set_requests(path: &Path) -> Result<Vec<ScoreRequest>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
