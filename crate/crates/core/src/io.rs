//! Versioned text formats: matrix, initial-condition and measure files
//! (JSON) and the cumulative step-function export (CSV).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandmatrix::{BandMatrix, BandMatrixError};
use crate::measure::{MatrixMeasure, MeasureError};
use crate::recurrence::{InitialConditions, RecurrenceError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("malformed file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unsupported format_version {found}, expected {FORMAT_VERSION}")]
    Version { found: u32 },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Matrix(#[from] BandMatrixError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Initial(#[from] RecurrenceError),
}

fn check_version(found: u32) -> Result<(), IoError> {
    if found != FORMAT_VERSION {
        return Err(IoError::Version { found });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub format_version: u32,
    pub n: usize,
    #[serde(rename = "N")]
    pub size: usize,
    #[serde(default)]
    pub degenerations: Vec<usize>,
    pub diagonals: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MatrixFile {
    pub fn from_matrix(a: &BandMatrix, degenerations: Vec<usize>, seed: Option<u64>) -> Self {
        let diagonals = a.diagonals().iter().enumerate().map(|(i, d)| (i.to_string(), d.clone())).collect();
        Self { format_version: FORMAT_VERSION, n: a.n(), size: a.size(), degenerations, diagonals, seed }
    }

    pub fn to_matrix(&self) -> Result<BandMatrix, IoError> {
        check_version(self.format_version)?;
        let diagonals = (0..=self.n)
            .map(|i| {
                self.diagonals
                    .get(&i.to_string())
                    .cloned()
                    .ok_or_else(|| IoError::Shape(format!("missing diagonal \"{i}\"")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if self.diagonals.len() != self.n + 1 {
            return Err(IoError::Shape(format!("expected {} diagonals, found {}", self.n + 1, self.diagonals.len())));
        }
        let a = BandMatrix::new(self.n, diagonals)?;
        if a.size() != self.size {
            return Err(IoError::Shape(format!("N = {} but diagonal 0 has {} entries", self.size, a.size())));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditionsFile {
    pub format_version: u32,
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
}

impl InitialConditionsFile {
    pub fn from_initial(t: &InitialConditions) -> Self {
        let m = t.matrix();
        let rows = (0..t.n()).map(|r| (0..t.n()).map(|c| m[(r, c)]).collect()).collect();
        Self { format_version: FORMAT_VERSION, n: t.n(), rows }
    }

    pub fn to_initial(&self) -> Result<InitialConditions, IoError> {
        check_version(self.format_version)?;
        let m = square(&self.rows, self.n, "rows")?;
        Ok(InitialConditions::new(m)?)
    }
}

/// A weight given either as nested rows or as a flat row-major list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightEntry {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomEntry {
    pub x: f64,
    pub weight: WeightEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub format_version: u32,
    pub n: usize,
    pub atoms: Vec<AtomEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MeasureFile {
    pub fn from_measure(sigma: &MatrixMeasure, seed: Option<u64>) -> Self {
        let n = sigma.n();
        let atoms = sigma
            .atoms()
            .iter()
            .map(|a| AtomEntry {
                x: a.x,
                weight: WeightEntry::Rows((0..n).map(|r| (0..n).map(|c| a.weight[(r, c)]).collect()).collect()),
            })
            .collect();
        Self { format_version: FORMAT_VERSION, n, atoms, seed }
    }

    pub fn to_measure(&self) -> Result<MatrixMeasure, IoError> {
        check_version(self.format_version)?;
        let n = self.n;
        let atoms = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let w = match &a.weight {
                    WeightEntry::Rows(rows) => square(rows, n, &format!("atom {i} weight"))?,
                    WeightEntry::Flat(v) if v.len() == n * n => DMatrix::from_row_slice(n, n, v),
                    WeightEntry::Flat(v) => {
                        return Err(IoError::Shape(format!("atom {i} weight has {} entries, expected {}", v.len(), n * n)))
                    }
                };
                Ok((a.x, w))
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(MatrixMeasure::new(n, atoms)?)
    }
}

fn square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, IoError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(IoError::Shape(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::Write { path: path.display().to_string(), source })
}

pub fn read_matrix(path: &Path) -> Result<(BandMatrix, MatrixFile), IoError> {
    let file: MatrixFile = read_json(path)?;
    Ok((file.to_matrix()?, file))
}

pub fn read_initial(path: &Path) -> Result<InitialConditions, IoError> {
    read_json::<InitialConditionsFile>(path)?.to_initial()
}

pub fn read_measure(path: &Path) -> Result<MatrixMeasure, IoError> {
    read_json::<MeasureFile>(path)?.to_measure()
}

/// Shortest round-trip text for `v`, switching to exponent form outside
/// `[1e-4, 1e15)`.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// Header `t, sigma_1_1, sigma_1_2, …` over `i ≤ j` (1-based).
pub fn step_function_header(n: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        for j in i..=n {
            header.push(format!("sigma_{i}_{j}"));
        }
    }
    header
}

/// One row per atom: the node and the cumulative weight up to and
/// including it, upper triangle.
pub fn write_step_function<W: Write>(out: W, sigma: &MatrixMeasure) -> Result<(), IoError> {
    let n = sigma.n();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(step_function_header(n))?;
    for (x, acc) in sigma.step_function() {
        let mut record = vec![format_real(x)];
        for i in 0..n {
            for j in i..n {
                record.push(format_real(acc[(i, j)]));
            }
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|source| IoError::Write { path: "csv".into(), source })?;
    Ok(())
}
