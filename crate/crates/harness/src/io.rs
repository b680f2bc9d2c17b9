//! Loading datasets from CSV and spatial weights from dense or edge-list files.
//!
//! A data file is a CSV with a header row and one numeric row per unit. A
//! weights file is either a headerless dense `n x n` CSV, or an edge list
//! whose first line is a header (for example `i,j,w`) followed by 0-based
//! `i,j[,w]` records; a missing weight counts as 1.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use slmfic_core::nalgebra::{DMatrix, DVector};
use slmfic_core::{AdjacencyMatrix, Dataset, SpatialWeights};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("{path}: no column named {name:?}")]
    MissingColumn { path: String, name: String },
    #[error("{path}: {source}")]
    Model {
        path: String,
        #[source]
        source: slmfic_core::Error,
    },
}

impl LoadError {
    fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        LoadError::Parse { path: path.display().to_string(), line, message: message.into() }
    }

    fn model(path: &Path, source: slmfic_core::Error) -> Self {
        LoadError::Model { path: path.display().to_string(), source }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub response: String,
    /// Covariate columns; `None` takes every column except the response.
    pub columns: Option<Vec<String>>,
    pub row_normalize: bool,
}

/// A numeric CSV table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

fn open(path: &Path) -> Result<File, LoadError> {
    File::open(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })
}

fn csv_error(path: &Path, e: csv::Error) -> LoadError {
    let line = e.position().map_or(0, |p| p.line());
    LoadError::parse(path, line, e.to_string())
}

fn parse_number(path: &Path, line: u64, field: &str) -> Result<f64, LoadError> {
    let v: f64 = field.parse().map_err(|_| LoadError::parse(path, line, format!("{field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(LoadError::parse(path, line, format!("{field:?} is not finite")));
    }
    Ok(v)
}

pub fn read_table(path: &Path) -> Result<Table, LoadError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record.iter().map(|f| parse_number(path, line, f)).collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

/// Reads a weights file for `n` units.
pub fn load_weights(path: &Path, n: usize, row_normalize: bool) -> Result<SpatialWeights, LoadError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(open(path)?);
    let records = reader.records().collect::<Result<Vec<_>, _>>().map_err(|e| csv_error(path, e))?;
    let line_of = |r: &csv::StringRecord| r.position().map_or(0, |p| p.line());
    let is_header = records.first().and_then(|r| r.get(0)).is_some_and(|f| f.parse::<f64>().is_err());

    let mut m = DMatrix::zeros(n, n);
    if is_header {
        for r in &records[1..] {
            let line = line_of(r);
            if r.len() != 2 && r.len() != 3 {
                return Err(LoadError::parse(path, line, format!("edge has {} fields, expected i,j[,w]", r.len())));
            }
            let index = |k: usize| -> Result<usize, LoadError> {
                let f = &r[k];
                let i: usize =
                    f.parse().map_err(|_| LoadError::parse(path, line, format!("{f:?} is not a unit index")))?;
                if i >= n {
                    return Err(LoadError::parse(path, line, format!("unit index {i} out of range for {n} units")));
                }
                Ok(i)
            };
            let (i, j) = (index(0)?, index(1)?);
            let w = if r.len() == 3 { parse_number(path, line, &r[2])? } else { 1.0 };
            if m[(i, j)] != 0.0 {
                return Err(LoadError::parse(path, line, format!("duplicate edge ({i}, {j})")));
            }
            m[(i, j)] = w;
        }
    } else {
        if records.len() != n {
            return Err(LoadError::parse(
                path,
                records.last().map_or(0, line_of),
                format!("dense weights have {} rows, data has {n} units", records.len()),
            ));
        }
        for (i, r) in records.iter().enumerate() {
            let line = line_of(r);
            if r.len() != n {
                return Err(LoadError::parse(path, line, format!("row has {} entries, expected {n}", r.len())));
            }
            for (j, f) in r.iter().enumerate() {
                m[(i, j)] = parse_number(path, line, f)?;
            }
        }
    }
    let a = AdjacencyMatrix::new(m).map_err(|e| LoadError::model(path, e))?;
    let w = if row_normalize { SpatialWeights::row_normalized_from(a) } else { SpatialWeights::unnormalized(a) };
    w.map_err(|e| LoadError::model(path, e))
}

/// Response and covariates from `data_path`, weights from `weights_path`.
pub fn load_dataset(data_path: &Path, weights_path: &Path, options: &LoadOptions) -> Result<Dataset, LoadError> {
    let table = read_table(data_path)?;
    let missing =
        |name: &str| LoadError::MissingColumn { path: data_path.display().to_string(), name: name.to_owned() };
    let y = table.column(&options.response).ok_or_else(|| missing(&options.response))?;
    let names: Vec<String> = match &options.columns {
        Some(c) => c.clone(),
        None => table.headers.iter().filter(|h| **h != options.response).cloned().collect(),
    };
    let n = y.len();
    let mut x = DMatrix::zeros(n, names.len());
    for (j, name) in names.iter().enumerate() {
        let col = table.column(name).ok_or_else(|| missing(name))?;
        x.set_column(j, &DVector::from_vec(col));
    }
    let w = load_weights(weights_path, n, options.row_normalize)?;
    Dataset::new(DVector::from_vec(y), x, Arc::new(w), names).map_err(|e| LoadError::model(data_path, e))
}
