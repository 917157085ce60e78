//! Matrix and dataset readers, plus CSV/JSON writers.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use mgig_core::linalg::{cholesky, SymmetricMatrix};
use mgig_core::{ObservedMatrix, SpdMatrix};

use crate::error::{CliError, CliResult};

fn parse_cell(cell: &str, path: &Path, line: usize) -> CliResult<Option<f64>> {
    let t = cell.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    t.parse::<f64>().map(Some).map_err(|_| {
        CliError::validation(format!(
            "InvalidInput: '{t}' on line {line} of {} is not a number",
            path.display()
        ))
    })
}

/// Dense CSV without a header; empty cells and `NaN` are missing.
pub fn read_dense_csv(path: &Path) -> CliResult<(DMatrix<f64>, DMatrix<bool>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|c| parse_cell(c, path, i + 1))
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(CliError::validation(format!(
            "InvalidInput: {} is empty",
            path.display()
        )));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(CliError::validation(format!(
            "InvalidInput: line {} of {} has {} cells, expected {ncols}",
            i + 1,
            path.display(),
            rows[i].len()
        )));
    }
    let values = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c].unwrap_or(0.0));
    let mask = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c].is_some());
    Ok((values, mask))
}

/// One observed entry of a triplets file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// `row,col,value` triplets, 0-indexed, with a one-line header.
pub fn read_triplets(path: &Path) -> CliResult<Vec<Triplet>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let t: Triplet = rec?;
        if !seen.insert((t.row, t.col)) {
            return Err(CliError::validation(format!(
                "DuplicateEntry: ({}, {}) appears more than once in {}",
                t.row,
                t.col,
                path.display()
            )));
        }
        if !t.value.is_finite() {
            return Err(CliError::validation(format!(
                "InvalidInput: entry ({}, {}) is not finite",
                t.row, t.col
            )));
        }
        out.push(t);
    }
    Ok(out)
}

/// Dense values and mask from triplets; the shape defaults to the largest
/// indices present.
pub fn triplets_to_matrix(
    triplets: &[Triplet],
    shape: Option<(usize, usize)>,
) -> CliResult<(DMatrix<f64>, DMatrix<bool>)> {
    let (n, m) = match shape {
        Some(s) => s,
        None => (
            triplets.iter().map(|t| t.row + 1).max().unwrap_or(0),
            triplets.iter().map(|t| t.col + 1).max().unwrap_or(0),
        ),
    };
    let mut values = DMatrix::zeros(n, m);
    let mut mask = DMatrix::from_element(n, m, false);
    for t in triplets {
        if t.row >= n || t.col >= m {
            return Err(CliError::validation(format!(
                "InvalidInput: entry ({}, {}) is outside the {n} × {m} shape",
                t.row, t.col
            )));
        }
        values[(t.row, t.col)] = t.value;
        mask[(t.row, t.col)] = true;
    }
    Ok((values, mask))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    DenseCsv,
    Triplets,
}

pub fn read_observed(path: &Path, format: DataFormat, shape: Option<(usize, usize)>) -> CliResult<ObservedMatrix> {
    let (values, mask) = match format {
        DataFormat::DenseCsv => read_dense_csv(path)?,
        DataFormat::Triplets => triplets_to_matrix(&read_triplets(path)?, shape)?,
    };
    Ok(ObservedMatrix::ingest(values, mask)?)
}

/// A fully observed, symmetric, positive definite matrix from dense CSV.
pub fn read_spd(path: &Path) -> CliResult<SpdMatrix> {
    let (values, mask) = read_dense_csv(path)?;
    if mask.iter().any(|m| !m) {
        return Err(CliError::validation(format!(
            "InvalidInput: {} has missing cells",
            path.display()
        )));
    }
    if !values.is_square() {
        return Err(CliError::validation(format!(
            "InvalidInput: {} is {} × {}, not square",
            path.display(),
            values.nrows(),
            values.ncols()
        )));
    }
    let asym = (&values - values.transpose()).amax();
    if asym > 1e-12 * values.amax().max(1.0) {
        return Err(CliError::validation(format!(
            "InvalidInput: {} is not symmetric (max asymmetry {asym:e})",
            path.display()
        )));
    }
    Ok(cholesky(&SymmetricMatrix::from_upper(values)?)?)
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Destination for single-document output: a file or stdout.
pub fn write_text(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn matrix_csv(m: &DMatrix<f64>) -> CliResult<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in matrix_rows(m) {
        w.serialize(row)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| CliError::validation(e.to_string()))?)
        .map_err(|e| CliError::validation(e.to_string()))
}

/// Writes `header` explicitly so an empty table still has its header line.
pub fn write_records<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(File::create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `--out-dir` if given, otherwise `$MGIG_OUT_DIR`, otherwise the current
/// directory.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os("MGIG_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
