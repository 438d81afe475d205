//! Matrix and vector files: headerless row-major CSV, or JSON arrays.
//!
//! The format is picked by extension (`.json` → JSON, anything else → CSV);
//! text readers sniff for a leading `[`. Numbers are written with 17
//! significant digits so they round-trip exactly.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `x` with 17 significant digits (scientific notation).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn is_json_text(text: &str) -> bool {
    text.trim_start().starts_with('[')
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = if is_json_text(text) {
        serde_json::from_str(text)?
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("not a number: {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        rows
    };
    rows_to_matrix(&rows)
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::invalid("matrix is empty"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// A vector from one CSV column, one CSV row, or a flat JSON array.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    if is_json_text(text) {
        if let Ok(v) = serde_json::from_str::<Vec<f64>>(text) {
            return Ok(v);
        }
    }
    let m = parse_matrix(text)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(m.iter().copied().collect())
    } else {
        Err(Error::invalid(format!(
            "expected a vector, got a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn vector_to_csv(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f64(x) + "\n").collect()
}

pub fn matrix_to_json(m: &DMatrix<f64>) -> Result<String> {
    Ok(serde_json::to_string(&matrix_to_rows(m))?)
}

/// Write CSV or JSON depending on the extension of `path`.
pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let text = if path.extension().is_some_and(|e| e == "json") {
        matrix_to_json(m)?
    } else {
        matrix_to_csv(m)
    };
    fs::write(path, text)?;
    Ok(())
}
