//! Matrix and kernel files.
//!
//! CSV holds one matrix: one row per line, comma-separated, `#` starts a
//! comment line. JSON holds either `{"n": 3, "rows": [[...], ...]}` or
//! `{"slices": [<matrix>, ...], "periodic": true}`.

use std::path::Path;

use coupling_rate::{ChainError, StochasticMatrix, TimeVaryingKernel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: cannot read: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}:{col}: {msg}")]
    Parse { path: String, line: usize, col: usize, msg: String },
    #[error("{path}: {source}")]
    Invalid { path: String, source: ChainError },
    #[error("{path}: {msg}")]
    Shape { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixFile {
    Matrix(StochasticMatrix),
    Kernel { slices: Vec<StochasticMatrix>, periodic: bool },
}

impl MatrixFile {
    /// The single matrix, accepting a one-slice kernel.
    pub fn into_matrix(self) -> Option<StochasticMatrix> {
        match self {
            MatrixFile::Matrix(p) => Some(p),
            MatrixFile::Kernel { mut slices, .. } if slices.len() == 1 => slices.pop(),
            MatrixFile::Kernel { .. } => None,
        }
    }

    /// Slices plus the file's periodic flag; a bare matrix is one periodic slice.
    pub fn into_slices(self) -> (Vec<StochasticMatrix>, bool) {
        match self {
            MatrixFile::Matrix(p) => (vec![p], true),
            MatrixFile::Kernel { slices, periodic } => (slices, periodic),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
}

impl From<&StochasticMatrix> for MatrixJson {
    fn from(p: &StochasticMatrix) -> Self {
        MatrixJson { n: p.n(), rows: p.to_rows() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum JsonDoc {
    Kernel {
        slices: Vec<MatrixJson>,
        #[serde(default)]
        periodic: bool,
    },
    Matrix(MatrixJson),
}

pub fn detect_format(path: &Path, text: &str) -> FileFormat {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("json") => FileFormat::Json,
        Some("csv") => FileFormat::Csv,
        _ if text.trim_start().starts_with('{') => FileFormat::Json,
        _ => FileFormat::Csv,
    }
}

pub fn read_file(path: &Path) -> Result<MatrixFile, InputError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| InputError::Io { path: name.clone(), source })?;
    parse_str(&name, &text, detect_format(path, &text))
}

pub fn parse_str(name: &str, text: &str, format: FileFormat) -> Result<MatrixFile, InputError> {
    match format {
        FileFormat::Csv => parse_csv(name, text).map(MatrixFile::Matrix),
        FileFormat::Json => parse_json(name, text),
    }
}

pub fn parse_csv(name: &str, text: &str) -> Result<StochasticMatrix, InputError> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        let mut col = 1;
        for field in line.split(',') {
            let lead = field.len() - field.trim_start().len();
            let value = field.trim();
            let x: f64 = value.parse().map_err(|_| InputError::Parse {
                path: name.into(),
                line: ln + 1,
                col: col + lead,
                msg: if value.is_empty() { "empty field".into() } else { format!("not a number: {value:?}") },
            })?;
            row.push(x);
            col += field.chars().count() + 1;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(InputError::Parse { path: name.into(), line: 1, col: 1, msg: "no matrix rows".into() });
    }
    matrix(name, rows)
}

fn matrix(name: &str, rows: Vec<Vec<f64>>) -> Result<StochasticMatrix, InputError> {
    StochasticMatrix::new(rows).map_err(|source| InputError::Invalid { path: name.into(), source })
}

fn from_json(name: &str, m: MatrixJson) -> Result<StochasticMatrix, InputError> {
    if m.n != m.rows.len() {
        return Err(InputError::Shape { path: name.into(), msg: format!("n = {} but {} rows given", m.n, m.rows.len()) });
    }
    matrix(name, m.rows)
}

pub fn parse_json(name: &str, text: &str) -> Result<MatrixFile, InputError> {
    let doc: JsonDoc = serde_json::from_str(text).map_err(|e| InputError::Parse {
        path: name.into(),
        line: e.line(),
        col: e.column(),
        msg: e.to_string(),
    })?;
    match doc {
        JsonDoc::Matrix(m) => from_json(name, m).map(MatrixFile::Matrix),
        JsonDoc::Kernel { slices, periodic } => {
            if slices.is_empty() {
                return Err(InputError::Invalid { path: name.into(), source: ChainError::EmptyKernel });
            }
            let slices = slices.into_iter().map(|m| from_json(name, m)).collect::<Result<Vec<_>, _>>()?;
            if let Some(bad) = slices.iter().find(|s| s.n() != slices[0].n()) {
                return Err(InputError::Shape {
                    path: name.into(),
                    msg: format!("slices have {} and {} states", slices[0].n(), bad.n()),
                });
            }
            Ok(MatrixFile::Kernel { slices, periodic })
        }
    }
}

/// Builds the kernel, unrolling a periodic sequence into `steps` explicit
/// slices when periodicity is switched off.
pub fn build_kernel(
    slices: Vec<StochasticMatrix>,
    periodic: bool,
    unroll_to: Option<usize>,
) -> Result<TimeVaryingKernel, ChainError> {
    match (periodic, unroll_to) {
        (true, _) => TimeVaryingKernel::periodic(slices),
        (false, Some(steps)) if steps > slices.len() => {
            let t = slices.len();
            TimeVaryingKernel::finite((0..steps).map(|s| slices[s % t].clone()).collect())
        }
        (false, _) => TimeVaryingKernel::finite(slices),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_comments() {
        let p = parse_csv("x", "# two states\n0.65, 0.35\n\n0.35,0.65\n").unwrap();
        assert_eq!(p.get(1, 0), 0.35);
    }

    #[test]
    fn csv_reports_position() {
        match parse_csv("x", "0.5,0.5\n0.5, abc\n") {
            Err(InputError::Parse { line, col, .. }) => assert_eq!((line, col), (2, 6)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_row_sum_is_validated() {
        let e = parse_csv("x", "0.5,0.6\n0.5,0.5\n").unwrap_err();
        assert!(matches!(e, InputError::Invalid { source: ChainError::RowSumViolation(0, _), .. }));
    }

    #[test]
    fn json_matrix_and_kernel() {
        let m = parse_json("x", r#"{"n": 2, "rows": [[1, 0], [0.5, 0.5]]}"#).unwrap();
        assert!(matches!(m, MatrixFile::Matrix(_)));
        let k = parse_json("x", r#"{"slices": [{"n": 2, "rows": [[1, 0], [0.5, 0.5]]}], "periodic": true}"#).unwrap();
        assert!(matches!(k, MatrixFile::Kernel { periodic: true, .. }));
        assert!(k.into_matrix().is_some());
    }

    #[test]
    fn json_errors_carry_position() {
        match parse_json("x", "{\"n\": 2,\n \"rows\": [[1, 0], [0.5 0.5]]}") {
            Err(InputError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_json("x", r#"{"n": 3, "rows": [[1, 0], [0, 1]]}"#),
            Err(InputError::Shape { .. })
        ));
    }

    #[test]
    fn unrolling_repeats_the_cycle() {
        let a = StochasticMatrix::identity(2);
        let b = StochasticMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let k = build_kernel(vec![a.clone(), b.clone()], false, Some(5)).unwrap();
        assert_eq!(k.horizon(), Some(5));
        assert_eq!(k.slice(4).unwrap(), &a);
        assert_eq!(k.slice(3).unwrap(), &b);
    }
}
