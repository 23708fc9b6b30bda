//! Plain-text formats used by the command-line tool.
//!
//! * matrices: headerless CSV, one row per line, entries written as `{:.16e}`
//!   (17 significant digits, so a write/read round trip is exact);
//! * completion observations: headerless `i,j,y` triplets with 0-based indices;
//! * configuration: `key = value` lines, `#` starts a comment.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::matcore::DenseMatrix;

fn parse_f64(field: &str, line: usize, col: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .or_else(|_| invalid(format!("line {line}, column {col}: cannot parse {:?} as a number", field.trim())))?;
    if !v.is_finite() {
        return invalid(format!("line {line}, column {col}: value is not finite"));
    }
    Ok(v)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

pub fn parse_matrix_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, l) in content_lines(text) {
        let row = l.split(',').enumerate().map(|(c, f)| parse_f64(f, line, c + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return invalid(format!("line {line}: expected {} columns, found {}", first.len(), row.len()));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return invalid("matrix file is empty");
    }
    DenseMatrix::from_rows(&rows)
}

pub fn format_matrix_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

pub fn write_matrix_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    Ok(fs::write(path, format_matrix_csv(m))?)
}

/// Observed cells and responses of a completion problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Triplets {
    pub cells: Vec<(usize, usize)>,
    pub responses: Vec<f64>,
}

/// Parses `i,j,y` lines. With `dims = Some((d1, d2))` indices must lie in range.
pub fn parse_triplets(text: &str, dims: Option<(usize, usize)>) -> Result<Triplets> {
    let mut cells = Vec::new();
    let mut responses = Vec::new();
    for (row, (line, l)) in content_lines(text).enumerate() {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != 3 {
            return invalid(format!("row {} (line {line}): expected i,j,y, found {} fields", row + 1, fields.len()));
        }
        let idx = |f: &str, what: &str| -> Result<usize> {
            f.trim()
                .parse::<usize>()
                .or_else(|_| invalid(format!("row {} (line {line}): {what} index {:?} is not a nonnegative integer", row + 1, f.trim())))
        };
        let (i, j) = (idx(fields[0], "row")?, idx(fields[1], "column")?);
        if let Some((d1, d2)) = dims {
            if i >= d1 || j >= d2 {
                return invalid(format!("row {} (line {line}): index ({i}, {j}) outside {d1}x{d2}", row + 1));
            }
        }
        cells.push((i, j));
        responses.push(parse_f64(fields[2], line, 3)?);
    }
    if cells.is_empty() {
        return invalid("triplet file has no observations");
    }
    Ok(Triplets { cells, responses })
}

pub fn read_triplets(path: &Path, dims: Option<(usize, usize)>) -> Result<Triplets> {
    parse_triplets(&fs::read_to_string(path)?, dims)
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (line, l) in content_lines(text) {
        let l = l.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let Some((k, v)) = l.split_once('=') else {
            return invalid(format!("config line {line}: expected key = value"));
        };
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config(&fs::read_to_string(path)?)
}
