//! Headerless CSV matrices: count matrices (confusions) and channel matrices.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

fn parse_rows<T: std::str::FromStr>(text: &str, path: &Path, what: &str) -> Result<Vec<Vec<T>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<Vec<T>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<T>()
                    .map_err(|_| parse_err(line, format!("invalid {what} '{}'", f.trim())))
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "empty matrix".into()));
    }
    Ok(rows)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses non-negative integer counts, one matrix row per line.
pub fn parse_count_matrix(text: &str, path: impl AsRef<Path>) -> Result<Vec<Vec<u64>>> {
    parse_rows(text, path.as_ref(), "count")
}

pub fn load_count_matrix(path: impl AsRef<Path>) -> Result<Vec<Vec<u64>>> {
    let path = path.as_ref();
    parse_count_matrix(&read(path)?, path)
}

/// Parses a real matrix and normalizes each row to sum to one, so both
/// transition probabilities and raw counts are accepted.
pub fn parse_channel_matrix(text: &str, path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let rows: Vec<Vec<f64>> = parse_rows(text, path, "entry")?;
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::invalid(format!("{}: row {i} has a negative or non-finite entry", path.display())));
            }
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                return Err(Error::invalid(format!("{}: row {i} is all zero", path.display())));
            }
            Ok(row.iter().map(|x| x / sum).collect())
        })
        .collect()
}

pub fn load_channel_matrix(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    parse_channel_matrix(&read(path)?, path)
}

pub fn count_matrix_csv(counts: &[Vec<u64>]) -> String {
    let mut out = String::new();
    for row in counts {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
