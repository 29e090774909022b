//! Plain CSV readers and writers for the matrices and vectors the tools
//! exchange.
//!
//! The dialect is deliberately small: comma separators, optional single
//! header line, no quoting, no escapes. Numbers are written with Rust's
//! shortest round-trip formatting, so write → read → write is byte-stable.
//! Parse failures report the 1-based line and field position.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, column: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        column,
        reason: reason.into(),
    }
}

/// Lines of the file paired with their 1-based numbers, header dropped on
/// request, blank lines skipped, CR stripped.
fn data_lines(raw: &str, skip_header: bool) -> Vec<(usize, &str)> {
    raw.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .skip(if skip_header { 1 } else { 0 })
        .collect()
}

fn parse_field(path: &Path, line: usize, column: usize, field: &str) -> Result<f64> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Err(parse_err(path, line, column, "empty field"));
    }
    trimmed
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, column, format!("not a number: {trimmed:?}")))
}

/// Reads a rectangular matrix, one row per line.
pub fn read_matrix(path: &Path, skip_header: bool) -> Result<Array2<f64>> {
    let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let lines = data_lines(&raw, skip_header);
    if lines.is_empty() {
        return Err(parse_err(path, 1, 1, "no data rows"));
    }

    let mut width = 0;
    let mut values = Vec::new();
    for (row_idx, (line_no, line)) in lines.iter().enumerate() {
        let mut count = 0;
        for (field_idx, field) in line.split(',').enumerate() {
            values.push(parse_field(path, *line_no, field_idx + 1, field)?);
            count += 1;
        }
        if row_idx == 0 {
            width = count;
        } else if count != width {
            return Err(parse_err(
                path,
                *line_no,
                count.min(width) + 1,
                format!("expected {width} fields, found {count}"),
            ));
        }
    }

    let height = lines.len();
    Array2::from_shape_vec((height, width), values)
        .map_err(|e| parse_err(path, 1, 1, format!("shape error: {e}")))
}

pub fn write_matrix(path: &Path, values: &ArrayView2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in values.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&v.to_string());
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a numeric vector. A single data line is read as comma-separated
/// values; several lines are read as a column of one value each.
pub fn read_vector(path: &Path, skip_header: bool) -> Result<Vec<f64>> {
    let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let lines = data_lines(&raw, skip_header);
    match lines.as_slice() {
        [] => Err(parse_err(path, 1, 1, "no data rows")),
        [(line_no, line)] => line
            .split(',')
            .enumerate()
            .map(|(i, f)| parse_field(path, *line_no, i + 1, f))
            .collect(),
        rest => rest
            .iter()
            .map(|(line_no, line)| {
                if line.contains(',') {
                    return Err(parse_err(
                        path,
                        *line_no,
                        2,
                        "column-layout vector rows must hold a single value",
                    ));
                }
                parse_field(path, *line_no, 1, line)
            })
            .collect(),
    }
}

/// Writes a vector as one comma-separated line.
pub fn write_vector(path: &Path, values: &[f64]) -> Result<()> {
    let line = values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",");
    fs::write(path, format!("{line}\n")).map_err(|e| io_err(path, e))
}

/// Reads class indices, one per line.
pub fn read_class_indices(path: &Path, skip_header: bool) -> Result<Vec<usize>> {
    let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let lines = data_lines(&raw, skip_header);
    if lines.is_empty() {
        return Err(parse_err(path, 1, 1, "no data rows"));
    }
    lines
        .iter()
        .map(|(line_no, line)| {
            let trimmed = line.trim();
            trimmed.parse::<usize>().map_err(|_| {
                parse_err(
                    path,
                    *line_no,
                    1,
                    format!("not a class index: {trimmed:?}"),
                )
            })
        })
        .collect()
}

/// Writes class indices, one per line.
pub fn write_class_indices(path: &Path, indices: &[usize]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = String::new();
    for idx in indices {
        out.push_str(&idx.to_string());
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}
