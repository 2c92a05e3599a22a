//! Line-oriented coordinate-list text format.
//!
//! Each data line is `i_1 ... i_K value`, whitespace separated, with 0-based
//! node indices. Lines whose first non-blank character is `#` and blank lines
//! are skipped. Values are written with Rust's shortest round-trip float
//! rendering, so write/parse reproduces every value bit for bit.

use std::io::{BufRead, Write};

use super::{ObservedEntry, TensorShape, ValueKind};
use crate::error::{Error, Result};

fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(n, line)| match line {
            Err(e) => Some(Err(Error::Io(e))),
            Ok(line) => {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    None
                } else {
                    Some(Ok((n + 1, trimmed.to_string())))
                }
            }
        })
}

fn parse_index(field: &str, line: usize) -> Result<usize> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("'{field}' is not a non-negative integer index"),
    })
}

pub fn parse_coo<R: BufRead>(
    reader: R,
    shape: &TensorShape,
    kind: ValueKind,
) -> Result<Vec<ObservedEntry>> {
    let k = shape.mode_count();
    let mut out = Vec::new();
    for item in data_lines(reader) {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != k + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", k + 1, fields.len()),
            });
        }
        let index = fields[..k]
            .iter()
            .map(|f| parse_index(f, line))
            .collect::<Result<Vec<_>>>()?;
        let value: f64 = fields[k].parse().map_err(|_| Error::Parse {
            line,
            message: format!("'{}' is not a number", fields[k]),
        })?;
        shape
            .check_index(&index)
            .map_err(|e| Error::Bounds(format!("line {line}: {e}")))?;
        kind.check_value(value)
            .map_err(|e| Error::Value(format!("line {line}: {e}")))?;
        out.push(ObservedEntry { index, value });
    }
    Ok(out)
}

/// Reads index tuples for prediction; a trailing value column is allowed
/// and ignored.
pub fn parse_index_lines<R: BufRead>(reader: R, shape: &TensorShape) -> Result<Vec<Vec<usize>>> {
    let k = shape.mode_count();
    let mut out = Vec::new();
    for item in data_lines(reader) {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != k && fields.len() != k + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {k} or {} fields, found {}", k + 1, fields.len()),
            });
        }
        let index = fields[..k]
            .iter()
            .map(|f| parse_index(f, line))
            .collect::<Result<Vec<_>>>()?;
        shape
            .check_index(&index)
            .map_err(|e| Error::Bounds(format!("line {line}: {e}")))?;
        out.push(index);
    }
    Ok(out)
}

pub fn write_coo<W: Write>(mut writer: W, entries: &[ObservedEntry]) -> Result<()> {
    for e in entries {
        for i in &e.index {
            write!(writer, "{i} ")?;
        }
        writeln!(writer, "{}", e.value)?;
    }
    Ok(())
}
