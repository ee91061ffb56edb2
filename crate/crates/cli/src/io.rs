//! CSV input and CSV/JSON output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Tokens read as a missing value.
pub fn is_missing(token: &str) -> bool {
    let t = token.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// One numeric column read from a CSV file; `None` marks a missing entry.
pub struct Column {
    pub values: Vec<Option<f64>>,
    /// 1-based file line of each value.
    pub lines: Vec<u64>,
}

impl Column {
    /// All values, failing on the first missing one.
    pub fn complete(&self) -> Result<Vec<f64>, CliError> {
        self.values
            .iter()
            .zip(&self.lines)
            .map(|(v, line)| {
                v.ok_or_else(|| {
                    CliError::Input(format!(
                        "line {line}: missing value (run `preprocess` first)"
                    ))
                })
            })
            .collect()
    }
}

/// Splits one line into trimmed fields; a blank line is one empty field.
fn fields(line: &str) -> Result<Vec<String>, csv::Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(line.as_bytes());
    match reader.records().next() {
        Some(record) => Ok(record?.iter().map(str::to_owned).collect()),
        None => Ok(vec![String::new()]),
    }
}

/// Reads a numeric column. With a header row the column is `name`, or `x`
/// when present, or the first column; without one it is the first column.
/// Lines starting with `#` are skipped.
pub fn read_column(path: &Path, name: Option<&str>) -> Result<Column, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let all: Vec<&str> = text.lines().collect();
    // trailing blank lines are not data
    let n_lines = all
        .iter()
        .rposition(|l| !l.trim().is_empty())
        .map_or(0, |k| k + 1);

    let mut index = 0usize;
    let mut values = Vec::new();
    let mut line_numbers = Vec::new();
    let mut first = true;
    for (k, raw) in all[..n_lines].iter().enumerate() {
        let line = k as u64 + 1;
        if raw.trim_start().starts_with('#') {
            continue;
        }
        let record = fields(raw).map_err(|e| CliError::Input(format!("line {line}: {e}")))?;
        if first {
            first = false;
            let looks_like_header = record
                .iter()
                .any(|f| !is_missing(f) && f.parse::<f64>().is_err());
            if looks_like_header {
                index = match name {
                    Some(n) => record.iter().position(|f| f == n).ok_or_else(|| {
                        CliError::Input(format!("line {line}: no column named `{n}`"))
                    })?,
                    None => record.iter().position(|f| f == "x").unwrap_or(0),
                };
                continue;
            }
            if let Some(n) = name {
                return Err(CliError::Input(format!(
                    "line {line}: column `{n}` requested but the file has no header"
                )));
            }
        }
        let field = match record.get(index) {
            Some(f) => f.as_str(),
            // a blank line in a multi-column file
            None if record.len() == 1 && record[0].is_empty() => "",
            None => {
                return Err(CliError::Input(format!(
                    "line {line}: expected at least {} fields",
                    index + 1
                )))
            }
        };
        let value = if is_missing(field) {
            None
        } else {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::Input(format!("line {line}: `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "line {line}: `{field}` is not finite"
                )));
            }
            Some(v)
        };
        values.push(value);
        line_numbers.push(line);
    }
    if values.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Ok(Column {
        values,
        lines: line_numbers,
    })
}

/// `<prefix><suffix>`, e.g. `run` + `.json`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

/// A cell of an output table. Floats print in shortest round-trip form.
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:?}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<Cell>>) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Internal(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(err)?;
    }
    w.flush()
        .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}
