use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

/// Floats in CSV output carry 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// One numeric column from a CSV file. A non-numeric first row is treated as
/// a header; `column` selects by header name or zero-based index.
pub fn read_column(path: &Path, column: Option<&str>) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut idx: Option<usize> = column.and_then(|c| c.parse().ok());
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if row == 0 && rec.iter().all(|f| f.parse::<f64>().is_err()) {
            if let Some(name) = column.filter(|_| idx.is_none()) {
                idx = rec.iter().position(|f| f == name);
                if idx.is_none() {
                    return Err(CliError::Validation(format!("{}: no column named `{name}`", path.display())));
                }
            }
            continue;
        }
        if idx.is_none() && column.is_some() {
            return Err(CliError::Validation(format!(
                "{}: column `{}` needs a header row",
                path.display(),
                column.unwrap_or_default()
            )));
        }
        let i = idx.unwrap_or(0);
        let field = rec
            .get(i)
            .ok_or_else(|| CliError::Validation(format!("{}: row {} has no column {i}", path.display(), row + 1)))?;
        let v: f64 = field.parse().map_err(|_| {
            CliError::Validation(format!("{}: row {}: `{field}` is not a number", path.display(), row + 1))
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!("{}: no numeric rows", path.display())));
    }
    Ok(out)
}

/// Writes to `path`, or stdout when absent.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, CliError> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(sink(path)?))
}

pub fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("writing CSV: {e}"))
}
