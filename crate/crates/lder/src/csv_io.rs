//! CSV datasets: one header row, numeric cells, empty cell = missing feature.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use lder_core::{Dataset, Matrix};

use crate::error::{Error, Result};

/// Which column holds the regression target.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TargetColumn {
    #[default]
    Last,
    Name(String),
}

impl TargetColumn {
    pub fn from_option(name: Option<&str>) -> Self {
        match name {
            Some(n) => TargetColumn::Name(n.to_string()),
            None => TargetColumn::Last,
        }
    }
}

/// Loads `path`; the dataset is named after the file stem.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    read_csv(file, &path.display().to_string(), &name, target)
}

pub fn read_csv(reader: impl Read, source_name: &str, name: &str, target: &TargetColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, column: &str, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        column: column.to_string(),
        message,
    };
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, "", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 2 {
        return Err(Error::Format(format!(
            "{source_name}: need at least one feature column and a target column"
        )));
    }
    let target_idx = match target {
        TargetColumn::Last => headers.len() - 1,
        TargetColumn::Name(n) => headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| parse_err(1, n, "target column not found in header".to_string()))?,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let n = feature_names.len();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, "", e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(parse_err(
                line,
                "",
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            let col = &headers[j];
            let value = if cell.is_empty() {
                if j == target_idx {
                    return Err(parse_err(line, col, "target value is missing".to_string()));
                }
                f64::NAN
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, col, format!("not a number: `{cell}`")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, col, format!("non-finite value `{cell}`")));
                }
                v
            };
            if j == target_idx {
                y.push(value);
            } else {
                x.push(value);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Format(format!("{source_name}: no data rows")));
    }
    let x = Matrix::from_row_major(y.len(), n, x)?;
    Ok(Dataset::new(name, x, y, feature_names)?)
}

/// Writes features then the target as the last column. Missing features are
/// written as empty cells; values use the shortest round-trip representation.
pub fn write_csv(path: impl AsRef<Path>, d: &Dataset, target_name: &str) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(file, d, target_name).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_dataset(writer: impl Write, d: &Dataset, target_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Format(format!("csv write: {e}"));
    let mut header: Vec<&str> = d.feature_names.iter().map(String::as_str).collect();
    header.push(target_name);
    w.write_record(&header).map_err(csv_err)?;
    let mut cells: Vec<String> = Vec::with_capacity(header.len());
    for (row, y) in d.x.iter_rows().zip(&d.y) {
        cells.clear();
        cells.extend(row.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        cells.push(y.to_string());
        w.write_record(&cells).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
