//! CSV input: a header row naming `x…` columns, then `y` (or `y1…yq`),
//! optionally exact-regressor columns; Σ comes from a headerless square CSV.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::Dataset;

/// Parsed input file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Columns named as exact regressors, in the requested order.
    pub exact: Option<DMatrix<f64>>,
    pub x_names: Vec<String>,
    pub y_names: Vec<String>,
    pub sigma_from_file: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    X,
    Y,
    Exact(usize),
}

fn is_named(name: &str, prefix: char) -> bool {
    let lower = name.to_ascii_lowercase();
    let mut chars = lower.chars();
    chars.next() == Some(prefix) && chars.all(|c| c.is_ascii_digit() || c == '_')
}

fn parse_cell(text: &str, path: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = text.trim().parse().map_err(|_| Error::Parse {
        path: path.into(),
        row,
        msg: format!("column `{col}`: `{}` is not a number", text.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.into(),
            row,
            msg: format!("column `{col}`: non-finite value `{}`", text.trim()),
        });
    }
    Ok(v)
}

/// Reads a data file and an optional Σ file. Row numbers in errors are file
/// line numbers, the header being line 1.
pub fn ingest_csv(path: &Path, sigma_path: Option<&Path>, exact_cols: &[String]) -> Result<Ingested> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    ingest_str(&text, &origin, sigma_path, exact_cols)
}

/// [`ingest_csv`] on in-memory text.
pub fn ingest_str(text: &str, origin: &str, sigma_path: Option<&Path>, exact_cols: &[String]) -> Result<Ingested> {
    let parse_err = |row: usize, msg: String| Error::Parse {
        path: origin.into(),
        row,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(1, "missing header row".into()));
    }

    let mut roles = Vec::with_capacity(header.len());
    for name in &header {
        let role = if let Some(k) = exact_cols.iter().position(|c| c == name) {
            Role::Exact(k)
        } else if is_named(name, 'x') {
            Role::X
        } else if is_named(name, 'y') {
            Role::Y
        } else {
            return Err(parse_err(
                1,
                format!("column `{name}` is neither x…, y… nor a listed exact regressor"),
            ));
        };
        roles.push(role);
    }
    for c in exact_cols {
        if !header.contains(c) {
            return Err(parse_err(1, format!("exact regressor column `{c}` not found")));
        }
    }
    let x_names: Vec<String> = header.iter().zip(&roles).filter(|(_, r)| **r == Role::X).map(|(h, _)| h.clone()).collect();
    let y_names: Vec<String> = header.iter().zip(&roles).filter(|(_, r)| **r == Role::Y).map(|(h, _)| h.clone()).collect();
    if x_names.is_empty() || y_names.is_empty() {
        return Err(parse_err(1, "need at least one x column and one y column".into()));
    }

    let (p, q, w) = (x_names.len(), y_names.len(), exact_cols.len());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut n = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |pos| pos.line() as usize);
            parse_err(row, e.to_string())
        })?;
        let row = record.position().map_or(n + 2, |pos| pos.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != header.len() {
            return Err(parse_err(
                row,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let mut wrow = vec![0.0; w];
        for ((cell, role), name) in record.iter().zip(&roles).zip(&header) {
            let v = parse_cell(cell, origin, row, name)?;
            match role {
                Role::X => xs.push(v),
                Role::Y => ys.push(v),
                Role::Exact(k) => wrow[*k] = v,
            }
        }
        ws.extend(wrow);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientData(format!("{origin} has no data rows")));
    }

    let x = DMatrix::from_row_slice(n, p, &xs);
    let y = DMatrix::from_row_slice(n, q, &ys);
    let exact = (w > 0).then(|| DMatrix::from_row_slice(n, w, &ws));
    let sigma = match sigma_path {
        Some(sp) => read_sigma(sp, p + q)?,
        None => {
            log::info!("no Σ file given; using the identity");
            SymMatrix::identity(p + q)
        }
    };
    Ok(Ingested {
        dataset: Dataset::new(x, y, sigma)?,
        exact,
        x_names,
        y_names,
        sigma_from_file: sigma_path.is_some(),
    })
}

/// Headerless `dim × dim` numeric CSV.
pub fn read_sigma(path: &Path, dim: usize) -> Result<SymMatrix> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    parse_sigma(&text, &origin, dim)
}

pub fn parse_sigma(text: &str, origin: &str, dim: usize) -> Result<SymMatrix> {
    let mut values = Vec::with_capacity(dim * dim);
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim {
            return Err(Error::Parse {
                path: origin.into(),
                row: i + 1,
                msg: format!("expected {dim} fields, found {}", fields.len()),
            });
        }
        for (j, f) in fields.iter().enumerate() {
            values.push(parse_cell(f, origin, i + 1, &format!("{}", j + 1))?);
        }
        rows += 1;
    }
    if rows != dim {
        return Err(Error::Parse {
            path: origin.into(),
            row: rows,
            msg: format!("Σ must have {dim} rows, found {rows}"),
        });
    }
    SymMatrix::new(DMatrix::from_row_slice(dim, dim, &values))
}
