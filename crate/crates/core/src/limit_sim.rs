//! Monte Carlo simulation of the null limit laws of the two statistics.
//!
//! A Wiener path on the grid `j/m` is fed into the very same statistic code
//! used for data, with `W(j/m)` as the prefix sequence and `W(1) − W(j/m)` as
//! the suffix. Self-normalization removes the `1/√m` scale, and the
//! `1/m` Riemann weights cancel between numerator and denominator sums.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::detect::{self, Level, QuantileTable};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_GRID_POINTS: usize = 1000;
pub const DEFAULT_REPS: usize = 100_000;

/// Discretized standard Wiener path, `values[j] = W(j/m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    m: usize,
    values: Vec<f64>,
}

impl WienerPath {
    /// Path from explicit increments (already scaled).
    pub fn from_increments(increments: &[f64]) -> Result<Self> {
        if increments.len() < 2 {
            return Err(Error::InvalidArgument("a path needs at least 2 steps".into()));
        }
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for &x in increments {
            acc += x;
            values.push(acc);
        }
        Ok(Self {
            m: increments.len(),
            values,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Random walk `m^{-1/2} Σ_{l ≤ j} ξ_l` with iid standard normal `ξ`.
pub fn simulate_path<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<WienerPath> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need m ≥ 2 grid points, got {m}")));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let increments: Vec<f64> = (0..m)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    WienerPath::from_increments(&increments)
}

/// One draw `(sup, int)` from the limit functionals.
pub fn limit_draw(path: &WienerPath) -> Result<(f64, f64)> {
    let v = path.values();
    let end = v[path.m];
    let suffix: Vec<f64> = v.iter().map(|w| end - w).collect();
    let st = detect::evaluate(v, &suffix)?;
    Ok((st.sup, st.int))
}

/// Draw for replicate `rep` of `(seed, m)`.
pub fn replicate_draw(m: usize, seed: u64, rep: u64) -> Result<(f64, f64)> {
    let mut rng = rng::substream(seed, rep);
    limit_draw(&simulate_path(m, &mut rng)?)
}

/// Simulates `reps` draws and tabulates order-statistic quantiles at `levels`.
/// The sorted draws are kept for p-values.
pub fn simulate_quantiles(m: usize, reps: usize, levels: &[f64], seed: u64) -> Result<QuantileTable> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    let keys: Vec<Level> = levels.iter().map(|&p| Level::new(p)).collect::<Result<_>>()?;
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need m ≥ 2 grid points, got {m}")));
    }
    let draws: Vec<(f64, f64)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| replicate_draw(m, seed, rep))
        .collect::<Result<_>>()?;
    let (sup, int): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();

    let mut table = QuantileTable {
        grid_points: m,
        replications: reps,
        seed: Some(seed),
        quantiles_sup: BTreeMap::new(),
        quantiles_int: BTreeMap::new(),
        sorted_draws_sup: None,
        sorted_draws_int: None,
    }
    .with_draws(sup, int);
    let sup = table.sorted_draws_sup.as_deref().unwrap_or_default();
    let int = table.sorted_draws_int.as_deref().unwrap_or_default();
    let qs: Vec<(Level, f64, f64)> = keys
        .iter()
        .map(|&k| (k, detect::order_statistic(sup, k.value()), detect::order_statistic(int, k.value())))
        .collect();
    for (k, s, i) in qs {
        table.quantiles_sup.insert(k, s);
        table.quantiles_int.insert(k, i);
    }
    if table.low_precision() {
        log::warn!("only {reps} replications: quantile table is low precision");
    }
    Ok(table)
}

const TABLE_HEADER: &str = "# eivcp quantile table v1";

/// Plain-text table: a version line, then `level,sup_quantile,int_quantile,m,reps,seed` rows.
pub fn render_table(table: &QuantileTable) -> String {
    let mut out = String::new();
    out.push_str(TABLE_HEADER);
    out.push('\n');
    if table.low_precision() {
        out.push_str("# low-precision: fewer than 1000 replications\n");
    }
    out.push_str("level,sup_quantile,int_quantile,m,reps,seed\n");
    let seed = table.seed.map(|s| s.to_string()).unwrap_or_default();
    for (level, sup) in &table.quantiles_sup {
        let int = table.quantiles_int.get(level).copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{},{},{}",
            level.value(),
            sup,
            int,
            table.grid_points,
            table.replications,
            seed
        );
    }
    out
}

pub fn write_table(table: &QuantileTable, path: &Path) -> Result<()> {
    std::fs::write(path, render_table(table))?;
    Ok(())
}

/// Parses [`render_table`] output (quantiles only; draws are not stored).
pub fn parse_table(text: &str, origin: &str) -> Result<QuantileTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == TABLE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: origin.into(),
                row: 1,
                msg: format!("expected header `{TABLE_HEADER}`"),
            })
        }
    }
    let mut table = QuantileTable {
        grid_points: 0,
        replications: 0,
        seed: None,
        quantiles_sup: BTreeMap::new(),
        quantiles_int: BTreeMap::new(),
        sorted_draws_sup: None,
        sorted_draws_int: None,
    };
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("level") {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: origin.into(),
            row: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
        let level = Level::new(num(fields[0])?).map_err(|e| bad(e.to_string()))?;
        table.quantiles_sup.insert(level, num(fields[1])?);
        table.quantiles_int.insert(level, num(fields[2])?);
        table.grid_points = int(fields[3])?;
        table.replications = int(fields[4])?;
        table.seed = if fields[5].is_empty() {
            None
        } else {
            Some(fields[5].parse().map_err(|e| bad(format!("seed: {e}")))?)
        };
    }
    if table.quantiles_sup.is_empty() {
        return Err(Error::Parse {
            path: origin.into(),
            row: 0,
            msg: "table has no rows".into(),
        });
    }
    Ok(table)
}

pub fn read_table(path: &Path) -> Result<QuantileTable> {
    let text = std::fs::read_to_string(path)?;
    parse_table(&text, &path.display().to_string())
}
