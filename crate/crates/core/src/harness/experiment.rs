//! Size/power grid: for every scenario cell, simulate replicates, test at
//! several levels and summarize the changepoint estimates.
//!
//! All cells use the same seed, so cells that differ only in δ (or τ) see
//! the same error draws.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{self, TOOL, VERSION};
use crate::datagen::{self, DesignKind, DesignSpec, ErrorProcess, ErrorProcessSpec, Innovation, ScenarioSpec};
use crate::detect::{QuantileTable, StatKind, Statistics};
use crate::diagnostics::{self, CovBlocks, DesignMoments, DetectabilityInput};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

pub const DEFAULT_EXPERIMENT_REPS: usize = 2000;
/// Monte Carlo slack for the monotonicity spot checks.
pub const MONOTONICITY_SLACK: f64 = 0.02;

fn default_tau_frac() -> Vec<f64> {
    vec![0.25, 0.5]
}
fn default_delta() -> Vec<f64> {
    vec![0.0, 0.1, 0.5]
}
fn default_sigma() -> Vec<f64> {
    vec![0.5]
}
fn default_process() -> Vec<ErrorProcess> {
    vec![ErrorProcess::Iid]
}
fn default_innovation() -> Vec<Innovation> {
    vec![Innovation::StandardNormal]
}
fn default_design() -> DesignKind {
    DesignKind::EquidistantLinear
}
fn default_scale() -> f64 {
    100.0
}
fn default_reps() -> usize {
    DEFAULT_EXPERIMENT_REPS
}
fn default_seed() -> u64 {
    super::config::DEFAULT_SEED
}
fn default_alphas() -> Vec<f64> {
    vec![0.01, 0.05, 0.10]
}

/// Scenario grid, read from TOML. δ = 0 entries are H0 cells; δ is applied
/// to every slope coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: Vec<usize>,
    #[serde(default = "default_tau_frac")]
    pub tau_frac: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: Vec<f64>,
    #[serde(default = "default_process")]
    pub process: Vec<ErrorProcess>,
    #[serde(default = "default_innovation")]
    pub innovation: Vec<Innovation>,
    #[serde(default = "default_design")]
    pub design: DesignKind,
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
}

impl ExperimentConfig {
    /// Grid over `n` with every other field at its default.
    pub fn with_n(n: Vec<usize>) -> Self {
        Self {
            n,
            tau_frac: default_tau_frac(),
            delta: default_delta(),
            sigma: default_sigma(),
            process: default_process(),
            innovation: default_innovation(),
            design: default_design(),
            scale: default_scale(),
            beta: None,
            reps: default_reps(),
            seed: default_seed(),
            alphas: default_alphas(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn p(&self) -> Result<usize> {
        match self.design {
            DesignKind::EquidistantLinear => Ok(1),
            DesignKind::PowerCurve => Ok(2),
            DesignKind::Custom => Err(Error::Config("experiments need a generated design".into())),
        }
    }

    pub fn beta(&self) -> Result<Vec<f64>> {
        let p = self.p()?;
        Ok(self.beta.clone().unwrap_or_else(|| vec![1.0; p]))
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p()?;
        if self.beta()?.len() != p {
            return Err(Error::Config(format!("beta must have length {p}")));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be ≥ 1".into()));
        }
        if let Some(&a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Config(format!("alpha {a} outside (0, 1)")));
        }
        if let Some(&f) = self.tau_frac.iter().find(|&&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::Config(format!("tau_frac {f} outside (0, 1)")));
        }
        if let Some(&s) = self.sigma.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::Config(format!("sigma {s} must be positive")));
        }
        Ok(())
    }

    /// Cells in grid order; H0 cells appear once per (n, σ, process, innovation).
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &sigma in &self.sigma {
                for &process in &self.process {
                    for &innovation in &self.innovation {
                        for &delta in &self.delta {
                            let base = Cell {
                                id: 0,
                                n,
                                tau: None,
                                delta,
                                sigma,
                                process,
                                innovation,
                            };
                            if delta == 0.0 {
                                out.push(base);
                            } else {
                                for &f in &self.tau_frac {
                                    out.push(Cell {
                                        tau: Some((n as f64 * f).round() as usize),
                                        ..base.clone()
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        for (i, c) in out.iter_mut().enumerate() {
            c.id = i;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub id: usize,
    pub n: usize,
    /// `None` under H0.
    pub tau: Option<usize>,
    pub delta: f64,
    pub sigma: f64,
    pub process: ErrorProcess,
    pub innovation: Innovation,
}

impl Cell {
    pub fn scenario(&self, cfg: &ExperimentConfig) -> Result<ScenarioSpec> {
        let p = cfg.p()?;
        let spec = ScenarioSpec {
            design: DesignSpec {
                kind: cfg.design.clone(),
                n: self.n,
                p,
                scale: cfg.scale,
                matrix: None,
            },
            beta: cfg.beta()?,
            delta: vec![self.delta; p],
            tau: self.tau.unwrap_or(0),
            errors: ErrorProcessSpec::new(self.process, self.innovation, self.sigma)?,
            sigma_matrix: None,
            seed: cfg.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Rejection {
    pub alpha: f64,
    pub sup: f64,
    pub int: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TauSummary {
    pub q1: usize,
    pub median: usize,
    pub q3: usize,
    /// Median of `|τ̂ − τ|` (HA cells only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_abs_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub cell: Cell,
    pub replicates: usize,
    pub failed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub rejection: Vec<Rejection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_hat: Option<TauSummary>,
    /// Population detectability margin of the design at this change.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detectability_margin: Option<f64>,
}

impl CellResult {
    pub fn rate(&self, kind: StatKind, alpha: f64) -> Option<f64> {
        self.rejection
            .iter()
            .find(|r| (r.alpha - alpha).abs() < 1e-12)
            .map(|r| match kind {
                StatKind::Sup => r.sup,
                StatKind::Int => r.int,
            })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    /// Monotonicity spot-check violations (power in δ and in n).
    pub findings: Vec<String>,
}

/// Order statistic `⌈pN⌉` of sorted values.
fn quantile(sorted: &[usize], p: f64) -> usize {
    let n = sorted.len();
    sorted[((p * n as f64).ceil() as usize).clamp(1, n) - 1]
}

fn median_f64(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Replicate statistics of one scenario; the per-dataset path is the one
/// `detect` uses.
pub fn simulate_cell(spec: &ScenarioSpec, reps: usize) -> Vec<Result<Statistics>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let (ds, _) = datagen::gen_dataset(spec, r)?;
            run::statistics(&ds).map(|(_, s)| s)
        })
        .collect()
}

fn margin_for(cell: &Cell, cfg: &ExperimentConfig, spec: &ScenarioSpec) -> Option<f64> {
    let tau = cell.tau?;
    let p = spec.design.p;
    let eval = || -> Result<f64> {
        let moments = DesignMoments::from_spec(&spec.design, diagnostics::DEFAULT_MOMENT_N)?;
        let inp = DetectabilityInput::from_profile(
            &moments,
            DVector::from_vec(cfg.beta()?),
            DVector::from_vec(spec.delta.clone()),
            cell.sigma * cell.sigma,
            tau as f64 / cell.n as f64,
        )?;
        let blocks = CovBlocks::from_sigma(&SymMatrix::identity(p + 1))?;
        Ok(diagnostics::detectability_margin(&inp, &blocks)?.margin)
    };
    eval().map_err(|e| log::warn!("cell {}: margin unavailable: {e}", cell.id)).ok()
}

pub fn run_cell(cell: &Cell, cfg: &ExperimentConfig, table: &QuantileTable) -> CellResult {
    let mut out = CellResult {
        cell: cell.clone(),
        replicates: 0,
        failed: 0,
        error: None,
        rejection: Vec::new(),
        tau_hat: None,
        detectability_margin: None,
    };
    let spec = match cell.scenario(cfg) {
        Ok(s) => s,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.detectability_margin = margin_for(cell, cfg, &spec);

    let mut stats = Vec::with_capacity(cfg.reps);
    for r in simulate_cell(&spec, cfg.reps) {
        match r {
            Ok(s) => stats.push(s),
            Err(e) => {
                out.failed += 1;
                out.error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    out.replicates = stats.len();
    if stats.is_empty() {
        return out;
    }
    let total = stats.len() as f64;
    for &alpha in &cfg.alphas {
        let crit = |k| table.critical_value(k, 1.0 - alpha);
        let (cs, ci) = match (crit(StatKind::Sup), crit(StatKind::Int)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                out.error.get_or_insert_with(|| e.to_string());
                continue;
            }
        };
        out.rejection.push(Rejection {
            alpha,
            sup: stats.iter().filter(|s| s.sup > cs).count() as f64 / total,
            int: stats.iter().filter(|s| s.int > ci).count() as f64 / total,
        });
    }
    let mut taus: Vec<usize> = stats.iter().map(|s| s.tau_hat).collect();
    taus.sort_unstable();
    out.tau_hat = Some(TauSummary {
        q1: quantile(&taus, 0.25),
        median: quantile(&taus, 0.5),
        q3: quantile(&taus, 0.75),
        median_abs_error: cell
            .tau
            .map(|t| median_f64(taus.iter().map(|&k| (k as f64 - t as f64).abs()).collect())),
    });
    out
}

/// Runs every cell; a failing cell is recorded and the grid continues.
pub fn run_experiment(cfg: &ExperimentConfig, table: &QuantileTable) -> Result<ExperimentReport> {
    cfg.validate()?;
    let cells = cfg.cells();
    if cells.is_empty() {
        log::warn!("experiment grid has no cells");
    }
    let results: Vec<CellResult> = cells
        .iter()
        .map(|c| {
            log::info!("cell {} of {}: {:?}", c.id + 1, cells.len(), c);
            run_cell(c, cfg, table)
        })
        .collect();
    let findings = monotonicity_findings(&results, MONOTONICITY_SLACK);
    for f in &findings {
        log::warn!("{f}");
    }
    Ok(ExperimentReport {
        tool: TOOL,
        version: VERSION,
        config: cfg.clone(),
        cells: results,
        findings,
    })
}

/// Pairs of HA cells where power drops by more than `slack` when δ or n grows
/// with everything else fixed.
pub fn monotonicity_findings(cells: &[CellResult], slack: f64) -> Vec<String> {
    let mut out = Vec::new();
    let same_but = |a: &Cell, b: &Cell, delta: bool| {
        a.sigma == b.sigma
            && a.process == b.process
            && a.innovation == b.innovation
            && if delta {
                a.n == b.n && a.tau == b.tau
            } else {
                a.delta == b.delta
                    && match (a.tau, b.tau) {
                        (Some(x), Some(y)) => x as f64 / a.n as f64 == y as f64 / b.n as f64,
                        _ => false,
                    }
            }
    };
    let ha: Vec<&CellResult> = cells.iter().filter(|c| c.cell.tau.is_some() && c.replicates > 0).collect();
    for a in &ha {
        for b in &ha {
            let grows_delta = same_but(&a.cell, &b.cell, true) && b.cell.delta.abs() > a.cell.delta.abs();
            let grows_n = same_but(&a.cell, &b.cell, false) && b.cell.n > a.cell.n;
            if !(grows_delta || grows_n) {
                continue;
            }
            for ra in &a.rejection {
                for kind in [StatKind::Sup, StatKind::Int] {
                    let (Some(pa), Some(pb)) = (a.rate(kind, ra.alpha), b.rate(kind, ra.alpha)) else {
                        continue;
                    };
                    if pb + slack < pa {
                        out.push(format!(
                            "{} power at alpha {} falls from {:.4} (cell {}) to {:.4} (cell {})",
                            kind.name(),
                            ra.alpha,
                            pa,
                            a.cell.id,
                            pb,
                            b.cell.id
                        ));
                    }
                }
            }
        }
    }
    out
}

fn cell_fields(c: &Cell) -> [String; 7] {
    [
        c.id.to_string(),
        c.n.to_string(),
        c.tau.map(|t| t.to_string()).unwrap_or_default(),
        c.delta.to_string(),
        c.sigma.to_string(),
        serde_json::to_value(c.process).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        serde_json::to_value(c.innovation).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
    ]
}

const CELL_HEADER: [&str; 7] = ["cell", "n", "tau", "delta", "sigma", "process", "innovation"];

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::NumericalIssue(e.to_string()))
}

impl ExperimentReport {
    /// Long-format size-power table: one row per cell, statistic and level.
    pub fn size_power_csv(&self) -> Result<String> {
        let mut header = CELL_HEADER.to_vec();
        header.extend(["statistic", "nominal_alpha", "empirical_rejection", "replicates"]);
        let rows = self.cells.iter().flat_map(|c| {
            c.rejection.iter().flat_map(move |r| {
                [(StatKind::Sup, r.sup), (StatKind::Int, r.int)].map(|(k, v)| {
                    let mut row = cell_fields(&c.cell).to_vec();
                    row.extend([k.name().to_string(), r.alpha.to_string(), v.to_string(), c.replicates.to_string()]);
                    row
                })
            })
        });
        csv_string(&header, rows)
    }

    pub fn tau_hat_csv(&self) -> Result<String> {
        let mut header = CELL_HEADER.to_vec();
        header.extend(["tau_q1", "tau_median", "tau_q3", "median_abs_error", "replicates"]);
        let rows = self.cells.iter().filter_map(|c| {
            let t = c.tau_hat.as_ref()?;
            let mut row = cell_fields(&c.cell).to_vec();
            row.extend([
                t.q1.to_string(),
                t.median.to_string(),
                t.q3.to_string(),
                t.median_abs_error.map(|v| v.to_string()).unwrap_or_default(),
                c.replicates.to_string(),
            ]);
            Some(row)
        });
        csv_string(&header, rows)
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} cells, {} replicates each\n", self.cells.len(), self.config.reps);
        for c in &self.cells {
            let cell = &c.cell;
            let _ = write!(
                s,
                "cell {:>3}: n={} tau={} delta={} sigma={} {:?}/{:?}",
                cell.id,
                cell.n,
                cell.tau.map_or("-".to_string(), |t| t.to_string()),
                cell.delta,
                cell.sigma,
                cell.process,
                cell.innovation
            );
            for r in &c.rejection {
                let _ = write!(s, "  [{}: sup {:.3} int {:.3}]", r.alpha, r.sup, r.int);
            }
            if let Some(t) = &c.tau_hat {
                if let Some(m) = t.median_abs_error {
                    let _ = write!(s, "  median|tau_hat-tau|={m}");
                }
            }
            if let Some(e) = &c.error {
                let _ = write!(s, "  error: {e}");
            }
            s.push('\n');
        }
        for f in &self.findings {
            let _ = writeln!(s, "finding: {f}");
        }
        s
    }
}

/// Writes the JSON report and its CSV companions next to `json_path`;
/// returns the companion paths.
pub fn write_outputs(report: &ExperimentReport, json_path: &Path) -> Result<Vec<PathBuf>> {
    std::fs::write(json_path, run::render_json(report)?)?;
    let stem = json_path.with_extension("");
    let size_power = PathBuf::from(format!("{}.size_power.csv", stem.display()));
    let tau = PathBuf::from(format!("{}.tau_hat.csv", stem.display()));
    std::fs::write(&size_power, report.size_power_csv()?)?;
    std::fs::write(&tau, report.tau_hat_csv()?)?;
    Ok(vec![size_power, tau])
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)
}
