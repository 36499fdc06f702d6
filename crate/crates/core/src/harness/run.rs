use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use super::config::{RunConfig, StatChoice};
use super::ingest::{self, Ingested};
use crate::datagen::{self, ScenarioSpec};
use crate::detect::{self, QuantileTable, StatKind, Statistics, TestResult, TABLE_INT, TABLE_LEVELS, TABLE_SUP};
use crate::diagnostics::{self, CovBlocks};
use crate::error::{Error, Result};
use crate::limit_sim;
use crate::model::{self, Dataset, ExactRegressors};
use crate::spectral::{self, LambdaSequences};

pub const TOOL: &str = "eivcp";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub x_columns: Vec<String>,
    pub y_columns: Vec<String>,
    /// `identity` or `file`.
    pub sigma: &'static str,
    pub exact_columns: Vec<String>,
    pub intercept: bool,
    pub rescaled: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    /// p×q, row-major.
    pub beta_hat: Vec<Vec<f64>>,
    pub lambda_n: f64,
    /// Misfit constants at the fitted slope (scalar response only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalSource {
    /// `published` or the table file path.
    pub table: String,
    /// Limit-law draws behind the p-values (0 = none).
    pub pool_reps: usize,
    pub pool_grid_points: usize,
    pub pool_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub data: DataSummary,
    pub statistic: StatChoice,
    pub result: TestResult,
    /// Rejection per selected statistic.
    pub decisions: BTreeMap<&'static str, bool>,
    pub critical_values: CriticalSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    pub clamped_eigenvalues: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub data: DataSummary,
    pub tau_hat: usize,
    pub tau_fraction: f64,
    pub stat_sup: f64,
    pub stat_int: f64,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_full: Option<FitSummary>,
    /// Fit on rows `1..=τ̂`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_before: Option<FitSummary>,
    /// Fit on rows `τ̂+1..=n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_after: Option<FitSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CritvalsRow {
    pub level: f64,
    pub sup: f64,
    pub sup_published: f64,
    pub int: f64,
    pub int_published: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CritvalsReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub low_precision: bool,
    pub rows: Vec<CritvalsRow>,
    /// Rendered table file content.
    #[serde(skip)]
    pub table_text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub scenario: ScenarioSpec,
    pub n: usize,
    pub tau: Option<usize>,
    #[serde(skip)]
    pub csv_text: String,
}

/// Data after the optional projection and rescaling steps.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub summary: DataSummary,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let data_path = cfg
        .data_path
        .as_deref()
        .ok_or_else(|| Error::Config("--data is required".into()))?;
    let ing = ingest::ingest_csv(data_path, cfg.sigma_path.as_deref(), &cfg.exact_regressor_columns)?;
    prepare_ingested(ing, cfg)
}

pub fn prepare_ingested(ing: Ingested, cfg: &RunConfig) -> Result<Prepared> {
    let Ingested {
        dataset,
        exact,
        x_names,
        y_names,
        sigma_from_file,
    } = ing;
    let n = dataset.n();
    let exact = match (exact, cfg.intercept) {
        (Some(w), false) => Some(ExactRegressors::new(w)?),
        (Some(w), true) => Some(ExactRegressors::new(w)?.with_intercept()?),
        (None, true) => Some(ExactRegressors::intercept(n)),
        (None, false) => None,
    };
    let mut ds = match &exact {
        Some(ex) => model::project_out(&dataset, ex)?,
        None => dataset,
    };
    if cfg.rescale {
        ds = model::rescale_random_spacing(&ds, model::DEFAULT_RESCALE_EPS)?;
    }
    let summary = DataSummary {
        n: ds.n(),
        p: ds.p(),
        q: ds.q(),
        x_columns: x_names,
        y_columns: y_names,
        sigma: if sigma_from_file { "file" } else { "identity" },
        exact_columns: cfg.exact_regressor_columns.clone(),
        intercept: cfg.intercept,
        rescaled: cfg.rescale,
    };
    Ok(Prepared { dataset: ds, summary })
}

/// Critical-value table for a run: the published (or file) quantiles, plus
/// `cfg.reps` seeded limit-law draws for p-values and untabulated levels.
pub fn critical_table(cfg: &RunConfig) -> Result<(QuantileTable, CriticalSource)> {
    let (base, name) = match &cfg.table_path {
        Some(p) => (limit_sim::read_table(p)?, p.display().to_string()),
        None => (QuantileTable::published(), "published".to_string()),
    };
    let table = if cfg.reps > 0 {
        let pool = limit_sim::simulate_quantiles(cfg.grid_points, cfg.reps, &[], cfg.seed)?;
        base.with_draws(
            pool.sorted_draws_sup.unwrap_or_default(),
            pool.sorted_draws_int.unwrap_or_default(),
        )
    } else {
        base
    };
    Ok((
        table,
        CriticalSource {
            table: name,
            pool_reps: cfg.reps,
            pool_grid_points: cfg.grid_points,
            pool_seed: cfg.seed,
        },
    ))
}

/// TLS fit summary; `None` when the fit is not identifiable.
pub fn fit_summary(ds: &Dataset) -> Option<FitSummary> {
    let fit = match model::tls_fit(ds) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("TLS fit unavailable: {e}");
            return None;
        }
    };
    let (p, q) = (ds.p(), ds.q());
    let beta_hat = (0..p).map(|i| (0..q).map(|j| fit.beta_hat[(i, j)]).collect()).collect();
    let (alpha, phi) = if q == 1 {
        let beta = DVector::from_iterator(p, (0..p).map(|i| fit.beta_hat[(i, 0)]));
        match CovBlocks::from_sigma(ds.sigma()).and_then(|b| diagnostics::compute_alpha_phi(&b, &beta)) {
            Ok(ap) => (Some(ap.alpha.iter().copied().collect()), Some(ap.phi)),
            Err(e) => {
                log::warn!("misfit constants unavailable: {e}");
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    Some(FitSummary {
        beta_hat,
        lambda_n: fit.lambda,
        alpha,
        phi,
    })
}

/// Statistics of one prepared dataset; shared by `detect` and the experiment grid.
pub fn statistics(ds: &Dataset) -> Result<(LambdaSequences, Statistics)> {
    let seqs = spectral::lambda_sequences(ds)?;
    let stats = detect::evaluate(seqs.prefix(), seqs.suffix())?;
    Ok((seqs, stats))
}

pub fn run_detect(cfg: &RunConfig) -> Result<DetectReport> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    detect_prepared(cfg, prepared)
}

pub fn detect_prepared(cfg: &RunConfig, prepared: Prepared) -> Result<DetectReport> {
    let (seqs, stats) = statistics(&prepared.dataset)?;
    let (table, source) = critical_table(cfg)?;
    let result = detect::decide_statistics(seqs.n(), &stats, &table, cfg.alpha)?;
    let decisions = cfg
        .statistic
        .kinds()
        .iter()
        .map(|k| {
            let reject = match k {
                StatKind::Sup => result.reject_sup,
                StatKind::Int => result.reject_int,
            };
            (k.name(), reject)
        })
        .collect();
    Ok(DetectReport {
        tool: TOOL,
        version: VERSION,
        config: cfg.clone(),
        fit: fit_summary(&prepared.dataset),
        data: prepared.summary,
        statistic: cfg.statistic,
        result,
        decisions,
        critical_values: source,
        clamped_eigenvalues: seqs.clamped(),
    })
}

fn rows_subset(ds: &Dataset, start: usize, len: usize) -> Result<Dataset> {
    Dataset::new(
        ds.x().rows(start, len).into_owned(),
        ds.y().rows(start, len).into_owned(),
        ds.sigma().clone(),
    )
}

pub fn run_estimate(cfg: &RunConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let ds = &prepared.dataset;
    let (seqs, stats) = statistics(ds)?;
    let n = seqs.n();
    let k = stats.tau_hat;
    let segment = |start, len| rows_subset(ds, start, len).ok().and_then(|d| fit_summary(&d));
    Ok(EstimateReport {
        tool: TOOL,
        version: VERSION,
        config: cfg.clone(),
        tau_hat: k,
        tau_fraction: k as f64 / n as f64,
        stat_sup: stats.sup,
        stat_int: stats.int,
        degenerate: stats.degenerate,
        fit_full: fit_summary(ds),
        fit_before: segment(0, k),
        fit_after: segment(k, n - k),
        data: prepared.summary,
    })
}

pub fn run_critvals(cfg: &RunConfig) -> Result<CritvalsReport> {
    cfg.validate()?;
    let table = limit_sim::simulate_quantiles(cfg.grid_points, cfg.reps, &TABLE_LEVELS, cfg.seed)?;
    let rows = TABLE_LEVELS
        .iter()
        .enumerate()
        .map(|(i, &level)| {
            Ok(CritvalsRow {
                level,
                sup: table.critical_value(StatKind::Sup, level)?,
                sup_published: TABLE_SUP[i],
                int: table.critical_value(StatKind::Int, level)?,
                int_published: TABLE_INT[i],
            })
        })
        .collect::<Result<_>>()?;
    Ok(CritvalsReport {
        tool: TOOL,
        version: VERSION,
        config: cfg.clone(),
        low_precision: table.low_precision(),
        rows,
        table_text: limit_sim::render_table(&table),
    })
}

/// Synthetic dataset as CSV with columns `x1..xp,y`. Values are written in
/// shortest round-trip form so re-reading reproduces them exactly.
pub fn dataset_csv(ds: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let (p, q) = (ds.p(), ds.q());
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    if q == 1 {
        header.push("y".into());
    } else {
        header.extend((1..=q).map(|j| format!("y{j}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.n() {
        let row: Vec<String> = (0..p)
            .map(|j| ds.x()[(i, j)].to_string())
            .chain((0..q).map(|j| ds.y()[(i, j)].to_string()))
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::NumericalIssue(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)?;
    ScenarioSpec::from_toml(&text)
}

/// Generates replicate 0 of the scenario in `cfg.config_path`. The
/// scenario's own seed is used; `cfg.seed` is only echoed.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateReport> {
    cfg.validate()?;
    let path = cfg
        .config_path
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let scenario = load_scenario(path)?;
    let (ds, truth) = datagen::gen_dataset(&scenario, 0)?;
    Ok(SimulateReport {
        tool: TOOL,
        version: VERSION,
        config: cfg.clone(),
        n: ds.n(),
        tau: truth.tau,
        csv_text: dataset_csv(&ds)?,
        scenario,
    })
}

/// Pretty JSON with a trailing newline.
pub fn render_json<T: Serialize>(report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::NumericalIssue(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

impl DetectReport {
    pub fn summary(&self) -> String {
        let r = &self.result;
        let mut s = String::new();
        let _ = writeln!(s, "n = {}, p = {}, q = {}, alpha = {}", self.data.n, self.data.p, self.data.q, r.alpha);
        for &k in self.statistic.kinds() {
            let (stat, crit, p, rej) = match k {
                StatKind::Sup => (r.stat_sup, r.critical_sup, r.p_sup, r.reject_sup),
                StatKind::Int => (r.stat_int, r.critical_int, r.p_int, r.reject_int),
            };
            let _ = writeln!(
                s,
                "{:>3}: statistic {:.6}  critical {:.6}  p-value {}  -> {}",
                k.name(),
                stat,
                crit,
                fmt_p(p),
                if rej { "reject H0" } else { "do not reject H0" }
            );
        }
        let _ = writeln!(s, "changepoint estimate: {} (of {})", r.tau_hat, r.n);
        if r.degenerate {
            let _ = writeln!(s, "warning: a zero self-normalizer made a statistic infinite");
        }
        s
    }
}

impl EstimateReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "changepoint estimate: {} of {} (fraction {:.4})\n",
            self.tau_hat, self.data.n, self.tau_fraction
        );
        let show = |f: &Option<FitSummary>| {
            f.as_ref()
                .map_or_else(|| "n/a".to_string(), |f| format!("{:?}", f.beta_hat))
        };
        let _ = writeln!(s, "slope before: {}  after: {}", show(&self.fit_before), show(&self.fit_after));
        s
    }
}

impl CritvalsReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "m = {}, reps = {}, seed = {}{}\n",
            self.config.grid_points,
            self.config.reps,
            self.config.seed,
            if self.low_precision { " (low precision)" } else { "" }
        );
        s.push_str("level      sup   published      diff        int   published      diff\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<6} {:>9.6} {:>11.6} {:>+9.4} {:>10.6} {:>11.6} {:>+9.4}",
                r.level,
                r.sup,
                r.sup_published,
                r.sup - r.sup_published,
                r.int,
                r.int_published,
                r.int - r.int_published
            );
        }
        s
    }
}
