//! Self-normalized changepoint statistics, their p-values and decisions, and
//! the changepoint estimator.
//!
//! For each candidate split `k` the numerator measures how far the prefix
//! goodness-of-fit `λ_k` sits from its share `(k/n)λ_n` of the full-sample
//! value. The denominator is built from the same quantities inside the two
//! segments `1..k` and `k+1..n`, so any common scale factor (σ², the long-run
//! variance, ...) and any linear drift in `k` cancel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::LambdaSequences;

/// Minimum number of observations for the statistics.
pub const MIN_N: usize = 4;

/// Which of the two statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Sup,
    Int,
}

impl StatKind {
    pub fn name(self) -> &'static str {
        match self {
            StatKind::Sup => "sup",
            StatKind::Int => "int",
        }
    }
}

/// All three functionals of one pair of sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statistics {
    /// Supremum-type statistic.
    pub sup: f64,
    /// Integral-type statistic.
    pub int: f64,
    /// Changepoint estimate in `1..n`.
    pub tau_hat: usize,
    /// Some split had a zero denominator with a positive numerator; the
    /// affected statistic is `+∞`.
    pub degenerate: bool,
}

/// Evaluates both statistics and the estimator on raw sequences of length
/// `n + 1`. No boundary conventions are checked, so Wiener-path
/// discretizations can be fed in directly.
pub fn evaluate(prefix: &[f64], suffix: &[f64]) -> Result<Statistics> {
    let len = prefix.len();
    if suffix.len() != len {
        return Err(Error::InvalidArgument(format!(
            "prefix has length {len}, suffix {}",
            suffix.len()
        )));
    }
    if len < MIN_N + 1 {
        return Err(Error::InsufficientData(format!(
            "need n ≥ {MIN_N}, got n = {}",
            len.saturating_sub(1)
        )));
    }
    let n = len - 1;
    let nf = n as f64;
    let lambda_n = prefix[n];
    let tilde_0 = suffix[0];

    let idx: Vec<f64> = (0..=n).map(|i| i as f64).collect();
    let rev: Vec<f64> = (0..=n).map(|i| (n - i) as f64).collect();

    let mut sup = 0.0f64;
    let mut int = 0.0f64;
    let mut degenerate = false;
    let mut tau_hat = 1;
    let mut best = f64::NEG_INFINITY;

    for k in 1..n {
        let slope = prefix[k] / k as f64;
        let (p_max, p_sq) = residual_scan(&prefix[1..k], &idx[1..k], slope);
        let slope = suffix[k] / (n - k) as f64;
        let (s_max, s_sq) = residual_scan(&suffix[k + 1..=n], &rev[k + 1..=n], slope);

        let num = (prefix[k] - k as f64 * lambda_n / nf).abs();
        let est_num = num + (suffix[k] - (n - k) as f64 * tilde_0 / nf).abs();
        let den_max = p_max + s_max;
        let den_sq = p_sq + s_sq;

        if let Some(r) = ratio(num, den_max, &mut degenerate) {
            sup = sup.max(r);
        }
        if let Some(r) = ratio(num * num, den_sq, &mut degenerate) {
            int += r;
        }
        let mut ignored = false;
        if let Some(r) = ratio(est_num, den_max, &mut ignored) {
            if r > best {
                best = r;
                tau_hat = k;
            }
        }
    }

    Ok(Statistics {
        sup,
        int,
        tau_hat,
        degenerate,
    })
}

// 0/0 drops the term, x/0 with x > 0 is +∞.
fn ratio(num: f64, den: f64, degenerate: &mut bool) -> Option<f64> {
    if den == 0.0 {
        if num == 0.0 {
            return None;
        }
        *degenerate = true;
        return Some(f64::INFINITY);
    }
    Some(num / den)
}

/// Max and sum of squares of `|values[i] − slope·weights[i]|`.
#[inline]
fn residual_scan(values: &[f64], weights: &[f64], slope: f64) -> (f64, f64) {
    let mut mx = [0.0f64; 4];
    let mut sq = [0.0f64; 4];
    let chunks = values.chunks_exact(4).zip(weights.chunks_exact(4));
    let tail_start = values.len() - values.len() % 4;
    for (v, w) in chunks {
        for l in 0..4 {
            let d = (v[l] - slope * w[l]).abs();
            mx[l] = if d > mx[l] { d } else { mx[l] };
            sq[l] += d * d;
        }
    }
    let mut m = mx[0].max(mx[1]).max(mx[2].max(mx[3]));
    let mut s = (sq[0] + sq[1]) + (sq[2] + sq[3]);
    for (v, w) in values[tail_start..].iter().zip(&weights[tail_start..]) {
        let d = (v - slope * w).abs();
        m = m.max(d);
        s += d * d;
    }
    (m, s)
}

/// Supremum-type self-normalized statistic.
pub fn stat_sup(seqs: &LambdaSequences) -> Result<f64> {
    Ok(evaluate(seqs.prefix(), seqs.suffix())?.sup)
}

/// Integral-type self-normalized statistic.
pub fn stat_int(seqs: &LambdaSequences) -> Result<f64> {
    Ok(evaluate(seqs.prefix(), seqs.suffix())?.int)
}

/// Argmax of the two-sided ratio; ties go to the smallest `k`.
pub fn estimate_changepoint(seqs: &LambdaSequences) -> Result<usize> {
    Ok(evaluate(seqs.prefix(), seqs.suffix())?.tau_hat)
}

/// Probability levels of the published critical values.
pub const TABLE_LEVELS: [f64; 5] = [0.90, 0.95, 0.975, 0.99, 0.995];
/// Published asymptotic critical values of the sup statistic.
pub const TABLE_SUP: [f64; 5] = [1.209008, 1.393566, 1.571462, 1.782524, 1.966223];
/// Published asymptotic critical values of the int statistic.
pub const TABLE_INT: [f64; 5] = [5.700222, 7.165705, 8.807070, 10.597625, 11.755233];

/// Replications below this mark a table as low precision.
pub const LOW_PRECISION_REPS: usize = 1000;

/// Asymptotic quantiles of the two limit functionals, optionally with the
/// full sorted Monte Carlo sample for p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub grid_points: usize,
    pub replications: usize,
    pub seed: Option<u64>,
    pub quantiles_sup: BTreeMap<Level, f64>,
    pub quantiles_int: BTreeMap<Level, f64>,
    pub sorted_draws_sup: Option<Vec<f64>>,
    pub sorted_draws_int: Option<Vec<f64>>,
}

/// Probability level stored in parts per million so it can key a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Level(u32);

impl Level {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {p}")));
        }
        Ok(Self((p * 1e6).round() as u32))
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl QuantileTable {
    /// The published table (m = 1000, 100000 runs), without draws.
    pub fn published() -> Self {
        let level = |p| Level::new(p).expect("static level");
        Self {
            grid_points: 1000,
            replications: 100_000,
            seed: None,
            quantiles_sup: TABLE_LEVELS.iter().zip(TABLE_SUP).map(|(&p, q)| (level(p), q)).collect(),
            quantiles_int: TABLE_LEVELS.iter().zip(TABLE_INT).map(|(&p, q)| (level(p), q)).collect(),
            sorted_draws_sup: None,
            sorted_draws_int: None,
        }
    }

    /// Attaches Monte Carlo draws used for p-values (sorted here).
    pub fn with_draws(mut self, mut sup: Vec<f64>, mut int: Vec<f64>) -> Self {
        sup.sort_by(f64::total_cmp);
        int.sort_by(f64::total_cmp);
        self.sorted_draws_sup = Some(sup);
        self.sorted_draws_int = Some(int);
        self
    }

    pub fn low_precision(&self) -> bool {
        self.replications < LOW_PRECISION_REPS
    }

    pub fn quantiles(&self, kind: StatKind) -> &BTreeMap<Level, f64> {
        match kind {
            StatKind::Sup => &self.quantiles_sup,
            StatKind::Int => &self.quantiles_int,
        }
    }

    pub fn draws(&self, kind: StatKind) -> Option<&[f64]> {
        match kind {
            StatKind::Sup => self.sorted_draws_sup.as_deref(),
            StatKind::Int => self.sorted_draws_int.as_deref(),
        }
    }

    /// Critical value at probability `level`: tabulated if present, otherwise
    /// the order statistic of the draws.
    pub fn critical_value(&self, kind: StatKind, level: f64) -> Result<f64> {
        let key = Level::new(level)?;
        if let Some(&q) = self.quantiles(kind).get(&key) {
            return Ok(q);
        }
        match self.draws(kind) {
            Some(d) if !d.is_empty() => Ok(order_statistic(d, level)),
            _ => Err(Error::UnsupportedLevel(level)),
        }
    }
}

/// Inverse empirical CDF: the `⌈p·N⌉`-th smallest draw.
pub fn order_statistic(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Upper-tail probability of `stat` under the simulated limit law, counting
/// ties with weight one half.
pub fn p_value(stat: f64, table: &QuantileTable, kind: StatKind) -> Result<f64> {
    let draws = table
        .draws(kind)
        .filter(|d| !d.is_empty())
        .ok_or(Error::TableIncomplete(kind.name()))?;
    let below = draws.partition_point(|&d| d < stat);
    let not_above = draws.partition_point(|&d| d <= stat);
    let greater = draws.len() - not_above;
    let ties = not_above - below;
    Ok((greater as f64 + 0.5 * ties as f64) / draws.len() as f64)
}

/// Outcome of both tests plus the changepoint estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub n: usize,
    pub stat_sup: f64,
    pub stat_int: f64,
    pub p_sup: Option<f64>,
    pub p_int: Option<f64>,
    pub critical_sup: f64,
    pub critical_int: f64,
    pub reject_sup: bool,
    pub reject_int: bool,
    pub tau_hat: usize,
    pub alpha: f64,
    pub degenerate: bool,
}

/// Tests at level `alpha`: reject when the statistic exceeds the
/// `(1 − alpha)` quantile. P-values are filled in when the table has draws.
pub fn decide(seqs: &LambdaSequences, table: &QuantileTable, alpha: f64) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let stats = evaluate(seqs.prefix(), seqs.suffix())?;
    decide_statistics(seqs.n(), &stats, table, alpha)
}

/// [`decide`] on already evaluated statistics.
pub fn decide_statistics(
    n: usize,
    stats: &Statistics,
    table: &QuantileTable,
    alpha: f64,
) -> Result<TestResult> {
    let critical_sup = table.critical_value(StatKind::Sup, 1.0 - alpha)?;
    let critical_int = table.critical_value(StatKind::Int, 1.0 - alpha)?;
    let p = |stat, kind| match p_value(stat, table, kind) {
        Ok(v) => Ok(Some(v)),
        Err(Error::TableIncomplete(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(TestResult {
        n,
        stat_sup: stats.sup,
        stat_int: stats.int,
        p_sup: p(stats.sup, StatKind::Sup)?,
        p_int: p(stats.int, StatKind::Int)?,
        critical_sup,
        critical_int,
        reject_sup: stats.sup > critical_sup,
        reject_int: stats.int > critical_int,
        tau_hat: stats.tau_hat,
        alpha,
        degenerate: stats.degenerate,
    })
}
