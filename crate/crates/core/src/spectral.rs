//! Prefix and suffix sequences of smallest eigenvalues of the transformed
//! partial Gram matrices.
//!
//! `prefix[i]` is built from rows `1..=i` and `suffix[i]` from rows
//! `i+1..=n`. Both come out of a single forward and a single backward pass
//! with one small eigen solve per index.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::GramAccumulator;
use crate::model::{self, Dataset};

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSequences {
    n: usize,
    q: usize,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    clamped: usize,
}

impl LambdaSequences {
    /// Wraps precomputed sequences, checking the boundary conventions.
    pub fn from_parts(q: usize, prefix: Vec<f64>, suffix: Vec<f64>) -> Result<Self> {
        let len = prefix.len();
        if len < 2 || suffix.len() != len {
            return Err(Error::InvalidArgument(format!(
                "prefix and suffix must share a length of at least 2 (got {} and {})",
                prefix.len(),
                suffix.len()
            )));
        }
        let n = len - 1;
        if prefix[0] != 0.0 || prefix[1] != 0.0 || suffix[n] != 0.0 || suffix[n - 1] != 0.0 {
            return Err(Error::InvalidArgument(
                "boundary entries λ₀, λ₁, λ̃ₙ₋₁, λ̃ₙ must be zero".into(),
            ));
        }
        if prefix[n] != suffix[0] {
            return Err(Error::InvalidArgument("λₙ and λ̃₀ differ".into()));
        }
        Ok(Self {
            n,
            q,
            prefix,
            suffix,
            clamped: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// λ₀..λₙ.
    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    /// λ̃₀..λ̃ₙ.
    pub fn suffix(&self) -> &[f64] {
        &self.suffix
    }

    /// Number of entries that came out slightly negative and were set to 0.
    pub fn clamped(&self) -> usize {
        self.clamped
    }
}

/// Runs the forward and backward Gram sweeps over the transformed rows.
pub fn lambda_sequences(ds: &Dataset) -> Result<LambdaSequences> {
    let n = ds.n();
    let q = ds.q();
    let dim = ds.p() + q;
    let c = model::transform(ds)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..dim).map(|j| c[(i, j)]).collect())
        .collect();

    let mut clamped = 0usize;
    let mut eval = |acc: &GramAccumulator| -> Result<f64> {
        // Fewer rows than columns: the Gram is singular, λ is exactly zero.
        if acc.count() < dim {
            return Ok(0.0);
        }
        let v = acc.sum_q_smallest(q)?;
        if v < 0.0 {
            clamped += 1;
            return Ok(0.0);
        }
        Ok(v)
    };

    let mut prefix = vec![0.0; n + 1];
    let mut acc = GramAccumulator::new(dim);
    for (i, row) in rows.iter().enumerate() {
        acc.update(row)?;
        if i + 1 >= 2 {
            prefix[i + 1] = eval(&acc)?;
        }
    }

    let mut suffix = vec![0.0; n + 1];
    let mut acc = GramAccumulator::new(dim);
    // suffix[i] covers rows i+1..=n (1-based), i.e. rows[i..]; i ≤ n−2.
    for i in (1..n).rev() {
        acc.update(&rows[i])?;
        if i <= n.saturating_sub(2) {
            suffix[i] = eval(&acc)?;
        }
    }
    suffix[0] = prefix[n];

    if clamped > 0 {
        warn!("{clamped} negative round-off eigenvalues clamped to zero");
    }
    Ok(LambdaSequences {
        n,
        q,
        prefix,
        suffix,
        clamped,
    })
}

/// Evaluation times of the Brownian-shape diagnostic.
pub const SWIP_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
pub const SWIP_MIN_REPLICATES: usize = 200;

/// Shape summary of the centered, √n-scaled λ process across H0 replicates.
#[derive(Debug, Clone)]
pub struct SwipReport {
    pub replicates: usize,
    pub grid: Vec<f64>,
    /// Across-replicate sample variance of `(λ_[nt] − [nt]σ²)/√n` at each grid point.
    pub variances: Vec<f64>,
    /// `variances[t = 0.5] / variances[t = 1]`; about 0.5 for Brownian scaling.
    pub variance_ratio_half: f64,
    /// Correlations of increments over disjoint intervals, labelled `(s0, s1, t0, t1)`.
    pub increment_correlations: Vec<((f64, f64, f64, f64), f64)>,
    /// Sample skewness of the process at t = 1.
    pub skewness_at_one: f64,
}

impl SwipReport {
    pub fn max_abs_increment_correlation(&self) -> f64 {
        self.increment_correlations
            .iter()
            .map(|(_, c)| c.abs())
            .fold(0.0, f64::max)
    }
}

/// Checks Brownian shape (variance linear in t, uncorrelated increments,
/// symmetric marginal) of the λ process over H0 replicates.
pub fn swip_diagnostic(replicates: &[LambdaSequences], sigma2: f64) -> Result<SwipReport> {
    if replicates.len() < SWIP_MIN_REPLICATES {
        return Err(Error::InsufficientReplicates {
            needed: SWIP_MIN_REPLICATES,
            got: replicates.len(),
        });
    }
    let n = replicates[0].n();
    if replicates.iter().any(|r| r.n() != n) {
        return Err(Error::InvalidArgument("replicates differ in sample size".into()));
    }
    let root_n = (n as f64).sqrt();
    let at = |seq: &LambdaSequences, t: f64| -> f64 {
        let k = (n as f64 * t).floor() as usize;
        (seq.prefix()[k] - k as f64 * sigma2) / root_n
    };

    // Process values at 0, 0.25, 0.5, 0.75, 1 for every replicate.
    let times = [0.0, 0.25, 0.5, 0.75, 1.0];
    let paths: Vec<[f64; 5]> = replicates
        .iter()
        .map(|r| times.map(|t| if t == 0.0 { 0.0 } else { at(r, t) }))
        .collect();

    let column = |j: usize| -> Vec<f64> { paths.iter().map(|p| p[j]).collect() };
    let variances: Vec<f64> = (1..5).map(|j| sample_variance(&column(j))).collect();
    let increment = |a: usize, b: usize| -> Vec<f64> { paths.iter().map(|p| p[b] - p[a]).collect() };

    let pairs = [(0, 2, 2, 4), (0, 1, 1, 2), (2, 3, 3, 4), (0, 1, 3, 4)];
    let increment_correlations = pairs
        .iter()
        .map(|&(a, b, c, d)| {
            let r = correlation(&increment(a, b), &increment(c, d));
            ((times[a], times[b], times[c], times[d]), r)
        })
        .collect();

    Ok(SwipReport {
        replicates: replicates.len(),
        grid: SWIP_GRID.to_vec(),
        variance_ratio_half: variances[1] / variances[3],
        variances,
        increment_correlations,
        skewness_at_one: skewness(&column(4)),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn skewness(v: &[f64]) -> f64 {
    let m = mean(v);
    let len = v.len() as f64;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / len;
    let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / len;
    m3 / m2.powf(1.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn collinear_data_give_zero_sequences() {
        let x: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        let ds = Dataset::with_identity(DMatrix::from_column_slice(8, 1, &x), &y).unwrap();
        let seq = lambda_sequences(&ds).unwrap();
        assert!(seq.prefix().iter().all(|v| v.abs() < 1e-12));
        assert!(seq.suffix().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn boundary_conventions() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, 0.3, 2.0, -1.0, 0.5, 0.7, 3.0, 1.1, -0.4, 2.2, 1.5, 0.1]);
        let ds = Dataset::with_identity(x, &[0.2, 1.4, -0.3, 2.2, 0.9, -1.7]).unwrap();
        let seq = lambda_sequences(&ds).unwrap();
        assert_eq!(seq.prefix()[0], 0.0);
        assert_eq!(seq.prefix()[1], 0.0);
        // two rows cannot span three columns
        assert_eq!(seq.prefix()[2], 0.0);
        assert_eq!(seq.suffix()[6], 0.0);
        assert_eq!(seq.suffix()[5], 0.0);
        assert_eq!(seq.suffix()[4], 0.0);
        assert_eq!(seq.prefix()[6], seq.suffix()[0]);
        assert!(seq.prefix()[3] > 0.0);
    }

    #[test]
    fn too_few_replicates() {
        let seq = LambdaSequences::from_parts(1, vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]).unwrap();
        let reps = vec![seq; 10];
        assert!(matches!(
            swip_diagnostic(&reps, 1.0),
            Err(Error::InsufficientReplicates { needed: 200, got: 10 })
        ));
    }

    #[test]
    fn from_parts_checks_boundaries() {
        assert!(LambdaSequences::from_parts(1, vec![0.0, 0.1, 1.0], vec![1.0, 0.0, 0.0]).is_err());
        assert!(LambdaSequences::from_parts(1, vec![0.0, 0.0, 1.0], vec![2.0, 0.0, 0.0]).is_err());
    }
}
