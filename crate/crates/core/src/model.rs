//! Errors-in-variables data, the generalized total least squares fit, and the
//! two data transforms (exact-regressor projection, random-spacing rescale).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, GramAccumulator, SymMatrix};

/// Observed covariates `X` (n×p), responses `Y` (n×q) and the known error
/// covariance shape `Σ` of `[Θ, ε]`, known up to a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    sigma: SymMatrix,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, sigma: SymMatrix) -> Result<Self> {
        let (n, p) = x.shape();
        let q = y.ncols();
        if y.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "X has {n} rows but Y has {}",
                y.nrows()
            )));
        }
        if p == 0 || q == 0 {
            return Err(Error::InvalidArgument("X and Y need at least one column".into()));
        }
        if n < p + q {
            return Err(Error::InsufficientData(format!(
                "{n} rows cannot support {} columns",
                p + q
            )));
        }
        if sigma.dim() != p + q {
            return Err(Error::InvalidArgument(format!(
                "Σ is {}x{}, expected {}x{}",
                sigma.dim(),
                sigma.dim(),
                p + q,
                p + q
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data contain non-finite values".into()));
        }
        let smallest = linalg::smallest_eigenvalue(&sigma)?;
        let tol = linalg::pd_tolerance(&sigma);
        if !(smallest > tol) {
            return Err(Error::NotPositiveDefinite { smallest, tol });
        }
        Ok(Self { x, y, sigma })
    }

    /// Univariate response with `Σ = I`.
    pub fn with_identity(x: DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let p = x.ncols();
        let y = DMatrix::from_column_slice(y.len(), 1, y);
        Self::new(x, y, SymMatrix::identity(p + 1))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    /// `[X, Y]` as one n×(p+q) matrix.
    pub fn joined(&self) -> DMatrix<f64> {
        let (n, p, q) = (self.n(), self.p(), self.q());
        DMatrix::from_fn(n, p + q, |i, j| {
            if j < p {
                self.x[(i, j)]
            } else {
                self.y[(i, j - p)]
            }
        })
    }

    /// Same data with rows in reverse order.
    pub fn reversed(&self) -> Self {
        let n = self.n();
        Self {
            x: DMatrix::from_fn(n, self.p(), |i, j| self.x[(n - 1 - i, j)]),
            y: DMatrix::from_fn(n, self.q(), |i, j| self.y[(n - 1 - i, j)]),
            sigma: self.sigma.clone(),
        }
    }
}

/// `[X, Y]·Σ^{-1/2}`.
pub fn transform(ds: &Dataset) -> Result<DMatrix<f64>> {
    let joined = ds.joined();
    if ds.sigma.is_identity() {
        return Ok(joined);
    }
    let r = linalg::inv_sqrt_spd(&ds.sigma)?;
    Ok(joined * r.as_matrix())
}

/// Result of the generalized TLS fit.
#[derive(Debug, Clone)]
pub struct TlsFit {
    /// p×q slope estimate.
    pub beta_hat: DMatrix<f64>,
    /// Smallest eigenvalue of `Σ⁻¹[X,Y]ᵀ[X,Y]` (sum of the q smallest when q > 1).
    pub lambda: f64,
    pub fitted_theta: DMatrix<f64>,
    pub fitted_eps: DMatrix<f64>,
}

/// Generalized TLS: minimizes `‖[Θ, ε]Σ^{-1/2}‖_F` subject to `Y − ε = (X − Θ)β`.
///
/// For q = 1 the slope comes from the normal equations
/// `(XᵀX − λΣ_Θ) b = XᵀY − λΣ_{Θ,ε}`. For q > 1 the slope is read off the
/// q-dimensional smallest eigenspace, since a single scalar shift no longer
/// solves the problem.
pub fn tls_fit(ds: &Dataset) -> Result<TlsFit> {
    let (n, p, q) = (ds.n(), ds.p(), ds.q());
    let dim = p + q;
    if n < dim {
        return Err(Error::InsufficientData(format!("{n} rows for {dim} columns")));
    }
    let c = transform(ds)?;
    let mut acc = GramAccumulator::new(dim);
    let mut row = vec![0.0; dim];
    for i in 0..n {
        for j in 0..dim {
            row[j] = c[(i, j)];
        }
        acc.update(&row)?;
    }
    let eig = linalg::sym_eigen(&acc.gram())?;
    let w = &eig.eigenvalues;
    let top = w[dim - 1].abs().max(f64::MIN_POSITIVE);
    if dim > q && w[q] - w[q - 1] <= 1e-10 * top {
        return Err(Error::NonIdentifiable {
            lower: w[q - 1],
            upper: w[q],
        });
    }
    let lambda: f64 = w[..q].iter().sum();

    // Smallest eigenspace mapped back to the original coordinates: columns of
    // Σ^{-1/2}V₂ span the null directions [β; −I] of the fitted data.
    let sigma_inv_sqrt = linalg::inv_sqrt_spd(&ds.sigma)?;
    let v2 = eig.eigenvectors.columns(0, q).into_owned();
    let u = sigma_inv_sqrt.as_matrix() * &v2;

    let beta_hat = if q == 1 {
        normal_equation_slope(ds, lambda)?
    } else {
        let u1 = u.rows(0, p).into_owned();
        let u2 = u.rows(p, q).into_owned();
        let u2_inv = u2
            .try_inverse()
            .ok_or_else(|| Error::DegenerateFit("response block of the eigenspace is singular".into()))?;
        -(u1 * u2_inv)
    };

    // [Θ̂, ε̂] = [X,Y]·U·(ΣU)ᵀ, the rank-q correction in original coordinates.
    let corr = ds.joined() * &u * (ds.sigma.as_matrix() * &u).transpose();
    let fitted_theta = corr.columns(0, p).into_owned();
    let fitted_eps = corr.columns(p, q).into_owned();

    Ok(TlsFit {
        beta_hat,
        lambda,
        fitted_theta,
        fitted_eps,
    })
}

fn normal_equation_slope(ds: &Dataset, lambda: f64) -> Result<DMatrix<f64>> {
    let p = ds.p();
    let sigma_theta = ds.sigma.block(0, 0, p, p);
    let sigma_cross = ds.sigma.block(0, p, p, 1);
    let xt = ds.x.transpose();
    let lhs = &xt * &ds.x - sigma_theta * lambda;
    let rhs = &xt * &ds.y - sigma_cross * lambda;
    let scale = lhs.amax().max(f64::MIN_POSITIVE);
    let lu = lhs.lu();
    let u = lu.u();
    let min_pivot = (0..p).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-13 * scale) {
        return Err(Error::DegenerateFit(
            "XᵀX − λΣ_Θ is numerically singular".into(),
        ));
    }
    lu.solve(&rhs)
        .ok_or_else(|| Error::DegenerateFit("XᵀX − λΣ_Θ is singular".into()))
}

/// Precisely observed regressors `W` (n×w) to be projected out.
#[derive(Debug, Clone)]
pub struct ExactRegressors {
    w: DMatrix<f64>,
}

impl ExactRegressors {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.ncols() == 0 {
            return Err(Error::InvalidArgument("no exact regressor columns".into()));
        }
        let rank = numerical_rank(&w);
        if rank < w.ncols() {
            return Err(Error::RankDeficient {
                rank,
                cols: w.ncols(),
            });
        }
        Ok(Self { w })
    }

    /// Single column of ones.
    pub fn intercept(n: usize) -> Self {
        Self {
            w: DMatrix::from_element(n, 1, 1.0),
        }
    }

    /// Appends a column of ones.
    pub fn with_intercept(self) -> Result<Self> {
        let (n, k) = self.w.shape();
        let w = self.w.insert_column(k, 1.0);
        debug_assert_eq!(w.nrows(), n);
        Self::new(w)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }
}

fn numerical_rank(w: &DMatrix<f64>) -> usize {
    if w.nrows() < w.ncols() {
        return w.nrows().min(w.ncols());
    }
    let qr = w.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..w.ncols()).map(|i| r[(i, i)].abs()).collect();
    let top = diag.iter().cloned().fold(0.0, f64::max);
    diag.iter().filter(|&&d| d > 1e-12 * top.max(f64::MIN_POSITIVE)).count()
}

/// Applies `R = I − W(WᵀW)⁻¹Wᵀ` to both X and Y; Σ passes through.
pub fn project_out(ds: &Dataset, ex: &ExactRegressors) -> Result<Dataset> {
    let w = &ex.w;
    if w.nrows() != ds.n() {
        return Err(Error::InvalidArgument(format!(
            "exact regressors have {} rows, data have {}",
            w.nrows(),
            ds.n()
        )));
    }
    if w.ncols() >= ds.n() {
        return Err(Error::InvalidArgument(format!(
            "{} exact regressors leave no residual space for {} rows",
            w.ncols(),
            ds.n()
        )));
    }
    let q = w.clone().qr().q();
    let project = |m: &DMatrix<f64>| m - &q * (q.transpose() * m);
    Ok(Dataset {
        x: project(&ds.x),
        y: project(&ds.y),
        sigma: ds.sigma.clone(),
    })
}

/// Default `ε` for [`rescale_random_spacing`].
pub const DEFAULT_RESCALE_EPS: f64 = 1.0;

/// Divides both X and Y by `max|X| + eps`. Only defined for p = 1.
pub fn rescale_random_spacing(ds: &Dataset, eps: f64) -> Result<Dataset> {
    if ds.p() != 1 {
        return Err(Error::InvalidArgument(format!(
            "rescaling needs a single covariate, got p = {}",
            ds.p()
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let divisor = ds.x.amax() + eps;
    Ok(Dataset {
        x: &ds.x / divisor,
        y: &ds.y / divisor,
        sigma: ds.sigma.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn noiseless_collinear_fit() {
        let ds = Dataset::with_identity(col(&[1.0, 2.0, 3.0]), &[2.0, 4.0, 6.0]).unwrap();
        let fit = tls_fit(&ds).unwrap();
        assert!((fit.beta_hat[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(fit.lambda.abs() < 1e-12);
    }

    #[test]
    fn transform_identity_and_diagonal() {
        let x = col(&[1.0, 2.0, 3.0]);
        let ds = Dataset::with_identity(x.clone(), &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(transform(&ds).unwrap(), ds.joined());

        let sigma = SymMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        let ds = Dataset::new(x, col(&[3.0, 1.0, 2.0]), sigma).unwrap();
        let t = transform(&ds).unwrap();
        for i in 0..3 {
            assert!((t[(i, 0)] - 0.5 * ds.x()[(i, 0)]).abs() < 1e-15);
            assert!((t[(i, 1)] - ds.y()[(i, 0)]).abs() < 1e-15);
        }
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let err = Dataset::with_identity(x, &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn tied_eigenvalues_are_flagged() {
        // [X, Y] with orthogonal, equal-norm columns: Gram = 2I.
        let ds = Dataset::with_identity(col(&[1.0, 1.0, 0.0, 0.0]), &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(tls_fit(&ds), Err(Error::NonIdentifiable { .. })));
    }

    #[test]
    fn centering_with_intercept() {
        let ds = Dataset::with_identity(col(&[0.5, 1.0, 4.0]), &[1.0, 2.0, 3.0]).unwrap();
        let out = project_out(&ds, &ExactRegressors::intercept(3)).unwrap();
        let expect = [-1.0, 0.0, 1.0];
        for i in 0..3 {
            assert!((out.y()[(i, 0)] - expect[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_needs_residual_space() {
        let ds = Dataset::with_identity(col(&[0.5, 1.0, 4.0]), &[1.0, 2.0, 3.0]).unwrap();
        let w = ExactRegressors::new(DMatrix::identity(3, 3)).unwrap();
        assert!(project_out(&ds, &w).is_err());
    }

    #[test]
    fn rank_deficient_exact_regressors() {
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            ExactRegressors::new(w),
            Err(Error::RankDeficient { rank: 1, cols: 2 })
        ));
    }

    #[test]
    fn rescale_divisor() {
        let ds = Dataset::with_identity(col(&[-100.0, 20.0, 50.0]), &[1.0, 2.0, 3.0]).unwrap();
        let out = rescale_random_spacing(&ds, 1.0).unwrap();
        assert!((out.x()[(0, 0)] + 100.0 / 101.0).abs() < 1e-15);
        assert!((out.y()[(2, 0)] - 3.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn rescale_shrinks_unit_interval_data() {
        let ds = Dataset::with_identity(col(&[0.2, 0.6, 1.0]), &[0.1, 0.3, 0.4]).unwrap();
        let out = rescale_random_spacing(&ds, 9.0).unwrap();
        for i in 0..3 {
            assert!((out.x()[(i, 0)] - ds.x()[(i, 0)] / 10.0).abs() < 1e-15);
            assert!((out.y()[(i, 0)] - ds.y()[(i, 0)] / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rescale_requires_single_covariate() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let ds = Dataset::with_identity(x, &[1.0, 2.0, 3.5]).unwrap();
        assert!(matches!(
            rescale_random_spacing(&ds, 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }
}
