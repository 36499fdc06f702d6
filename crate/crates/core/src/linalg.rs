//! Small dense symmetric kernels.
//!
//! Every matrix handled here is `(p + q) × (p + q)` with `p + q` in the
//! single digits, so the eigen-decomposition is a plain cyclic Jacobi sweep.
//! Jacobi is slow for large matrices but it is backward stable and keeps the
//! smallest eigenvalue accurate relative to the matrix norm, which is what the
//! λ sweep needs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Off-diagonal Frobenius norm (relative to the input norm) at which Jacobi stops.
const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Square matrix whose entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds from a full square matrix. Entries that differ from their
    /// transpose by more than round-off are rejected; the rest are averaged.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix);
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let dim = m.nrows();
        let mut inner = m;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (inner[(i, j)], inner[(j, i)]);
                if (a - b).abs() > 1e-10 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                inner[(i, j)] = avg;
                inner[(j, i)] = avg;
            }
        }
        Ok(Self { inner })
    }

    /// Builds from the upper triangle, mirroring it below the diagonal.
    pub fn from_upper(dim: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let mut inner = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        if inner.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix);
        }
        Ok(Self { inner })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_upper(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn is_identity(&self) -> bool {
        self.inner == DMatrix::identity(self.dim(), self.dim())
    }

    /// Returns `self + c·I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut inner = self.inner.clone();
        for i in 0..self.dim() {
            inner[(i, i)] += c;
        }
        Self { inner }
    }

    /// Sub-block `[r0..r0+rows) × [c0..c0+cols)` as a plain matrix.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> DMatrix<f64> {
        self.inner.view((r0, c0), (rows, cols)).into_owned()
    }

    /// `Bᵀ · self · B` for any conformable `B`.
    pub fn congruence(&self, b: &DMatrix<f64>) -> Result<Self> {
        let prod = b.transpose() * &self.inner * b;
        Self::from_upper(prod.nrows(), |i, j| 0.5 * (prod[(i, j)] + prod[(j, i)]))
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

/// Cyclic Jacobi eigen-decomposition; eigenvalues come back ascending.
pub fn sym_eigen(m: &SymMatrix) -> Result<SymEigen> {
    let n = m.dim();
    let mut a = m.inner.clone();
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMatrix);
    }
    let mut v = DMatrix::<f64>::identity(n, n);
    let norm = a.norm();

    if norm > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += 2.0 * a[(p, q)] * a[(p, q)];
                }
            }
            if off.sqrt() <= JACOBI_TOL * norm {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    rotate(&mut a, &mut v, p, q, c, s, t);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

// Applies the plane rotation zeroing a[(p, q)].
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let n = a.nrows();
    let apq = a[(p, q)];
    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a[(r, p)];
        let arq = a[(r, q)];
        let np = c * arp - s * arq;
        let nq = s * arp + c * arq;
        a[(r, p)] = np;
        a[(p, r)] = np;
        a[(r, q)] = nq;
        a[(q, r)] = nq;
    }
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = c * vrp - s * vrq;
        v[(r, q)] = s * vrp + c * vrq;
    }
}

pub fn smallest_eigenvalue(m: &SymMatrix) -> Result<f64> {
    Ok(sym_eigen(m)?.eigenvalues[0])
}

/// Sum of the `q` smallest eigenvalues.
pub fn sum_q_smallest(m: &SymMatrix, q: usize) -> Result<f64> {
    if q == 0 || q > m.dim() {
        return Err(Error::InvalidArgument(format!(
            "q must lie in 1..={}, got {q}",
            m.dim()
        )));
    }
    Ok(sym_eigen(m)?.eigenvalues[..q].iter().sum())
}

/// Positive-definiteness threshold relative to the mean eigenvalue.
pub fn pd_tolerance(m: &SymMatrix) -> f64 {
    1e-12 * m.trace() / m.dim() as f64
}

/// Symmetric inverse square root `m^{-1/2}` of a positive definite matrix.
pub fn inv_sqrt_spd(m: &SymMatrix) -> Result<SymMatrix> {
    spectral_map(m, |w| 1.0 / w.sqrt())
}

/// Symmetric square root `m^{1/2}` of a positive definite matrix.
pub fn sqrt_spd(m: &SymMatrix) -> Result<SymMatrix> {
    spectral_map(m, f64::sqrt)
}

fn spectral_map(m: &SymMatrix, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    let eig = sym_eigen(m)?;
    let tol = pd_tolerance(m);
    let smallest = eig.eigenvalues[0];
    if !(smallest > tol) {
        return Err(Error::NotPositiveDefinite { smallest, tol });
    }
    let v = &eig.eigenvectors;
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&w| f(w)));
    let r = v * DMatrix::from_diagonal(&d) * v.transpose();
    SymMatrix::from_upper(m.dim(), |i, j| 0.5 * (r[(i, j)] + r[(j, i)]))
}

/// Running Gram matrix `Σ rowᵢ rowᵢᵀ` with entries held in double-double
/// precision; each product is formed exactly before it is added.
#[derive(Debug, Clone)]
pub struct GramAccumulator {
    dim: usize,
    entries: Vec<Dd>,
    count: usize,
}

impl GramAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![Dd::ZERO; dim * (dim + 1) / 2],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rows absorbed so far.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn update(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "row has length {}, accumulator dimension is {}",
                row.len(),
                self.dim
            )));
        }
        let mut k = 0;
        for i in 0..self.dim {
            for j in i..self.dim {
                self.entries[k] = self.entries[k].add(Dd::product(row[i], row[j]));
                k += 1;
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Functional form of [`GramAccumulator::update`].
    pub fn with_row(mut self, row: &[f64]) -> Result<Self> {
        self.update(row)?;
        Ok(self)
    }

    pub fn gram(&self) -> SymMatrix {
        let mut inner = DMatrix::zeros(self.dim, self.dim);
        let mut k = 0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.entries[k].value();
                inner[(i, j)] = v;
                inner[(j, i)] = v;
                k += 1;
            }
        }
        SymMatrix { inner }
    }

    /// Rayleigh quotient `vᵀGv / vᵀv` evaluated in double-double arithmetic.
    pub fn rayleigh(&self, v: &[f64]) -> f64 {
        let mut num = Dd::ZERO;
        let mut den = Dd::ZERO;
        let mut k = 0;
        for i in 0..self.dim {
            den = den.add(Dd::product(v[i], v[i]));
            for j in i..self.dim {
                let w = Dd::product(v[i], v[j]).mul(self.entries[k]);
                num = num.add(if i == j { w } else { w.add(w) });
                k += 1;
            }
        }
        num.value() / den.value()
    }

    /// Sum of the `q` smallest eigenvalues of the Gram matrix. Eigenvectors
    /// come from Jacobi on the rounded matrix; each eigenvalue is then
    /// re-evaluated as a Rayleigh quotient against the unrounded entries, so
    /// tiny eigenvalues keep their relative accuracy.
    pub fn sum_q_smallest(&self, q: usize) -> Result<f64> {
        if q == 0 || q > self.dim {
            return Err(Error::InvalidArgument(format!(
                "q must lie in 1..={}, got {q}",
                self.dim
            )));
        }
        let eig = sym_eigen(&self.gram())?;
        Ok((0..q)
            .map(|l| self.rayleigh(eig.eigenvectors.column(l).as_slice()))
            .sum())
    }
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn fast_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    fn product(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Self::two_sum(self.hi, o.hi);
        let t = Self::two_sum(self.lo, o.lo);
        let u = Self::fast_two_sum(s.hi, s.lo + t.hi);
        Self::fast_two_sum(u.hi, u.lo + t.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = Self::product(self.hi, o.hi);
        Self::fast_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}
