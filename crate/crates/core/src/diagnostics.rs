//! Population-level quantities behind the null limit and the consistency
//! theory: the misfit constants α and φ, the detectability margin
//! `ηκ − 𝛗ᵀ𝛗`, its sharpened variant and the per-t profiles that govern the
//! changepoint estimator.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::datagen::{self, DesignSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};

/// Reference sample size for finite-average design moments.
pub const DEFAULT_MOMENT_N: usize = 100_000;

/// Tolerance of the `Δ ≈ Δ_ζ + Δ_{−ζ}` check.
pub const ADDITIVITY_TOL: f64 = 1e-8;

/// Blocks of `Σ^{-1/2}` for a scalar response.
#[derive(Debug, Clone)]
pub struct CovBlocks {
    pub sigma_inv_sqrt: SymMatrix,
    pub bar_theta: DMatrix<f64>,
    pub bar_cross: DVector<f64>,
    pub bar_eps: f64,
}

impl CovBlocks {
    /// Splits `Σ^{-1/2}` of a `(p+1)×(p+1)` error covariance.
    pub fn from_sigma(sigma: &SymMatrix) -> Result<Self> {
        let d = sigma.dim();
        if d < 2 {
            return Err(Error::InvalidArgument(format!(
                "need a (p+1)x(p+1) covariance with p ≥ 1, got {d}x{d}"
            )));
        }
        let s = linalg::inv_sqrt_spd(sigma)?;
        let p = d - 1;
        Ok(Self {
            bar_theta: s.block(0, 0, p, p),
            bar_cross: s.block(0, p, p, 1).column(0).into_owned(),
            bar_eps: s.get(p, p),
            sigma_inv_sqrt: s,
        })
    }

    pub fn p(&self) -> usize {
        self.bar_theta.nrows()
    }

    /// `Σ̄_Θ + Σ̄_{Θ,ε} bᵀ`.
    fn left(&self, b: &DVector<f64>) -> DMatrix<f64> {
        &self.bar_theta + &self.bar_cross * b.transpose()
    }

    /// `Σ̄_{Θ,ε} + b Σ̄_ε`.
    fn right(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.bar_cross + b * self.bar_eps
    }

    /// `ϑ = Σ̄_Θ + β Σ̄_{Θ,ε}ᵀ`.
    pub fn vartheta(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        &self.bar_theta + beta * self.bar_cross.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct AlphaPhi {
    pub alpha: DVector<f64>,
    pub phi: f64,
    pub vartheta: DMatrix<f64>,
}

pub fn compute_alpha_phi(blocks: &CovBlocks, beta: &DVector<f64>) -> Result<AlphaPhi> {
    check_len(blocks, beta, "beta")?;
    let vartheta = blocks.vartheta(beta);
    let alpha = solve_checked(&vartheta, &blocks.right(beta))?;
    let phi = blocks.bar_eps - blocks.bar_cross.dot(&alpha);
    Ok(AlphaPhi { alpha, phi, vartheta })
}

/// Inputs of the detectability conditions for a change at fraction `zeta`.
#[derive(Debug, Clone)]
pub struct DetectabilityInput {
    pub beta: DVector<f64>,
    pub delta: DVector<f64>,
    pub sigma2: f64,
    pub zeta: f64,
    pub delta_zeta: SymMatrix,
    pub delta_minus_zeta: SymMatrix,
    pub delta_full: SymMatrix,
}

impl DetectabilityInput {
    pub fn validate(&self) -> Result<()> {
        let p = self.beta.len();
        if p == 0 || self.delta.len() != p {
            return Err(Error::InvalidArgument(format!(
                "beta and delta must have equal positive length, got {} and {}",
                p,
                self.delta.len()
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("σ² must be positive, got {}", self.sigma2)));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::InvalidArgument(format!("ζ must lie in (0,1), got {}", self.zeta)));
        }
        for (name, m) in [
            ("Δ_ζ", &self.delta_zeta),
            ("Δ_{−ζ}", &self.delta_minus_zeta),
            ("Δ", &self.delta_full),
        ] {
            if m.dim() != p {
                return Err(Error::InvalidArgument(format!("{name} must be {p}x{p}")));
            }
            require_pd(name, m)?;
        }
        let gap = (self.delta_full.as_matrix() - self.delta_zeta.as_matrix() - self.delta_minus_zeta.as_matrix()).amax();
        if gap > ADDITIVITY_TOL {
            return Err(Error::AssumptionViolated(format!(
                "Δ differs from Δ_ζ + Δ_{{−ζ}} by {gap:.3e}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Margin {
    pub kappa: f64,
    pub varphi: Vec<f64>,
    pub eta: f64,
    pub margin: f64,
}

/// `κ`, `𝛗`, `η` and `ηκ − 𝛗ᵀ𝛗` for a change of size `δ` at `ζ`.
pub fn detectability_margin(inp: &DetectabilityInput, blocks: &CovBlocks) -> Result<Margin> {
    inp.validate()?;
    check_len(blocks, &inp.beta, "beta")?;
    let after = &inp.beta + &inp.delta;
    let (kappa, varphi) = kappa_varphi(
        blocks,
        &inp.beta,
        &after,
        inp.delta_zeta.as_matrix(),
        inp.delta_minus_zeta.as_matrix(),
    );
    let eta = eta_at(blocks, &inp.beta, inp.delta_full.as_matrix(), inp.sigma2)?;
    Ok(Margin {
        kappa,
        margin: eta * kappa - varphi.dot(&varphi),
        varphi: varphi.iter().copied().collect(),
        eta,
    })
}

/// `κ + η − √((κ+2σ²+η)² − 4(κ+σ²−𝛗ᵀ(ϑᵀΔϑ+σ²I)⁻¹𝛗)(σ²+η))`.
pub fn sharpened_margin(inp: &DetectabilityInput, blocks: &CovBlocks) -> Result<f64> {
    let m = detectability_margin(inp, blocks)?;
    let s2 = inp.sigma2;
    let vt = blocks.vartheta(&inp.beta);
    let p = blocks.p();
    let gram = vt.transpose() * inp.delta_full.as_matrix() * &vt + DMatrix::identity(p, p) * s2;
    let varphi = DVector::from_vec(m.varphi.clone());
    let quad = varphi.dot(&solve_checked(&gram, &varphi)?);
    let (k, e) = (m.kappa, m.eta);
    let disc = (k + 2.0 * s2 + e).powi(2) - 4.0 * (k + s2 - quad) * (s2 + e);
    if disc < 0.0 {
        return Err(Error::NumericalIssue(format!(
            "negative discriminant {disc:.3e} in the sharpened margin"
        )));
    }
    Ok(k + e - disc.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfilePoint {
    pub t: f64,
    /// `η(t)κ(t) − 𝛗(t)ᵀ𝛗(t)` for `t > ζ`, the tilde version for `t < ζ`.
    pub margin: f64,
    pub after_change: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Profiles {
    pub points: Vec<ProfilePoint>,
    pub skipped: Vec<f64>,
}

/// Second-moment profile `Δ_t`, `Δ_{−t}` of a design.
pub trait MomentProfile {
    fn p(&self) -> usize;
    /// Limit of `n⁻¹ Z_[nt]ᵀ Z_[nt]` (first `[nt]` rows).
    fn leading(&self, t: f64) -> Result<SymMatrix>;
    /// Limit of `n⁻¹ Z_{−[nt]}ᵀ Z_{−[nt]}` (rows after `[nt]`).
    fn trailing(&self, t: f64) -> Result<SymMatrix>;
    fn full(&self) -> Result<SymMatrix>;
}

/// Finite averages `n⁻¹ Z_[nt]ᵀ Z_[nt]` of an explicit design at a
/// reference sample size.
#[derive(Debug, Clone)]
pub struct DesignMoments {
    z: DMatrix<f64>,
}

impl DesignMoments {
    pub fn from_matrix(z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() < 2 || z.ncols() == 0 {
            return Err(Error::InvalidArgument("design needs rows and columns".into()));
        }
        Ok(Self { z })
    }

    /// Regenerates `spec` at `reference_n` rows.
    pub fn from_spec(spec: &DesignSpec, reference_n: usize) -> Result<Self> {
        if spec.matrix.is_some() {
            return Err(Error::InvalidArgument(
                "a custom design cannot be regenerated at another n; use from_matrix".into(),
            ));
        }
        let spec = DesignSpec {
            n: reference_n,
            ..spec.clone()
        };
        Self::from_matrix(datagen::gen_design(&spec)?)
    }

    fn rows_moment(&self, start: usize, end: usize) -> Result<SymMatrix> {
        let n = self.z.nrows() as f64;
        let part = self.z.rows(start, end - start);
        SymMatrix::new(part.transpose() * part / n)
    }

    fn split(&self, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("t must lie in [0,1], got {t}")));
        }
        Ok((self.z.nrows() as f64 * t).floor() as usize)
    }
}

impl MomentProfile for DesignMoments {
    fn p(&self) -> usize {
        self.z.ncols()
    }

    fn leading(&self, t: f64) -> Result<SymMatrix> {
        let k = self.split(t)?;
        self.rows_moment(0, k)
    }

    fn trailing(&self, t: f64) -> Result<SymMatrix> {
        let k = self.split(t)?;
        self.rows_moment(k, self.z.nrows())
    }

    fn full(&self) -> Result<SymMatrix> {
        self.rows_moment(0, self.z.nrows())
    }
}

impl DetectabilityInput {
    /// Input with the Δ matrices read off a moment profile at `zeta`.
    pub fn from_profile(
        profile: &impl MomentProfile,
        beta: DVector<f64>,
        delta: DVector<f64>,
        sigma2: f64,
        zeta: f64,
    ) -> Result<Self> {
        Ok(Self {
            beta,
            delta,
            sigma2,
            zeta,
            delta_zeta: profile.leading(zeta)?,
            delta_minus_zeta: profile.trailing(zeta)?,
            delta_full: profile.full()?,
        })
    }
}

/// Estimator consistency margins over `t_grid`.
pub fn corollary_profiles(
    inp: &DetectabilityInput,
    blocks: &CovBlocks,
    profile: &impl MomentProfile,
    t_grid: &[f64],
) -> Result<Profiles> {
    inp.validate()?;
    check_len(blocks, &inp.beta, "beta")?;
    if profile.p() != inp.beta.len() {
        return Err(Error::InvalidArgument("moment profile and beta differ in dimension".into()));
    }
    let after = &inp.beta + &inp.delta;
    let dz = inp.delta_zeta.as_matrix();
    let dmz = inp.delta_minus_zeta.as_matrix();
    let mut points = Vec::with_capacity(t_grid.len());
    let mut skipped = Vec::new();
    for &t in t_grid {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidArgument(format!("t must lie in (0,1), got {t}")));
        }
        if t == inp.zeta {
            log::info!("profile skips t = ζ = {t}");
            skipped.push(t);
            continue;
        }
        let margin = if t > inp.zeta {
            let dt = profile.leading(t)?;
            let tail = dt.as_matrix() - dz;
            let (k, f) = kappa_varphi(blocks, &inp.beta, &after, dz, &tail);
            let e = eta_at(blocks, &inp.beta, dt.as_matrix(), t * inp.sigma2)?;
            e * k - f.dot(&f)
        } else {
            let dmt = profile.trailing(t)?;
            let tail = dmt.as_matrix() - dmz;
            let (k, f) = kappa_varphi(blocks, &inp.beta, &after, dmz, &tail);
            let e = eta_at(blocks, &inp.beta, dmt.as_matrix(), (1.0 - t) * inp.sigma2)?;
            e * k - f.dot(&f)
        };
        points.push(ProfilePoint {
            t,
            margin,
            after_change: t > inp.zeta,
        });
    }
    Ok(Profiles { points, skipped })
}

// κ = aᵀ D₁ a + a'ᵀ D₂ a' and 𝛗 = L(β) D₁ a + L(β+δ) D₂ a'.
fn kappa_varphi(
    blocks: &CovBlocks,
    before: &DVector<f64>,
    after: &DVector<f64>,
    d1: &DMatrix<f64>,
    d2: &DMatrix<f64>,
) -> (f64, DVector<f64>) {
    let a = blocks.right(before);
    let b = blocks.right(after);
    let d1a = d1 * &a;
    let d2b = d2 * &b;
    let kappa = a.dot(&d1a) + b.dot(&d2b);
    let varphi = blocks.left(before) * d1a + blocks.left(after) * d2b;
    (kappa, varphi)
}

// λ_min(L(β) D L(β)ᵀ + sI) − s.
fn eta_at(blocks: &CovBlocks, beta: &DVector<f64>, d: &DMatrix<f64>, shift: f64) -> Result<f64> {
    let l = blocks.left(beta);
    let p = blocks.p();
    let m = SymMatrix::new(&l * d * l.transpose() + DMatrix::identity(p, p) * shift)?;
    Ok(linalg::smallest_eigenvalue(&m)? - shift)
}

fn require_pd(name: &str, m: &SymMatrix) -> Result<()> {
    let smallest = linalg::smallest_eigenvalue(m)?;
    let scale = m.as_matrix().amax();
    if !(smallest > 1e-12 * scale) || scale == 0.0 {
        return Err(Error::AssumptionViolated(format!(
            "{name} is not positive definite (smallest eigenvalue {smallest:.3e})"
        )));
    }
    Ok(())
}

fn check_len(blocks: &CovBlocks, v: &DVector<f64>, what: &str) -> Result<()> {
    if v.len() != blocks.p() {
        return Err(Error::InvalidArgument(format!(
            "{what} has length {}, covariance implies p = {}",
            v.len(),
            blocks.p()
        )));
    }
    Ok(())
}

fn solve_checked(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = m.amax();
    let lu = m.clone().lu();
    let u = lu.u();
    let min_pivot = (0..m.nrows()).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if scale == 0.0 || min_pivot <= 1e-13 * scale {
        return Err(Error::AssumptionViolated(format!(
            "ϑ-type matrix is singular (pivot {min_pivot:.3e})"
        )));
    }
    lu.solve(rhs)
        .ok_or_else(|| Error::AssumptionViolated("singular system".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn equidistant(n: usize) -> DesignMoments {
        DesignMoments::from_spec(&DesignSpec::equidistant(10, 1.0), n).unwrap()
    }

    #[test]
    fn identity_sigma_alpha_phi() {
        let b = CovBlocks::from_sigma(&SymMatrix::identity(2)).unwrap();
        let ap = compute_alpha_phi(&b, &scalar(1.7)).unwrap();
        assert!((ap.alpha[0] - 1.7).abs() < 1e-14);
        assert!((ap.phi - 1.0).abs() < 1e-14);
    }

    #[test]
    fn block_diagonal_phi_is_exact() {
        let s = SymMatrix::new(DMatrix::from_row_slice(3, 3, &[2.0, 0.4, 0.0, 0.4, 1.0, 0.0, 0.0, 0.0, 0.7])).unwrap();
        let b = CovBlocks::from_sigma(&s).unwrap();
        assert!(b.bar_cross.iter().all(|&c| c == 0.0));
        let beta = DVector::from_vec(vec![0.3, -1.2]);
        let ap = compute_alpha_phi(&b, &beta).unwrap();
        assert_eq!(ap.phi, b.bar_eps);
        let direct = b.bar_theta.clone().try_inverse().unwrap() * &beta * b.bar_eps;
        assert!((ap.alpha - direct).amax() < 1e-12);
    }

    #[test]
    fn singular_vartheta() {
        // Σ̄_Θ + β Σ̄_{Θ,ε} = 0 for a suitably chosen β.
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let b = CovBlocks::from_sigma(&s).unwrap();
        let beta = -b.bar_theta[(0, 0)] / b.bar_cross[0];
        assert!(matches!(
            compute_alpha_phi(&b, &scalar(beta)),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn eta_for_equidistant() {
        let d = equidistant(100_000);
        let inp = DetectabilityInput::from_profile(&d, scalar(1.0), scalar(0.0), 1.0, 0.5).unwrap();
        let b = CovBlocks::from_sigma(&SymMatrix::identity(2)).unwrap();
        let m = detectability_margin(&inp, &b).unwrap();
        assert!((m.eta - 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn zero_slope_gives_zero_margin() {
        let d = equidistant(1000);
        let inp = DetectabilityInput::from_profile(&d, scalar(0.0), scalar(0.0), 0.5, 0.3).unwrap();
        let b = CovBlocks::from_sigma(&SymMatrix::identity(2)).unwrap();
        let m = detectability_margin(&inp, &b).unwrap();
        assert_eq!(m.kappa, 0.0);
        assert_eq!(m.varphi, vec![0.0]);
        assert_eq!(m.margin, 0.0);
        assert!(sharpened_margin(&inp, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn additivity_enforced() {
        let inp = DetectabilityInput {
            beta: scalar(1.0),
            delta: scalar(0.0),
            sigma2: 1.0,
            zeta: 0.5,
            delta_zeta: SymMatrix::from_diagonal(&[0.5f64.powi(3) / 3.0]).unwrap(),
            delta_minus_zeta: SymMatrix::from_diagonal(&[0.5f64.powi(3) / 3.0]).unwrap(),
            delta_full: SymMatrix::from_diagonal(&[1.0 / 3.0]).unwrap(),
        };
        assert!(matches!(inp.validate(), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn non_pd_rejected() {
        let inp = DetectabilityInput {
            beta: scalar(1.0),
            delta: scalar(0.0),
            sigma2: 1.0,
            zeta: 0.5,
            delta_zeta: SymMatrix::from_diagonal(&[0.0]).unwrap(),
            delta_minus_zeta: SymMatrix::from_diagonal(&[1.0]).unwrap(),
            delta_full: SymMatrix::from_diagonal(&[1.0]).unwrap(),
        };
        assert!(matches!(inp.validate(), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn profile_skips_zeta() {
        let d = equidistant(2000);
        let inp = DetectabilityInput::from_profile(&d, scalar(1.0), scalar(0.2), 1.0, 0.5).unwrap();
        let b = CovBlocks::from_sigma(&SymMatrix::identity(2)).unwrap();
        let pr = corollary_profiles(&inp, &b, &d, &[0.25, 0.5, 0.75]).unwrap();
        assert_eq!(pr.skipped, vec![0.5]);
        assert_eq!(pr.points.len(), 2);
        assert!(pr.points.iter().all(|p| p.margin.is_finite()));
        assert!(!pr.points[0].after_change && pr.points[1].after_change);
    }
}
