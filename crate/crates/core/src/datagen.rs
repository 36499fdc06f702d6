//! Synthetic errors-in-variables scenarios: deterministic designs, weakly
//! dependent error series standardized to a target variance, and H0/HA
//! dataset assembly.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::Dataset;
use crate::rng;

/// Autoregression coefficient of the AR(1) errors and ARCH(1) slope.
pub const DEPENDENCE_COEF: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// `Z_i = scale · i/(n+1)`, p = 1.
    EquidistantLinear,
    /// `Z_i = scale · [i/(n+1), (i/(n+1))^{3/2}]`, p = 2.
    PowerCurve,
    /// Rows supplied in `matrix`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub n: usize,
    pub p: usize,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

fn one() -> f64 {
    1.0
}

impl DesignSpec {
    pub fn equidistant(n: usize, scale: f64) -> Self {
        Self {
            kind: DesignKind::EquidistantLinear,
            n,
            p: 1,
            scale,
            matrix: None,
        }
    }

    pub fn power_curve(n: usize, scale: f64) -> Self {
        Self {
            kind: DesignKind::PowerCurve,
            n,
            p: 2,
            scale,
            matrix: None,
        }
    }
}

/// True design matrix `Z` (n×p).
pub fn gen_design(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    let n = spec.n;
    if n < 4 {
        return Err(Error::InvalidArgument(format!("design needs n ≥ 4, got {n}")));
    }
    let u = |i: usize| (i + 1) as f64 / (n + 1) as f64;
    let z = match spec.kind {
        DesignKind::EquidistantLinear => {
            if spec.p != 1 {
                return Err(Error::InvalidArgument(format!(
                    "equidistant-linear design has p = 1, spec says p = {}",
                    spec.p
                )));
            }
            DMatrix::from_fn(n, 1, |i, _| spec.scale * u(i))
        }
        DesignKind::PowerCurve => {
            if spec.p != 2 {
                return Err(Error::InvalidArgument(format!(
                    "power-curve design has p = 2, spec says p = {}",
                    spec.p
                )));
            }
            DMatrix::from_fn(n, 2, |i, j| spec.scale * if j == 0 { u(i) } else { u(i).powf(1.5) })
        }
        DesignKind::Custom => {
            let rows = spec
                .matrix
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("custom design needs `matrix`".into()))?;
            if rows.len() != n || rows.iter().any(|r| r.len() != spec.p) {
                return Err(Error::InvalidArgument(format!(
                    "custom design matrix must be {n}x{}",
                    spec.p
                )));
            }
            DMatrix::from_fn(n, spec.p, |i, j| spec.scale * rows[i][j])
        }
    };
    let qr = z.clone().qr();
    let r = qr.r();
    let top = (0..spec.p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..spec.p).any(|i| r[(i, i)].abs() <= 1e-12 * top) || top == 0.0 {
        return Err(Error::InvalidArgument("design does not have full column rank".into()));
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorProcess {
    #[serde(rename = "IID")]
    Iid,
    /// `x_t = 0.5 x_{t−1} + w_t`.
    #[serde(rename = "AR1")]
    Ar1,
    /// `x_t = s_t ξ_t`, `s_t² = a₀ + 0.5 x_{t−1}²`.
    #[serde(rename = "ARCH1")]
    Arch1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Innovation {
    #[serde(rename = "standard-normal")]
    StandardNormal,
    /// Student t with 3 degrees of freedom, rescaled to unit variance.
    #[serde(rename = "student-t3")]
    StudentT3,
}

impl Innovation {
    /// Factor mapping the raw draw to unit variance.
    pub fn unit_scale(self) -> f64 {
        match self {
            Innovation::StandardNormal => 1.0,
            // var(t₃) = 3
            Innovation::StudentT3 => 1.0 / 3f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProcessSpec {
    pub process: ErrorProcess,
    pub innovation: Innovation,
    /// Stationary standard deviation σ.
    #[serde(rename = "sigma")]
    pub target_sd: f64,
}

impl ErrorProcessSpec {
    pub fn new(process: ErrorProcess, innovation: Innovation, target_sd: f64) -> Result<Self> {
        let s = Self {
            process,
            innovation,
            target_sd,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn iid_normal(target_sd: f64) -> Self {
        Self {
            process: ErrorProcess::Iid,
            innovation: Innovation::StandardNormal,
            target_sd,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.target_sd > 0.0 && self.target_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "error sd must be positive, got {}",
                self.target_sd
            )));
        }
        Ok(())
    }
}

struct UnitInnovations {
    kind: Innovation,
    t3: StudentT<f64>,
}

impl UnitInnovations {
    fn new(kind: Innovation) -> Self {
        Self {
            kind,
            t3: StudentT::new(3.0).expect("3 degrees of freedom"),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            Innovation::StandardNormal => rng.sample(StandardNormal),
            Innovation::StudentT3 => self.t3.sample(rng) * self.kind.unit_scale(),
        }
    }
}

/// Error series of length `n` with stationary variance `σ²`, started from
/// the stationary variance (no burn-in).
pub fn gen_errors<R: Rng + ?Sized>(spec: &ErrorProcessSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("series length must be positive".into()));
    }
    let sd = spec.target_sd;
    let xi = UnitInnovations::new(spec.innovation);
    let mut out = Vec::with_capacity(n);
    match spec.process {
        ErrorProcess::Iid => {
            for _ in 0..n {
                out.push(sd * xi.draw(rng));
            }
        }
        ErrorProcess::Ar1 => {
            let phi = DEPENDENCE_COEF;
            let w_sd = sd * (1.0 - phi * phi).sqrt();
            let mut x = sd * xi.draw(rng);
            out.push(x);
            for _ in 1..n {
                x = phi * x + w_sd * xi.draw(rng);
                out.push(x);
            }
        }
        ErrorProcess::Arch1 => {
            let a1 = DEPENDENCE_COEF;
            let a0 = sd * sd * (1.0 - a1);
            let mut x = sd * xi.draw(rng);
            out.push(x);
            for _ in 1..n {
                let s = (a0 + a1 * x * x).sqrt();
                x = s * xi.draw(rng);
                out.push(x);
            }
        }
    }
    Ok(out)
}

/// Full synthetic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub design: DesignSpec,
    pub beta: Vec<f64>,
    /// All zero under H0.
    pub delta: Vec<f64>,
    /// Last row (1-based) generated with `beta`; ignored under H0.
    pub tau: usize,
    pub errors: ErrorProcessSpec,
    /// Σ handed to the analysis; generation itself uses independent coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_matrix: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn is_null(&self) -> bool {
        self.delta.iter().all(|&d| d == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.design.p;
        if self.beta.len() != p || self.delta.len() != p {
            return Err(Error::InvalidArgument(format!(
                "beta and delta must have length p = {p}"
            )));
        }
        if !self.is_null() && !(1..self.design.n).contains(&self.tau) {
            return Err(Error::InvalidArgument(format!(
                "tau must lie in 1..{} under the alternative, got {}",
                self.design.n, self.tau
            )));
        }
        self.errors.validate()
    }

    pub fn sigma(&self) -> Result<SymMatrix> {
        let dim = self.design.p + 1;
        match &self.sigma_matrix {
            None => Ok(SymMatrix::identity(dim)),
            Some(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidArgument(format!("sigma_matrix must be {dim}x{dim}")));
                }
                SymMatrix::new(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Generating truth kept alongside a synthetic dataset.
#[derive(Debug, Clone)]
pub struct Truth {
    pub z: DMatrix<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    /// `None` under H0.
    pub tau: Option<usize>,
    /// Noise-free response `Z_i·β` (or `Z_i·(β+δ)` after τ).
    pub signal: Vec<f64>,
    pub theta: DMatrix<f64>,
    pub eps: Vec<f64>,
}

/// Replicate `replicate` of the scenario. Each error coordinate (Θ columns,
/// then ε) comes from its own substream of `(spec.seed, replicate)`.
pub fn gen_dataset(spec: &ScenarioSpec, replicate: u64) -> Result<(Dataset, Truth)> {
    spec.validate()?;
    let z = gen_design(&spec.design)?;
    let (n, p) = z.shape();

    let mut theta = DMatrix::zeros(n, p);
    for j in 0..p {
        let mut r = rng::coordinate_stream(spec.seed, replicate, j as u64);
        let col = gen_errors(&spec.errors, n, &mut r)?;
        theta.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    let mut r = rng::coordinate_stream(spec.seed, replicate, p as u64);
    let eps = gen_errors(&spec.errors, n, &mut r)?;

    let tau = if spec.is_null() { None } else { Some(spec.tau) };
    let shifted: Vec<f64> = spec.beta.iter().zip(&spec.delta).map(|(b, d)| b + d).collect();
    let signal: Vec<f64> = (0..n)
        .map(|i| {
            let coef = match tau {
                Some(t) if i >= t => &shifted,
                _ => &spec.beta,
            };
            (0..p).map(|j| z[(i, j)] * coef[j]).sum()
        })
        .collect();

    let x = &z + &theta;
    let y: Vec<f64> = signal.iter().zip(&eps).map(|(s, e)| s + e).collect();
    let ds = Dataset::new(x, DMatrix::from_column_slice(n, 1, &y), spec.sigma()?)?;
    Ok((
        ds,
        Truth {
            z,
            beta: spec.beta.clone(),
            delta: spec.delta.clone(),
            tau,
            signal,
            theta,
            eps,
        },
    ))
}

/// Synthetic stand-in for a two-device calibration run: 100 paired readings,
/// the second device's ratio drops from 1.0 to 0.989 after reading 60.
pub fn calibration_analogue() -> ScenarioSpec {
    ScenarioSpec {
        design: DesignSpec::equidistant(100, 10.0),
        beta: vec![1.0],
        delta: vec![-0.011],
        tau: 60,
        errors: ErrorProcessSpec::iid_normal(0.01),
        sigma_matrix: None,
        seed: 60,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidistant_formula() {
        let z = gen_design(&DesignSpec::equidistant(3, 100.0));
        assert!(z.is_err(), "n = 3 is below the minimum");
        let z = gen_design(&DesignSpec::equidistant(4, 100.0)).unwrap();
        assert_eq!(z.as_slice(), &[20.0, 40.0, 60.0, 80.0]);
    }

    #[test]
    fn power_curve_rows() {
        let n = 9;
        let z = gen_design(&DesignSpec::power_curve(n, 100.0)).unwrap();
        let u = 3.0 / 10.0;
        assert!((z[(2, 0)] - 100.0 * u).abs() < 1e-12);
        assert!((z[(2, 1)] - 100.0 * u * u.sqrt()).abs() < 1e-12);
        // at i = n+1 both columns would equal the scale
        let last = (n + 1) as f64 / (n + 1) as f64;
        assert_eq!(100.0 * last.powf(1.5), 100.0);
    }

    #[test]
    fn kind_dimension_mismatch() {
        let mut d = DesignSpec::equidistant(10, 1.0);
        d.p = 2;
        assert!(gen_design(&d).is_err());
        let mut d = DesignSpec::power_curve(10, 1.0);
        d.p = 1;
        assert!(gen_design(&d).is_err());
    }

    #[test]
    fn second_moment_of_equidistant_design() {
        let n = 20_000;
        let z = gen_design(&DesignSpec::equidistant(n, 1.0)).unwrap();
        let m = z.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((m - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn t3_scale_is_exact() {
        assert_eq!(Innovation::StudentT3.unit_scale(), 1.0 / 3f64.sqrt());
        assert_eq!(Innovation::StandardNormal.unit_scale(), 1.0);
    }

    #[test]
    fn nonpositive_sd_rejected() {
        assert!(ErrorProcessSpec::new(ErrorProcess::Iid, Innovation::StandardNormal, 0.0).is_err());
    }

    #[test]
    fn invalid_tau_under_alternative() {
        let mut s = calibration_analogue();
        s.tau = 100;
        assert!(s.validate().is_err());
        s.delta = vec![0.0];
        assert!(s.validate().is_ok());
    }

    #[test]
    fn generation_is_reproducible() {
        let s = calibration_analogue();
        let (a, _) = gen_dataset(&s, 3).unwrap();
        let (b, _) = gen_dataset(&s, 3).unwrap();
        let (c, _) = gen_dataset(&s, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bookkeeping_before_the_change() {
        let mut s = calibration_analogue();
        s.errors = ErrorProcessSpec::new(ErrorProcess::Ar1, Innovation::StudentT3, 0.3).unwrap();
        let (ds, truth) = gen_dataset(&s, 0).unwrap();
        for i in 0..100 {
            assert_eq!(ds.y()[(i, 0)], truth.signal[i] + truth.eps[i]);
            assert_eq!(ds.x()[(i, 0)], truth.z[(i, 0)] + truth.theta[(i, 0)]);
        }
        for i in 0..60 {
            assert_eq!(truth.signal[i], truth.z[(i, 0)] * 1.0);
        }
        assert_eq!(truth.signal[60], truth.z[(60, 0)] * (1.0 - 0.011));
    }

    #[test]
    fn toml_round_trip_uses_documented_names() {
        let s = calibration_analogue();
        let text = s.to_toml().unwrap();
        for key in ["kind", "n", "p", "scale", "beta", "delta", "tau", "process", "innovation", "sigma", "seed"] {
            assert!(text.contains(key), "missing {key} in\n{text}");
        }
        assert!(text.contains("[design]") && text.contains("[errors]"));
        assert_eq!(ScenarioSpec::from_toml(&text).unwrap(), s);
    }
}
