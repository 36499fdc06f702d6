use eivcp::datagen::{self, DesignSpec, ErrorProcess, ErrorProcessSpec, Innovation, ScenarioSpec};
use eivcp::rng;

const N: usize = 1_000_000;
// 0.75 quantile of Student t with 3 degrees of freedom.
const T3_UPPER_QUARTILE: f64 = 0.764_892_328_404_345;

fn series(process: ErrorProcess, innovation: Innovation, sd: f64, stream: u64) -> Vec<f64> {
    let spec = ErrorProcessSpec::new(process, innovation, sd).unwrap();
    datagen::gen_errors(&spec, N, &mut rng::substream(41, stream)).unwrap()
}

fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn lag1(v: &[f64]) -> f64 {
    corr(&v[..v.len() - 1], &v[1..])
}

fn sign_agreement(v: &[f64]) -> f64 {
    v.windows(2).filter(|w| (w[0] > 0.0) == (w[1] > 0.0)).count() as f64 / (v.len() - 1) as f64
}

fn iqr(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[3 * s.len() / 4] - s[s.len() / 4]
}

#[test]
fn gaussian_processes_hit_the_target_sd() {
    for (k, process) in [ErrorProcess::Iid, ErrorProcess::Ar1, ErrorProcess::Arch1].into_iter().enumerate() {
        let v = series(process, Innovation::StandardNormal, 0.5, k as u64);
        let got = sd(&v);
        assert!((got / 0.5 - 1.0).abs() < 0.01, "{process:?}: sd {got}");
    }
}

#[test]
fn t3_innovations_have_the_rescaled_quartiles() {
    let v = series(ErrorProcess::Iid, Innovation::StudentT3, 0.5, 10);
    let want = 2.0 * T3_UPPER_QUARTILE / 3f64.sqrt() * 0.5;
    assert!((iqr(&v) / want - 1.0).abs() < 0.01, "iqr {} vs {want}", iqr(&v));
}

#[test]
fn autoregressive_lag_one_correlation() {
    for (k, innovation) in [Innovation::StandardNormal, Innovation::StudentT3].into_iter().enumerate() {
        let v = series(ErrorProcess::Ar1, innovation, 0.5, 20 + k as u64);
        let r = lag1(&v);
        assert!((r - 0.5).abs() < 0.02, "{innovation:?}: lag-1 {r}");
    }
}

#[test]
fn arch_signs_are_unpredictable_but_squares_cluster() {
    for (k, innovation) in [Innovation::StandardNormal, Innovation::StudentT3].into_iter().enumerate() {
        let v = series(ErrorProcess::Arch1, innovation, 0.5, 30 + k as u64);
        assert!(v.iter().all(|x| x.is_finite()));
        let agree = sign_agreement(&v);
        assert!((agree - 0.5).abs() < 0.003, "{innovation:?}: sign agreement {agree}");
    }
    let v = series(ErrorProcess::Arch1, Innovation::StandardNormal, 0.5, 32);
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    assert!(lag1(&sq) > 0.3, "lag-1 of squares {}", lag1(&sq));
    assert!(lag1(&v).abs() < 0.01);
}

#[test]
fn error_coordinates_are_uncorrelated() {
    let n = 200_000;
    let spec = ScenarioSpec {
        design: DesignSpec::power_curve(n, 1.0),
        beta: vec![1.0, 1.0],
        delta: vec![0.0, 0.0],
        tau: 0,
        errors: ErrorProcessSpec::new(ErrorProcess::Ar1, Innovation::StandardNormal, 0.5).unwrap(),
        sigma_matrix: None,
        seed: 5,
    };
    let (_, truth) = datagen::gen_dataset(&spec, 0).unwrap();
    let cols = [
        truth.theta.column(0).iter().copied().collect::<Vec<_>>(),
        truth.theta.column(1).iter().copied().collect(),
        truth.eps.clone(),
    ];
    // AR(1) with coefficient 1/2 inflates the sd of a sample cross-correlation by √(5/3).
    let bound = 4.0 * (5.0f64 / 3.0).sqrt() / (n as f64).sqrt();
    for i in 0..3 {
        for j in (i + 1)..3 {
            let r = corr(&cols[i], &cols[j]);
            assert!(r.abs() < bound, "coordinates {i},{j}: {r}");
        }
    }
}
