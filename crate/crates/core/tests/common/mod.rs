#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use eivcp::linalg::SymMatrix;
use eivcp::model::Dataset;

pub fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize, identity: bool) -> Dataset {
    let z = DMatrix::from_fn(n, p, |_, _| rng.random_range(0.0..10.0));
    let beta = DMatrix::from_fn(p, q, |_, _| rng.random_range(-2.0..2.0));
    let x = &z + DMatrix::from_fn(n, p, |_, _| rng.random_range(-0.5..0.5));
    let y = &z * beta + DMatrix::from_fn(n, q, |_, _| rng.random_range(-0.5..0.5));
    let sigma = if identity {
        SymMatrix::identity(p + q)
    } else {
        SymMatrix::new(random_spd(rng, p + q)).unwrap()
    };
    Dataset::new(x, y, sigma).unwrap()
}

pub fn oracle_inv_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(s.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|w| 1.0 / w.sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Sum of the `q` smallest squared singular values of `rows`.
pub fn oracle_sum_smallest(rows: &DMatrix<f64>, q: usize) -> f64 {
    let mut w: Vec<f64> = rows.singular_values().iter().map(|s| s * s).collect();
    w.sort_by(f64::total_cmp);
    w[..q].iter().sum()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Straight double loop over every split and every inner index.
pub fn naive(prefix: &[f64], suffix: &[f64]) -> (f64, f64, usize) {
    let n = prefix.len() - 1;
    let nf = n as f64;
    let (mut s, mut t) = (0.0f64, 0.0f64);
    let (mut best, mut tau) = (f64::NEG_INFINITY, 1);
    for k in 1..n {
        let kf = k as f64;
        let num = (prefix[k] - kf / nf * prefix[n]).abs();
        let mut m1 = 0.0f64;
        let mut q1 = 0.0;
        for i in 1..k {
            let d = prefix[i] - i as f64 / kf * prefix[k];
            m1 = m1.max(d.abs());
            q1 += d * d;
        }
        let mut m2 = 0.0f64;
        let mut q2 = 0.0;
        for i in k + 1..=n {
            let d = suffix[i] - (n - i) as f64 / (n - k) as f64 * suffix[k];
            m2 = m2.max(d.abs());
            q2 += d * d;
        }
        let den = m1 + m2;
        if den > 0.0 {
            s = s.max(num / den);
            let r = (num + (suffix[k] - (n - k) as f64 / nf * suffix[0]).abs()) / den;
            if r > best {
                best = r;
                tau = k;
            }
        }
        if q1 + q2 > 0.0 {
            t += num * num / (q1 + q2);
        }
    }
    (s, t, tau)
}
