mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::random_spd;
use eivcp::linalg::{self, GramAccumulator, SymMatrix};

// Coefficients of det(λI − m) by Faddeev–LeVerrier, leading coefficient first.
fn char_poly(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = vec![1.0];
    let mut mk = DMatrix::<f64>::zeros(n, n);
    let id = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        mk = m * (&mk + &id * coeffs[k - 1]);
        coeffs.push(-mk.trace() / k as f64);
    }
    coeffs
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().fold(0.0, |acc, &a| acc * x + a)
}

// All real roots inside [-r, r], located by sign changes and refined by bisection.
fn real_roots(c: &[f64], r: f64) -> Vec<f64> {
    let steps = 200_000;
    let h = 2.0 * r / steps as f64;
    let mut roots = Vec::new();
    let mut x0 = -r;
    let mut f0 = horner(c, x0);
    for s in 1..=steps {
        let x1 = -r + s as f64 * h;
        let f1 = horner(c, x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi) = (x0, x1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if horner(c, lo) * horner(c, mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

#[test]
fn jacobi_matches_characteristic_polynomial_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let m = (&a + a.transpose()) * 0.5;
        let sym = SymMatrix::new(m.clone()).unwrap();
        let eig = linalg::sym_eigen(&sym).unwrap();
        let bound = m.abs().row_sum().max() + 1.0;
        let roots = real_roots(&char_poly(&m), bound);
        assert_eq!(roots.len(), 5, "roots {roots:?}");
        for (got, want) in eig.eigenvalues.iter().zip(&roots) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn q_smallest_matches_full_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = SymMatrix::new(random_spd(&mut rng, 4)).unwrap();
    let eig = linalg::sym_eigen(&m).unwrap();
    let want = eig.eigenvalues[0] + eig.eigenvalues[1];
    assert!((linalg::sum_q_smallest(&m, 2).unwrap() - want).abs() < 1e-12);
}

#[test]
fn inverse_square_root_whitens() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = SymMatrix::new(random_spd(&mut rng, 3)).unwrap();
    let r = linalg::inv_sqrt_spd(&m).unwrap();
    let prod = r.as_matrix() * m.as_matrix() * r.as_matrix();
    assert!((prod - DMatrix::identity(3, 3)).amax() < 1e-10);
}

#[test]
fn gram_equals_direct_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = DMatrix::from_fn(200, 3, |_, _| rng.random_range(-5.0..5.0));
    let mut acc = GramAccumulator::new(3);
    for row in m.row_iter() {
        acc.update(&row.iter().copied().collect::<Vec<_>>()).unwrap();
    }
    assert_eq!(acc.count(), 200);
    let direct = m.transpose() * &m;
    assert!((acc.gram().as_matrix() - &direct).amax() < 1e-10 * direct.amax());
}

fn spd_strategy(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, dim * dim).prop_map(move |v| {
        let a = DMatrix::from_vec(dim, dim, v);
        &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1
    })
}

proptest! {
    #[test]
    fn eigen_decomposition_reconstructs(m in spd_strategy(4)) {
        let sym = SymMatrix::new(m.clone()).unwrap();
        let e = linalg::sym_eigen(&sym).unwrap();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.eigenvalues.clone()));
        let back = &e.eigenvectors * d * e.eigenvectors.transpose();
        prop_assert!((back - &m).amax() <= 1e-11 * m.amax());
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn inverse_square_root_has_reciprocal_root_spectrum(m in spd_strategy(3)) {
        let sym = SymMatrix::new(m).unwrap();
        let w = linalg::sym_eigen(&sym).unwrap().eigenvalues;
        let r = linalg::inv_sqrt_spd(&sym).unwrap();
        let mut got = linalg::sym_eigen(&r).unwrap().eigenvalues;
        got.reverse();
        for (g, l) in got.iter().zip(&w) {
            let want = 1.0 / l.sqrt();
            prop_assert!((g - want).abs() <= 1e-9 * want);
        }
    }

    #[test]
    fn partial_sums_of_eigenvalues_are_convex(m in spd_strategy(5)) {
        let sym = SymMatrix::new(m).unwrap();
        let s: Vec<f64> = (1..=5).map(|q| linalg::sum_q_smallest(&sym, q).unwrap()).collect();
        let tol = 1e-10 * s[4];
        prop_assert!(s[0] >= -tol);
        for q in 1..4 {
            prop_assert!(s[q + 1] - s[q] >= s[q] - s[q - 1] - tol);
        }
        prop_assert!((s[4] - sym.trace()).abs() <= tol);
    }

    #[test]
    fn gram_ignores_row_order(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 3..40),
        seed in any::<u64>(),
    ) {
        let mut shuffled = rows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let build = |rs: &[Vec<f64>]| rs.iter().fold(GramAccumulator::new(3), |a, r| a.with_row(r).unwrap());
        let (a, b) = (build(&rows), build(&shuffled));
        let scale = a.gram().as_matrix().amax().max(1.0);
        prop_assert!((a.gram().as_matrix() - b.gram().as_matrix()).amax() <= 1e-14 * scale);
        let (la, lb) = (a.sum_q_smallest(1).unwrap(), b.sum_q_smallest(1).unwrap());
        prop_assert!((la - lb).abs() <= 1e-13 * scale);
    }
}
