mod common;

use common::*;
use ggn::linalg::{eigvec_condition, smallest_eigenvalue_sym, solve_spd, spectral_radius, DenseMatrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn solve_spd_small_residual(seed in any::<u64>(), n in 1usize..=64) {
        let mut g = rng(seed);
        let a = random_spd(&mut g, n, 1e-3);
        let b = gaussian_vec(&mut g, n);
        let x = solve_spd(&a, &b).unwrap();
        let ax = naive_matvec(&a, &x);
        let err = norm(&ax.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>());
        prop_assert!(err <= 1e-8 * (1.0 + norm(&b)), "n = {n}, err = {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn smallest_eigenvalue_below_rayleigh_quotients(seed in any::<u64>(), n in 1usize..=24) {
        let mut g = rng(seed);
        let b = gaussian_matrix(&mut g, n, n);
        let a = b.add(&b.transpose()).unwrap();
        let lmin = smallest_eigenvalue_sym(&a).unwrap();
        for _ in 0..10 {
            let v = gaussian_vec(&mut g, n);
            let q = naive_matvec(&a, &v).iter().zip(&v).map(|(p, q)| p * q).sum::<f64>()
                / v.iter().map(|x| x * x).sum::<f64>();
            prop_assert!(lmin <= q + 1e-10 * (1.0 + q.abs()), "{lmin} > {q}");
        }
    }

    #[test]
    fn spectral_radius_below_frobenius(seed in any::<u64>(), n in 1usize..=20) {
        let mut g = rng(seed);
        let a = gaussian_matrix(&mut g, n, n);
        let rho = spectral_radius(&a).unwrap();
        prop_assert!(rho <= a.frobenius_norm() * (1.0 + 1e-12));
        let reference = gelfand_radius(&a, 14);
        prop_assert!((rho - reference).abs() <= 0.05 * reference.max(1e-3), "{rho} vs {reference}");
    }

    #[test]
    fn triangular_radius_is_largest_diagonal(seed in any::<u64>(), n in 1usize..=20, upper in any::<bool>()) {
        let mut g = rng(seed);
        let mut a = gaussian_matrix(&mut g, n, n);
        for i in 0..n {
            for j in 0..n {
                if (upper && j < i) || (!upper && j > i) {
                    a[(i, j)] = 0.0;
                }
            }
        }
        let expect = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rho = spectral_radius(&a).unwrap();
        prop_assert!((rho - expect).abs() <= 1e-9 * (1.0 + expect), "{rho} vs {expect}");
    }

    #[test]
    fn symmetric_matrices_have_unit_mu(seed in any::<u64>(), n in 1usize..=16) {
        let mut g = rng(seed);
        let b = gaussian_matrix(&mut g, n, n);
        let a = b.add(&b.transpose()).unwrap();
        let cond = eigvec_condition(&a).unwrap();
        prop_assert!(cond.diagonalizable);
        prop_assert!((cond.mu - 1.0).abs() <= 1e-6, "mu = {}", cond.mu);
    }
}

#[test]
fn solve_spd_hand_case() {
    let a = DenseMatrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
    let x = solve_spd(&a, &[2.0, 1.0]).unwrap();
    assert!(max_abs_diff(&x, &[0.5, 0.0]) < 1e-14);
}
