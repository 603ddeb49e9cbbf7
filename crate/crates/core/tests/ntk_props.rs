mod common;

use common::*;
use ggn::harness::Dataset;
use ggn::linalg::{smallest_eigenvalue_sym, DenseMatrix};
use ggn::model::{init_network, Activation, ArchSpec};
use ggn::ntk::{build_iteration_matrix, spectral_report, verify_residual_dynamics, Verdict};
use ggn::optim::{ggn_minibatch_step, gram_matrix, residual, GgnConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn splitting_reconstructs_gram(seed in any::<u64>(), blocks in 1usize..=6, b in 1usize..=5) {
        let n = blocks * b;
        let g = random_spd(&mut rng(seed), n, 0.1);
        let dec = build_iteration_matrix(&g, b).unwrap();
        prop_assert!(max_abs_diff(dec.reconstruct().as_slice(), g.as_slice()) <= 1e-12 * (1.0 + g.max_abs()));
        let oracle = iteration_matrix(&g, b);
        prop_assert!(max_abs_diff(dec.a.as_slice(), oracle.as_slice()) <= 1e-9 * (1.0 + oracle.max_abs()));
    }

    #[test]
    fn iteration_matrix_contracts_for_spd_gram(seed in any::<u64>(), blocks in 2usize..=6, b in 1usize..=4) {
        let n = blocks * b;
        let g = random_spd(&mut rng(seed), n, 0.05);
        prop_assume!(smallest_eigenvalue_sym(&g).unwrap() > 1e-8);
        let rep = spectral_report(&build_iteration_matrix(&g, b).unwrap()).unwrap();
        prop_assert!(rep.rho < 1.0 && rep.bound_satisfied, "rho = {}", rep.rho);
        let reference = gelfand_radius(&iteration_matrix(&g, b), 16);
        prop_assert!((rep.rho - reference).abs() <= 0.05 * reference.max(1e-2), "{} vs {reference}", rep.rho);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Mini-batch GGN on an identity-activation network replays block
    /// Gauss-Seidel on `G₀ r = f₀ − y`, for every batch size dividing `n`.
    #[test]
    fn minibatch_ggn_is_block_gauss_seidel(seed in any::<u64>(), n in 2usize..=64, m in 1usize..=3) {
        let d = n;
        let params = init_network(&ArchSpec::two_layer(d, m, Activation::Identity), seed).unwrap();
        let mut g = rng(seed ^ 99);
        let x = unit_rows(&mut g, n, d);
        let y = uniform_vec(&mut g, n, -1.0, 1.0);
        let jac = params.jacobian(&x).unwrap().entries;
        let g0 = naive_matmul(&jac, &jac.transpose());
        let c = residual(&params, &x, &y).unwrap();
        let epochs = 3;
        for b in divisors(n) {
            let oracle = block_gauss_seidel(&g0, &c, b, epochs);
            let mut p = params.clone();
            for (t, expect) in oracle.iter().enumerate().skip(1) {
                for start in (0..n).step_by(b) {
                    let idx: Vec<usize> = (start..start + b).collect();
                    let xb = x.select_rows(&idx);
                    let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                    p = ggn_minibatch_step(&p, &xb, &yb, &GgnConfig::ridgeless(b)).unwrap();
                }
                let got = residual(&p, &x, &y).unwrap();
                prop_assert!(max_abs_diff(&got, expect) <= 1e-8, "n = {n}, b = {b}, epoch {t}");
            }
        }
    }
}

#[test]
fn hand_iteration_matrix_radius() {
    let g = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
    let rep = spectral_report(&build_iteration_matrix(&g, 1).unwrap()).unwrap();
    assert!((rep.rho - 0.25).abs() <= 1e-6);
    assert!((gelfand_radius(&iteration_matrix(&g, 1), 12) - 0.25).abs() <= 1e-3);
}

#[test]
fn product_of_epoch_matrices_respects_bound() {
    let (n, b, width) = (8, 2, 4096);
    let mut g = rng(5);
    let x = unit_rows(&mut g, n, 3);
    let y = uniform_vec(&mut g, n, -1.0, 1.0);
    let data = Dataset::new(x, y).unwrap();
    let params = init_network(&ArchSpec::two_layer(3, width, Activation::Tanh), 5).unwrap();
    let rep = verify_residual_dynamics(&params, &data, &GgnConfig::ridgeless(b), 3).unwrap();
    assert!(rep.spectral.diagonalizable);
    assert!(rep.product_norm <= rep.product_bound, "{} > {}", rep.product_norm, rep.product_bound);
    assert_eq!(rep.epoch_matrices.len(), 3);
    let mut prod = DenseMatrix::identity(n);
    for a in &rep.epoch_matrices {
        prod = naive_matmul(a, &prod);
    }
    let fro = prod.frobenius_norm();
    assert!(rep.product_norm <= fro * (1.0 + 1e-9));
    for c in &rep.checks {
        assert_ne!(c.verdict, Verdict::Fail, "{c}");
    }
    let g0 = gram_matrix(&params.jacobian(&data.x).unwrap()).unwrap().entries;
    let a = iteration_matrix(&g0, b);
    let e0 = residual(&params, &data.x, &data.y).unwrap();
    let predicted = naive_matvec(&rep.epoch_matrices[0], &e0);
    let linear = naive_matvec(&a, &e0);
    assert!(max_abs_diff(&predicted, &linear) <= 0.1 * norm(&e0));
}
