mod common;

use common::*;
use ggn::model::{init_network, Activation, ArchSpec};
use proptest::prelude::*;

fn arch_strategy() -> impl Strategy<Value = ArchSpec> {
    let act = prop_oneof![
        Just(Activation::Identity),
        Just(Activation::Tanh),
        Just(Activation::Softplus),
        Just(Activation::Sigmoid),
    ];
    (1usize..=5, 1usize..=12, 1usize..=3, act, any::<bool>()).prop_map(|(d, m, h, a, mlp)| {
        if mlp {
            ArchSpec::mlp(d, m, h, a)
        } else {
            ArchSpec::two_layer(d, m, a)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn jacobian_matches_central_differences(spec in arch_strategy(), seed in any::<u64>(), n in 1usize..=4) {
        let params = init_network(&spec, seed).unwrap();
        let x = unit_rows(&mut rng(seed ^ 0x5eed), n, spec.input_dim);
        let jac = params.jacobian(&x).unwrap();
        let fd = fd_jacobian(&params, &x);
        for (i, row) in fd.iter().enumerate() {
            let diff: Vec<f64> = jac.row(i).iter().zip(row).map(|(a, b)| a - b).collect();
            let rel = norm(&diff) / norm(row).max(1e-8);
            prop_assert!(rel <= 1e-5, "{spec:?} sample {i}: rel err {rel}");
        }
    }

    #[test]
    fn linear_model_is_homogeneous_in_hidden_weights(seed in any::<u64>(), d in 1usize..=6, m in 1usize..=16, s in -3.0f64..3.0) {
        let params = init_network(&ArchSpec::two_layer(d, m, Activation::Identity), seed).unwrap();
        let scaled = params.with_flat(&params.flat().iter().map(|w| s * w).collect::<Vec<_>>()).unwrap();
        let x = unit_rows(&mut rng(seed), 5, d);
        let f = params.predict(&x).unwrap();
        let fs = scaled.predict(&x).unwrap();
        for (a, b) in f.iter().zip(&fs) {
            prop_assert!((s * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn two_layer_jacobian_norm_bounded_at_init(
        seed in any::<u64>(),
        d in 1usize..=8,
        m in 64usize..=1024,
        act in prop_oneof![Just(Activation::Identity), Just(Activation::Tanh), Just(Activation::Softplus)],
    ) {
        let params = init_network(&ArchSpec::two_layer(d, m, act), seed).unwrap();
        let x = unit_rows(&mut rng(seed ^ 1), 6, d);
        let jac = params.jacobian(&x).unwrap();
        for i in 0..6 {
            prop_assert!(norm(jac.row(i)) <= 2.0 * act.lipschitz_bound() * norm(x.row(i)));
        }
    }

    #[test]
    fn same_seed_same_bits(spec in arch_strategy(), seed in any::<u64>()) {
        let a = init_network(&spec, seed).unwrap();
        let b = init_network(&spec, seed).unwrap();
        let x = unit_rows(&mut rng(seed), 3, spec.input_dim);
        let (fa, fb) = (a.predict(&x).unwrap(), b.predict(&x).unwrap());
        prop_assert_eq!(fa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), fb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let (ja, jb) = (a.jacobian(&x).unwrap(), b.jacobian(&x).unwrap());
        prop_assert!(ja.entries.as_slice().iter().zip(jb.entries.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn relu_jacobian_away_from_kinks() {
    let spec = ArchSpec::two_layer(3, 16, Activation::Relu);
    let mut tested = 0;
    for seed in 0..20u64 {
        let params = init_network(&spec, seed).unwrap();
        let x = unit_rows(&mut rng(seed), 3, 3);
        let ggn::model::Layers::TwoLayer { w, .. } = &params.layers else {
            unreachable!()
        };
        if x.matmul(&w.transpose()).unwrap().as_slice().iter().any(|z| z.abs() < 1e-3) {
            continue;
        }
        let jac = params.jacobian(&x).unwrap();
        let fd = fd_jacobian(&params, &x);
        for (i, row) in fd.iter().enumerate() {
            assert!(max_abs_diff(jac.row(i), row) <= 1e-5 * (1.0 + norm(row)));
        }
        tested += 1;
    }
    assert!(tested >= 10);
}
