use crate::linalg::{norm2, solve_spd, DenseMatrix, LinalgError};
use crate::model::NetworkParams;

use super::{gram_matrix, normal_matrix, GgnConfig, GradientReduction, OptimError, Result, SgdConfig};

/// Largest parameter count accepted by [`classic_gn_step`].
pub const CLASSIC_GN_MAX_PARAMS: usize = 512;

/// Result of a full-batch GGN update.
#[derive(Debug, Clone)]
pub struct FullStep {
    pub params: NetworkParams,
    pub residual_before: f64,
    pub residual_after: f64,
}

/// `f(w, x) − y` for every row of `x`.
pub fn residual(params: &NetworkParams, x: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    check_targets(x, y)?;
    let f = params.predict(x)?;
    Ok(f.iter().zip(y).map(|(fi, yi)| fi - yi).collect())
}

fn check_targets(x: &DenseMatrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(OptimError::Model(crate::model::ModelError::ShapeMismatch(format!(
            "{} inputs but {} targets",
            x.rows(),
            y.len()
        ))));
    }
    if y.is_empty() {
        return Err(OptimError::EmptyBatch);
    }
    Ok(())
}

/// Solves `(λ G + α I) c = r` for the batch and returns `Jᵀ c`.
fn gram_direction(
    params: &NetworkParams,
    x: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_targets(x, y)?;
    let (f, cache) = params.forward(x)?;
    let r: Vec<f64> = f.iter().zip(y).map(|(fi, yi)| fi - yi).collect();
    if r.iter().all(|&v| v == 0.0) {
        return Ok((vec![0.0; params.param_count()], r));
    }
    let jac = crate::model::per_sample_jacobian(params, x, &cache)?;
    let mut g = gram_matrix(&jac)?.entries;
    if lambda != 1.0 || alpha != 0.0 {
        g = g.scale(lambda);
        for i in 0..g.rows() {
            g[(i, i)] += alpha;
        }
    }
    let mut c = solve_spd(&g, &r).map_err(singular_gram)?.into_vec();
    // One correction with the system residual taken through J itself, which
    // removes most of the rounding picked up when G was formed.
    let jc = jac.entries.matvec(&jac.entries.tr_matvec(&c)?)?;
    let s: Vec<f64> = (0..r.len()).map(|i| r[i] - lambda * jc[i] - alpha * c[i]).collect();
    let dc = solve_spd(&g, &s).map_err(singular_gram)?;
    c.iter_mut().zip(dc.iter()).for_each(|(ci, di)| *ci += di);
    let dir = jac.entries.tr_matvec(&c)?.into_vec();
    Ok((dir, r))
}

fn singular_gram(e: LinalgError) -> OptimError {
    match e {
        LinalgError::NotPositiveDefinite { .. } | LinalgError::NotSymmetric { .. } => {
            OptimError::SingularGram(e)
        }
        other => OptimError::Linalg(other),
    }
}

/// Ridgeless full-batch update `w − Jᵀ (J Jᵀ)⁻¹ (f − y)` over all rows of `x`.
pub fn ggn_full_step(params: &NetworkParams, x: &DenseMatrix, y: &[f64]) -> Result<FullStep> {
    let (dir, r) = gram_direction(params, x, y, 1.0, 0.0)?;
    let next = params.displaced(&dir, -1.0)?;
    let residual_after = norm2(&residual(&next, x, y)?);
    Ok(FullStep {
        params: next,
        residual_before: norm2(&r),
        residual_after,
    })
}

/// Regularized mini-batch update `w − J_Bᵀ (λ G_B + α I)⁻¹ (f_B − y_B)`.
///
/// `x` and `y` hold the batch rows only.
pub fn ggn_minibatch_step(
    params: &NetworkParams,
    x: &DenseMatrix,
    y: &[f64],
    config: &GgnConfig,
) -> Result<NetworkParams> {
    config.validate_damping()?;
    let (dir, _) = gram_direction(params, x, y, config.lambda, config.alpha)?;
    Ok(params.displaced(&dir, -1.0)?)
}

/// Classic Gauss-Newton `w − (JᵀJ)⁻¹ Jᵀ (f − y)`, for small under-parameterized
/// models only.
pub fn classic_gn_step(params: &NetworkParams, x: &DenseMatrix, y: &[f64]) -> Result<NetworkParams> {
    let m = params.param_count();
    if m > CLASSIC_GN_MAX_PARAMS {
        return Err(OptimError::TooManyParameters {
            got: m,
            limit: CLASSIC_GN_MAX_PARAMS,
        });
    }
    check_targets(x, y)?;
    let (f, cache) = params.forward(x)?;
    let r: Vec<f64> = f.iter().zip(y).map(|(fi, yi)| fi - yi).collect();
    if r.iter().all(|&v| v == 0.0) {
        return Ok(params.clone());
    }
    let jac = crate::model::per_sample_jacobian(params, x, &cache)?;
    let h = normal_matrix(&jac)?;
    let g = jac.entries.tr_matvec(&r)?;
    let singular = |e: LinalgError| match e {
        LinalgError::NotPositiveDefinite { .. } | LinalgError::NotSymmetric { .. } => {
            OptimError::SingularNormalMatrix(e)
        }
        other => OptimError::Linalg(other),
    };
    let mut step = solve_spd(&h.entries, &g).map_err(singular)?.into_vec();
    let js = jac.entries.matvec(&step)?;
    let rr: Vec<f64> = r.iter().zip(js.iter()).map(|(a, b)| a - b).collect();
    let correction = solve_spd(&h.entries, &jac.entries.tr_matvec(&rr)?).map_err(singular)?;
    step.iter_mut().zip(correction.iter()).for_each(|(si, di)| *si += di);
    Ok(params.displaced(&step, -1.0)?)
}

/// Heavy-ball SGD: `v ← μ v + g`, `w ← w − lr·v` with `g = J_Bᵀ (f_B − y_B)`
/// (divided by the batch size under [`GradientReduction::Mean`]).
pub fn sgd_momentum_step(
    params: &NetworkParams,
    x: &DenseMatrix,
    y: &[f64],
    config: &SgdConfig,
    velocity: &[f64],
) -> Result<(NetworkParams, Vec<f64>)> {
    config.validate()?;
    let m = params.param_count();
    if velocity.len() != m {
        return Err(OptimError::InvalidConfig(format!(
            "velocity has {} entries, network has {m} parameters",
            velocity.len()
        )));
    }
    check_targets(x, y)?;
    let (f, cache) = params.forward(x)?;
    let mut r: Vec<f64> = f.iter().zip(y).map(|(fi, yi)| fi - yi).collect();
    if config.reduction == GradientReduction::Mean {
        let inv = 1.0 / r.len() as f64;
        r.iter_mut().for_each(|v| *v *= inv);
    }
    let jac = crate::model::per_sample_jacobian(params, x, &cache)?;
    let grad = jac.entries.tr_matvec(&r)?;
    let v: Vec<f64> = velocity
        .iter()
        .zip(grad.iter())
        .map(|(vi, gi)| config.momentum * vi + gi)
        .collect();
    let next = params.displaced(&v, -config.lr)?;
    Ok((next, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::model::Activation;

    fn hand_case() -> (NetworkParams, DenseMatrix, Vec<f64>) {
        let w = DenseMatrix::identity(2);
        let p = NetworkParams::two_layer(w, vec![1.0, -1.0], Activation::Identity).unwrap();
        (p, DenseMatrix::identity(2), vec![0.0, 0.0])
    }

    #[test]
    fn hand_full_step() {
        let (p, x, y) = hand_case();
        let s = ggn_full_step(&p, &x, &y).unwrap();
        assert!(max_abs_diff(&s.params.flat(), &[0.5, 0.5, 0.5, 0.5]) < 1e-15);
        assert!(s.residual_after <= 1e-10);
        assert!((s.residual_before - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_is_fixed_point() {
        let (p, x, _) = hand_case();
        let y = p.predict(&x).unwrap();
        let s = ggn_full_step(&p, &x, &y).unwrap();
        assert_eq!(s.params, p);
        let cfg = GgnConfig {
            lambda: 3.0,
            alpha: 0.5,
            ..GgnConfig::ridgeless(2)
        };
        assert_eq!(ggn_minibatch_step(&p, &x, &y, &cfg).unwrap(), p);
        assert_eq!(classic_gn_step(&p, &x, &y).unwrap(), p);
        let (q, v) = sgd_momentum_step(&p, &x, &y, &SgdConfig::default(), &[0.0; 4]).unwrap();
        assert_eq!(q, p);
        assert_eq!(v, vec![0.0; 4]);
    }

    #[test]
    fn single_sample_is_scalar_division() {
        let (p, x, _) = hand_case();
        let x1 = x.select_rows(&[0]);
        let y1 = [0.3];
        let cfg = GgnConfig {
            lambda: 2.0,
            alpha: 0.25,
            ..GgnConfig::ridgeless(1)
        };
        let next = ggn_minibatch_step(&p, &x1, &y1, &cfg).unwrap();
        let j = p.jacobian(&x1).unwrap();
        let r = p.predict(&x1).unwrap()[0] - 0.3;
        let jn2: f64 = j.row(0).iter().map(|v| v * v).sum();
        let expected: Vec<f64> = p
            .flat()
            .iter()
            .zip(j.row(0))
            .map(|(w, ji)| w - ji * r / (2.0 * jn2 + 0.25))
            .collect();
        assert!(max_abs_diff(&next.flat(), &expected) < 1e-15);
    }

    #[test]
    fn minibatch_on_whole_set_equals_full_step() {
        let (p, x, _) = hand_case();
        let y = [0.2, -0.7];
        let full = ggn_full_step(&p, &x, &y).unwrap();
        let mb = ggn_minibatch_step(&p, &x, &y, &GgnConfig::ridgeless(2)).unwrap();
        assert!(max_abs_diff(&full.params.flat(), &mb.flat()) <= 1e-12);
    }

    #[test]
    fn classic_gn_hand_case() {
        let p = NetworkParams::two_layer(DenseMatrix::zeros(1, 2), vec![1.0], Activation::Identity)
            .unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let next = classic_gn_step(&p, &x, &[1.0, 2.0, 3.0]).unwrap();
        assert!(max_abs_diff(&next.flat(), &[1.0, 2.0]) < 1e-12);
        let r = residual(&next, &x, &[1.0, 2.0, 3.0]).unwrap();
        assert!(norm2(&r) < 1e-12);
    }

    #[test]
    fn classic_gn_parameter_limit() {
        let p = NetworkParams::two_layer(DenseMatrix::zeros(600, 1), vec![1.0; 600], Activation::Identity)
            .unwrap();
        let x = DenseMatrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(
            classic_gn_step(&p, &x, &[1.0]),
            Err(OptimError::TooManyParameters { got: 600, limit: 512 })
        ));
    }

    #[test]
    fn ridgeless_singular_gram_fails_loudly() {
        let p = NetworkParams::two_layer(DenseMatrix::identity(2), vec![1.0, -1.0], Activation::Identity)
            .unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let err = ggn_full_step(&p, &x, &[0.5, -0.5]).unwrap_err();
        assert!(matches!(err, OptimError::SingularGram(_)), "{err}");
        let cfg = GgnConfig {
            alpha: 0.1,
            ..GgnConfig::ridgeless(2)
        };
        assert!(ggn_minibatch_step(&p, &x, &[0.5, -0.5], &cfg).is_ok());
    }

    #[test]
    fn sgd_matches_ggn_when_gram_is_identity() {
        let (p, x, y) = hand_case();
        let cfg = SgdConfig {
            lr: 1.0,
            momentum: 0.0,
            reduction: GradientReduction::Sum,
        };
        let (q, v) = sgd_momentum_step(&p, &x, &y, &cfg, &[0.0; 4]).unwrap();
        assert!(max_abs_diff(&v, &[0.5, -0.5, -0.5, 0.5]) < 1e-15);
        let g = ggn_full_step(&p, &x, &y).unwrap();
        assert!(max_abs_diff(&q.flat(), &g.params.flat()) < 1e-15);
    }

    #[test]
    fn momentum_recurrence() {
        // f = w, y = 0, so the gradient equals w
        let p = NetworkParams::two_layer(DenseMatrix::from_rows(&[[1.0]]).unwrap(), vec![1.0], Activation::Identity)
            .unwrap();
        let x = DenseMatrix::from_rows(&[[1.0]]).unwrap();
        let cfg = SgdConfig {
            lr: 0.1,
            momentum: 0.9,
            reduction: GradientReduction::Sum,
        };
        let (p1, v1) = sgd_momentum_step(&p, &x, &[0.0], &cfg, &[0.0]).unwrap();
        assert!((v1[0] - 1.0).abs() < 1e-15);
        assert!((p1.flat()[0] - 0.9).abs() < 1e-15);
        let (p2, v2) = sgd_momentum_step(&p1, &x, &[0.0], &cfg, &v1).unwrap();
        assert!((v2[0] - 1.8).abs() < 1e-15);
        assert!((p2.flat()[0] - 0.72).abs() < 1e-15);
    }
}
