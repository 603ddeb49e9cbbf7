use serde::{Deserialize, Serialize};

use crate::harness::Dataset;
use crate::linalg::{max_abs_diff, norm2, spectral_norm, DenseMatrix};
use crate::model::{path_jacobian, Activation, NetworkParams};
use crate::optim::{gram_matrix, ggn_minibatch_step, residual, GgnConfig, Schedule};

use super::{build_iteration_matrix, gauss_seidel_epoch, spectral_report, Check, NtkError, Result, SpectralReport};

/// Simpson nodes used for the path-averaged Jacobian.
pub const PATH_QUADRATURE_POINTS: usize = 9;

/// Slack added to `ρ(A)` in the per-epoch envelope check.
pub const RATE_SLACK: f64 = 0.1;

/// Tolerance for the Gauss-Seidel oracle comparison on identity-σ models.
pub const ORACLE_TOL: f64 = 1e-8;

/// Tolerance for the exact update formula, relative to `‖f − y‖₂` before the step.
pub const UPDATE_FORMULA_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub epochs: usize,
    /// `‖f_T − y‖₂` for `T = 0..=epochs`.
    pub residual_norms: Vec<f64>,
    /// Largest relative error of the per-batch update formula.
    pub max_update_formula_error: f64,
    /// Largest entrywise distance to the Gauss-Seidel trajectory (identity σ only).
    pub max_oracle_error: Option<f64>,
    pub spectral: SpectralReport,
    /// `max_t ‖A_t − A‖₂`.
    pub delta: f64,
    /// `‖A_T ⋯ A_1‖₂`.
    pub product_norm: f64,
    /// `μ (ρ + μ δ)^T`.
    pub product_bound: f64,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub epoch_matrices: Vec<DenseMatrix>,
}

/// Runs `epochs` epochs of cyclic ridgeless mini-batch GGN and predicts every
/// residual independently.
///
/// Each batch update is checked against
/// `f_{i+1} − y = (I − J̄ J_iᵀ G̃_i)(f_i − y)`, with `J̄` the path-averaged
/// Jacobian between the two iterates and `G̃_i` the zero-padded inverse batch
/// Gram. The per-batch factors multiply into the epoch matrices `A_t`, which
/// are compared with `A` built from `G₀`. For identity activations the whole
/// trajectory is also replayed as block Gauss-Seidel on `G₀ r = f₀ − y`.
pub fn verify_residual_dynamics(
    params: &NetworkParams,
    dataset: &Dataset,
    config: &GgnConfig,
    epochs: usize,
) -> Result<DynamicsReport> {
    if config.schedule != Schedule::Cyclic || !config.is_ridgeless() {
        return Err(NtkError::InvalidArgument(
            "residual dynamics need the cyclic schedule with λ = 1, α = 0".into(),
        ));
    }
    config.validate(dataset.n())?;
    let n = dataset.n();
    let b = config.batch_size;
    let k = n / b;
    let x = &dataset.x;
    let y = &dataset.y;

    let g0 = gram_matrix(&params.jacobian(x)?)?.entries;
    let decomp = build_iteration_matrix(&g0, b)?;
    let spectral = spectral_report(&decomp)?;

    let e0 = residual(params, x, y)?;
    let identity = params.activation == Activation::Identity;
    let mut gs_r = vec![0.0; n];
    let mut max_oracle: Option<f64> = identity.then_some(0.0);

    let mut state = params.clone();
    let mut e = e0.clone();
    let mut residual_norms = vec![norm2(&e)];
    let mut max_formula = 0.0f64;
    let mut epoch_matrices = Vec::with_capacity(epochs);
    let mut delta = 0.0f64;
    let mut product = DenseMatrix::identity(n);

    for _ in 0..epochs {
        let mut a_t = DenseMatrix::identity(n);
        for bi in 0..k {
            let rows: Vec<usize> = (bi * b..(bi + 1) * b).collect();
            let (xb, yb) = dataset.subset(&rows);
            let next = ggn_minibatch_step(&state, &xb, &yb, config)?;
            let e_next = residual(&next, x, y)?;

            let jb = state.jacobian(&xb)?;
            let gb = gram_matrix(&jb)?.entries;
            let inv = super::gauss_seidel::padded_inverse(&gb, bi, n)?;
            let j_path = path_jacobian(&state, &next, x, PATH_QUADRATURE_POINTS)?;
            // factor = I − J̄ J_iᵀ G̃_i
            let coupling = j_path.entries.matmul(&jb.entries.transpose())?;
            let factor = DenseMatrix::identity(n).sub(&coupling.matmul(&inv)?)?;
            let predicted = factor.matvec(&e)?;
            let scale = norm2(&e).max(f64::MIN_POSITIVE);
            max_formula = max_formula.max(max_abs_diff(&predicted, &e_next) / scale);
            a_t = factor.matmul(&a_t)?;

            state = next;
            e = e_next;
        }
        if let Some(m) = max_oracle.as_mut() {
            gs_r = gauss_seidel_epoch(&g0, &gs_r, &e0, b)?.into_vec();
            let g_r = g0.matvec(&gs_r)?;
            let oracle: Vec<f64> = e0.iter().zip(g_r.iter()).map(|(c, v)| c - v).collect();
            *m = m.max(max_abs_diff(&oracle, &e));
        }
        delta = delta.max(spectral_norm(&a_t.sub(&decomp.a)?)?);
        product = a_t.matmul(&product)?;
        epoch_matrices.push(a_t);
        residual_norms.push(norm2(&e));
    }

    let product_norm = spectral_norm(&product)?;
    let mu = spectral.mu;
    let product_bound = mu * (spectral.rho + mu * delta).powi(epochs as i32);
    let hyp = spectral.diagonalizable && mu.is_finite();

    let mut checks = vec![Check::pass_if(
        "update_formula",
        max_formula <= UPDATE_FORMULA_TOL,
        "per-batch residual matches the path-Jacobian update formula",
    )
    .with_value(max_formula)
    .with_threshold(UPDATE_FORMULA_TOL)];
    if let Some(m) = max_oracle {
        checks.push(
            Check::pass_if(
                "gauss_seidel_oracle",
                m <= ORACLE_TOL,
                "identity σ: residuals equal block Gauss-Seidel on G₀ r = f₀ − y",
            )
            .with_value(m)
            .with_threshold(ORACLE_TOL),
        );
    }
    checks.push(
        Check::pass_if("spectral_radius", spectral.bound_satisfied, "ρ(A) < 1")
            .with_value(spectral.rho)
            .with_threshold(1.0),
    );
    let r0 = residual_norms[0];
    let envelope_ok = residual_norms.iter().enumerate().all(|(t, &r)| {
        r <= mu * (n as f64).sqrt() * (spectral.rho + RATE_SLACK).powi(t as i32) * r0 * (1.0 + 1e-12) + 1e-12
    });
    checks.push(
        Check::pass_if(
            "epoch_envelope",
            envelope_ok,
            format!("‖f_T − y‖ ≤ μ√n (ρ + {RATE_SLACK})^T ‖f₀ − y‖"),
        )
        .unless_hypothesis(hyp),
    );
    checks.push(
        Check::pass_if(
            "product_bound",
            product_norm <= product_bound * (1.0 + 1e-10) + 1e-12,
            "‖∏ A_t‖₂ ≤ μ (ρ + μδ)^T",
        )
        .with_value(product_norm)
        .with_threshold(product_bound)
        .unless_hypothesis(hyp),
    );
    if !hyp {
        checks.push(Check::new(
            "diagonalizable",
            super::Verdict::HypothesisViolated,
            format!("A is not diagonalizable to working precision (μ = {mu:.3e})"),
        ));
    }

    Ok(DynamicsReport {
        epochs,
        residual_norms,
        max_update_formula_error: max_formula,
        max_oracle_error: max_oracle,
        spectral,
        delta,
        product_norm,
        product_bound,
        checks,
        epoch_matrices,
    })
}
