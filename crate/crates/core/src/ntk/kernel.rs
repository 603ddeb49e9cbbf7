use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm2, smallest_eigenvalue_sym, spectral_norm, DenseMatrix};
use crate::model::{Activation, ArchKind, Layers, NetworkParams};
use crate::optim::gram_matrix;

use super::{Check, NtkError, Result};

pub const DEFAULT_MC_SAMPLES: usize = 200_000;
pub const MIN_MC_SAMPLES: usize = 100;

/// Failure probability used by the initialization concentration bands.
pub const DIAGNOSTIC_DELTA: f64 = 0.01;

/// Monte Carlo estimate of the infinite-width kernel
/// `K(xᵢ, xⱼ) = E_w[xᵢᵀxⱼ σ′(w·xᵢ) σ′(w·xⱼ)]`, `w ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEstimate {
    pub entries: DenseMatrix,
    pub mc_samples: usize,
    /// Per-entry standard error of the Monte Carlo mean.
    pub stderr: DenseMatrix,
    /// Smallest eigenvalue of `entries`.
    pub lambda0: f64,
}

impl KernelEstimate {
    pub fn max_stderr(&self) -> f64 {
        self.stderr.max_abs()
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }
}

/// Samples `w_s` one at a time and accumulates gate products per pair.
///
/// The estimate is `xᵢᵀxⱼ · (1/S) Σ_s σ′(w_s·xᵢ) σ′(w_s·xⱼ)`, so an identity
/// activation reproduces `X Xᵀ` exactly with zero standard error.
pub fn limit_kernel_mc(
    x: &DenseMatrix,
    activation: Activation,
    mc_samples: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    if mc_samples < MIN_MC_SAMPLES {
        return Err(NtkError::InvalidArgument(format!(
            "mc_samples must be ≥ {MIN_MC_SAMPLES}, got {mc_samples}"
        )));
    }
    let (n, d) = x.shape();
    if n == 0 {
        return Err(NtkError::InvalidArgument("empty input matrix".into()));
    }
    let pairs = n * (n + 1) / 2;
    let mut sum = vec![0.0; pairs];
    let mut sum_sq = vec![0.0; pairs];
    let mut w = vec![0.0; d];
    let mut gates = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..mc_samples {
        for wi in w.iter_mut() {
            *wi = StandardNormal.sample(&mut rng);
        }
        for (i, g) in gates.iter_mut().enumerate() {
            *g = activation.derivative(dot(&w, x.row(i)));
        }
        let mut p = 0;
        for i in 0..n {
            let gi = gates[i];
            for &gj in &gates[i..] {
                let v = gi * gj;
                sum[p] += v;
                sum_sq[p] += v * v;
                p += 1;
            }
        }
    }
    let s = mc_samples as f64;
    let mut entries = DenseMatrix::zeros(n, n);
    let mut stderr = DenseMatrix::zeros(n, n);
    let mut p = 0;
    for i in 0..n {
        for j in i..n {
            let ip = dot(x.row(i), x.row(j));
            let mean = sum[p] / s;
            let var = ((sum_sq[p] - sum[p] * mean) / (s - 1.0)).max(0.0);
            let k = ip * mean;
            let se = ip.abs() * (var / s).sqrt();
            entries[(i, j)] = k;
            entries[(j, i)] = k;
            stderr[(i, j)] = se;
            stderr[(j, i)] = se;
            p += 1;
        }
    }
    let lambda0 = smallest_eigenvalue_sym(&entries)?;
    Ok(KernelEstimate {
        entries,
        mc_samples,
        stderr,
        lambda0,
    })
}

/// Raw measurements behind the initialization checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitDiagnostics {
    /// `‖W₀‖₂/√M` (first layer for mlp).
    pub weight_norm_ratio: f64,
    pub max_output: f64,
    /// `max_i ‖J_{W₀,xᵢ}‖_F`.
    pub max_jacobian_norm: f64,
    pub gram_lambda_min: f64,
    /// `max_ij |G₀ − K̂|`.
    pub kernel_deviation: f64,
    pub checks: Vec<Check>,
}

/// Compares a freshly initialized network with the limit kernel.
///
/// Every threshold is a concentration band at failure probability
/// [`DIAGNOSTIC_DELTA`]; a miss is labelled hypothesis-violated, never a
/// failure. For mlp networks the kernel does not describe the Gram matrix and
/// all checks are informational.
pub fn init_diagnostics(
    params: &NetworkParams,
    x: &DenseMatrix,
    kernel: &KernelEstimate,
) -> Result<InitDiagnostics> {
    let n = x.rows();
    if kernel.n() != n {
        return Err(NtkError::InvalidArgument(format!(
            "kernel is {}×{}, data has {n} rows",
            kernel.n(),
            kernel.n()
        )));
    }
    let act = params.activation;
    let ell = act.lipschitz_bound();
    let width = params.width() as f64;
    let max_x = (0..n).map(|i| norm2(x.row(i))).fold(0.0, f64::max);
    let se = kernel.max_stderr();

    let first = match &params.layers {
        Layers::TwoLayer { w, .. } => w,
        Layers::Mlp { layers } => &layers[0].weights,
    };
    let weight_norm_ratio = spectral_norm(first)? / width.sqrt();

    let (f, _) = params.forward(x)?;
    let max_output = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let jac = params.jacobian(x)?;
    let max_jacobian_norm = (0..n).map(|i| norm2(jac.row(i))).fold(0.0, f64::max);
    let g0 = gram_matrix(&jac).map_err(NtkError::Optim)?.entries;
    let gram_lambda_min = smallest_eigenvalue_sym(&g0)?;
    let kernel_deviation = g0.sub(&kernel.entries)?.max_abs();

    let delta = DIAGNOSTIC_DELTA;
    let output_bound = (ell * max_x + act.apply(0.0).abs()) * (2.0 * (2.0 * n as f64 / delta).ln()).sqrt();
    let jacobian_bound = 2.0 * ell * max_x;
    let lambda_bound = 0.75 * kernel.lambda0 - 3.0 * n as f64 * se;
    let deviation_bound = ell * ell * max_x * max_x
        * (2.0 * (2.0 * (n * n) as f64 / delta).ln() / width).sqrt()
        + 3.0 * se;

    let mut checks = vec![
        Check::pass_or_hypothesis(
            "init_weight_norm",
            (0.5..=3.5).contains(&weight_norm_ratio),
            "‖W₀‖₂/√M in [0.5, 3.5]",
        )
        .with_value(weight_norm_ratio),
        Check::pass_or_hypothesis(
            "init_output_bound",
            max_output <= output_bound,
            "max |f(W₀, xᵢ)| within a sub-Gaussian band",
        )
        .with_value(max_output)
        .with_threshold(output_bound),
        Check::pass_or_hypothesis(
            "init_jacobian_norm",
            max_jacobian_norm <= jacobian_bound,
            "max ‖J‖_F ≤ 2ℓ·max‖x‖",
        )
        .with_value(max_jacobian_norm)
        .with_threshold(jacobian_bound),
        Check::pass_or_hypothesis(
            "gram_lambda_min",
            gram_lambda_min >= lambda_bound,
            "λ_min(G₀) ≥ 0.75·λ₀ − 3n·stderr",
        )
        .with_value(gram_lambda_min)
        .with_threshold(lambda_bound),
        Check::pass_or_hypothesis(
            "gram_kernel_deviation",
            kernel_deviation <= deviation_bound,
            "max |G₀ − K̂| within a Hoeffding band",
        )
        .with_value(kernel_deviation)
        .with_threshold(deviation_bound),
    ];
    if params.arch() == ArchKind::Mlp {
        for c in &mut checks {
            c.verdict = super::Verdict::Informational;
            c.detail = format!("{} (not applicable to mlp)", c.detail);
        }
    }
    Ok(InitDiagnostics {
        weight_norm_ratio,
        max_output,
        max_jacobian_norm,
        gram_lambda_min,
        kernel_deviation,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::model::{init_network, ArchSpec};
    use crate::ntk::Verdict;

    fn unit_rows() -> DenseMatrix {
        let s = 0.6;
        DenseMatrix::from_rows(&[[1.0, 0.0], [s, 0.8], [0.0, -1.0]]).unwrap()
    }

    #[test]
    fn identity_kernel_is_exact() {
        let x = unit_rows();
        let k = limit_kernel_mc(&x, Activation::Identity, 100, 0).unwrap();
        let xxt = x.matmul(&x.transpose()).unwrap();
        assert_eq!(k.entries, xxt);
        assert_eq!(k.max_stderr(), 0.0);
    }

    #[test]
    fn relu_diagonal_is_half_norm() {
        let x = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let k = limit_kernel_mc(&x, Activation::Relu, 20_000, 1).unwrap();
        let diff = (k.entries[(0, 0)] - 12.5).abs();
        assert!(diff <= 3.0 * k.stderr[(0, 0)], "{diff} vs {}", k.stderr[(0, 0)]);
    }

    #[test]
    fn duplicate_points_give_degenerate_kernel() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let k = limit_kernel_mc(&x, Activation::Tanh, 5000, 2).unwrap();
        assert!(k.lambda0 <= k.max_stderr() * 3.0 + 1e-12);
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(limit_kernel_mc(&unit_rows(), Activation::Tanh, 10, 0).is_err());
    }

    #[test]
    fn identity_gram_equals_kernel() {
        let x = unit_rows();
        let k = limit_kernel_mc(&x, Activation::Identity, 100, 0).unwrap();
        let p = init_network(&ArchSpec::two_layer(2, 64, Activation::Identity), 3).unwrap();
        let diag = init_diagnostics(&p, &x, &k).unwrap();
        assert!(diag.kernel_deviation < 1e-12);
        let g = gram_matrix(&p.jacobian(&x).unwrap()).unwrap();
        assert!(max_abs_diff(g.entries.as_slice(), k.entries.as_slice()) < 1e-12);
    }

    #[test]
    fn small_width_is_hypothesis_violation_not_failure() {
        let x = unit_rows();
        let k = limit_kernel_mc(&x, Activation::Tanh, 2000, 0).unwrap();
        let p = init_network(&ArchSpec::two_layer(2, 1, Activation::Tanh), 0).unwrap();
        let diag = init_diagnostics(&p, &x, &k).unwrap();
        assert!(diag.checks.iter().all(|c| c.verdict != Verdict::Fail));
    }
}
