use super::{norm2, DenseMatrix, DenseVector, LinalgError, Result, SYMMETRY_TOL};

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-6;
const REFINEMENT_STEPS: usize = 3;

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    lower: Vec<f64>,
    /// Diagonal shift that was needed for the factorization to succeed.
    pub jitter: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L Lᵀ x = rhs` by forward then back substitution.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.lower;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}

fn try_factor(a: &DenseMatrix, shift: f64) -> Option<Vec<f64>> {
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[(j, j)] + shift;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// Cholesky factorization with the jitter ladder `1e-12·tr/n, ×10, …, 1e-6·tr/n`.
pub fn cholesky_factor(a: &DenseMatrix) -> Result<CholeskyFactor> {
    let n = a.rows();
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    if !a.is_square() {
        return Err(LinalgError::ShapeMismatch(format!(
            "Cholesky of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.relative_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    if let Some(lower) = try_factor(a, 0.0) {
        return Ok(CholeskyFactor {
            n,
            lower,
            jitter: 0.0,
        });
    }
    let mean_diag = a.trace() / n as f64;
    if mean_diag.is_nan() || mean_diag <= 0.0 {
        return Err(LinalgError::NotPositiveDefinite { jitter: 0.0 });
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let shift = rel * mean_diag;
        if let Some(lower) = try_factor(a, shift) {
            log::debug!("Cholesky needed jitter {shift:e}");
            return Ok(CholeskyFactor {
                n,
                lower,
                jitter: shift,
            });
        }
        rel *= 10.0;
    }
    Err(LinalgError::NotPositiveDefinite {
        jitter: JITTER_MAX * mean_diag,
    })
}

/// Solves `a x = rhs` for symmetric positive-definite `a`.
///
/// A few steps of iterative refinement against the unshifted matrix follow
/// the solve, so a jittered factor still yields a solution of the original
/// system whenever the jitter is small relative to `λ_min(a)`.
pub fn solve_spd(a: &DenseMatrix, rhs: &[f64]) -> Result<DenseVector> {
    if rhs.len() != a.rows() {
        return Err(LinalgError::ShapeMismatch(format!(
            "{}x{} system with right-hand side of length {}",
            a.rows(),
            a.cols(),
            rhs.len()
        )));
    }
    let factor = cholesky_factor(a)?;
    let mut x = factor.solve(rhs);
    let tol = 1e-8 * (1.0 + norm2(rhs));
    let mut best = x.clone();
    let mut best_res = f64::INFINITY;
    for _ in 0..=REFINEMENT_STEPS {
        let ax = a.matvec(&x)?;
        let r: Vec<f64> = rhs.iter().zip(ax.iter()).map(|(b, v)| b - v).collect();
        let res = norm2(&r);
        if res < best_res {
            best_res = res;
            best.clone_from(&x);
        }
        if res <= tol * 1e-4 {
            break;
        }
        let dx = factor.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    if best.iter().any(|v| !v.is_finite()) || best_res > tol {
        return Err(LinalgError::NotPositiveDefinite {
            jitter: factor.jitter,
        });
    }
    Ok(DenseVector(best))
}
