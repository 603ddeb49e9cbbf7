use super::{DenseMatrix, LinalgError, Result, SYMMETRY_TOL};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix: `a = V diag(values) Vᵀ`.
///
/// `values` are ascending and `vectors` holds the matching orthonormal
/// eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `1e-12·‖a‖_F`.
pub fn sym_eigen(a: &DenseMatrix) -> Result<SymEigen> {
    let n = a.rows();
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    let asym = a.relative_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    // symmetrize so rotations act on an exactly symmetric array
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm();
    let target = OFF_DIAGONAL_TOL * scale;

    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[i * n + j] * m[i * n + j];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&m) > target {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                iterations: sweeps,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

pub fn smallest_eigenvalue_sym(a: &DenseMatrix) -> Result<f64> {
    Ok(sym_eigen(a)?.values[0])
}

/// Largest singular value, from the smaller of `aᵀa` and `a aᵀ`.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0.0);
    }
    let gram = if a.rows() >= a.cols() {
        a.transpose().matmul(a)?
    } else {
        a.matmul(&a.transpose())?
    };
    let top = *sym_eigen(&gram)?.values.last().expect("non-empty");
    Ok(top.max(0.0).sqrt())
}
