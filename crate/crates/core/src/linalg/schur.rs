//! Eigenvalues and eigenvectors of general real matrices.
//!
//! Householder reduction to upper Hessenberg form, then shifted complex QR
//! iterations with Wilkinson shifts until the matrix is upper triangular
//! (complex Schur form `A = Z T Zᴴ`). Eigenvectors come from back substitution
//! on `T`.

use num_complex::Complex64;

use super::{sym_eigen, DenseMatrix, LinalgError, Result, SYMMETRY_TOL};

/// Eigenvector matrices with condition above this are treated as defective.
pub const DIAGONALIZABLE_COND_LIMIT: f64 = 1e12;

const SWEEPS_PER_DIM: usize = 100;

type C = Complex64;

/// Complex Schur decomposition `A = Z T Zᴴ`, both stored row-major.
#[derive(Debug, Clone)]
pub struct ComplexSchur {
    n: usize,
    t: Vec<C>,
    z: Vec<C>,
}

impl ComplexSchur {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        if !a.is_square() {
            return Err(LinalgError::ShapeMismatch(format!(
                "eigenvalues of a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let (h, q) = hessenberg(a);
        let mut t: Vec<C> = h.iter().map(|&v| C::new(v, 0.0)).collect();
        let mut z: Vec<C> = q.iter().map(|&v| C::new(v, 0.0)).collect();
        complex_qr(n, &mut t, &mut z)?;
        Ok(Self { n, t, z })
    }

    pub fn eigenvalues(&self) -> Vec<C> {
        (0..self.n).map(|i| self.t[i * self.n + i]).collect()
    }

    /// Unit-norm eigenvectors of `A` as the columns of an `n × n` complex matrix
    /// (row-major).
    pub fn eigenvectors(&self) -> Vec<C> {
        let n = self.n;
        let t = &self.t;
        let tnorm = t.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let ulp = f64::EPSILON;
        let small = f64::MIN_POSITIVE * (n as f64) / ulp;
        let mut p = vec![C::new(0.0, 0.0); n * n];
        let mut x = vec![C::new(0.0, 0.0); n];
        for k in 0..n {
            let lambda = t[k * n + k];
            let smin = (ulp * lambda.norm()).max(ulp * 1e-3 * tnorm).max(small);
            x.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
            x[k] = C::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut s = t[i * n + k];
                for j in (i + 1)..k {
                    s += t[i * n + j] * x[j];
                }
                let mut d = t[i * n + i] - lambda;
                if d.norm() < smin {
                    d = C::new(smin, 0.0);
                }
                x[i] = -s / d;
                // rescale to avoid overflow on nearly defective blocks
                let big = x[i].norm();
                if big > 1e100 {
                    for v in x.iter_mut().take(k + 1) {
                        *v /= big;
                    }
                }
            }
            // v = Z x
            let mut norm = 0.0;
            for r in 0..n {
                let mut s = C::new(0.0, 0.0);
                for (j, xj) in x.iter().enumerate().take(k + 1) {
                    s += self.z[r * n + j] * xj;
                }
                p[r * n + k] = s;
                norm += s.norm_sqr();
            }
            let norm = norm.sqrt();
            for r in 0..n {
                p[r * n + k] /= norm;
            }
        }
        p
    }
}

/// Householder reduction `A = Q H Qᵀ` with `H` upper Hessenberg.
fn hessenberg(a: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut h = a.as_slice().to_vec();
    let mut q = DenseMatrix::identity(n).into_vec();
    for k in 0..n.saturating_sub(2) {
        let mut alpha = 0.0;
        for i in (k + 1)..n {
            alpha += h[i * n + k] * h[i * n + k];
        }
        let alpha = alpha.sqrt();
        if alpha == 0.0 {
            continue;
        }
        let x0 = h[(k + 1) * n + k];
        let alpha = if x0 > 0.0 { -alpha } else { alpha };
        let mut v = vec![0.0; n];
        v[k + 1] = x0 - alpha;
        for i in (k + 2)..n {
            v[i] = h[i * n + k];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // H ← (I − 2vvᵀ/vᵀv) H (I − 2vvᵀ/vᵀv)
        for j in 0..n {
            let mut s = 0.0;
            for i in (k + 1)..n {
                s += v[i] * h[i * n + j];
            }
            let f = 2.0 * s / vnorm2;
            for i in (k + 1)..n {
                h[i * n + j] -= f * v[i];
            }
        }
        for i in 0..n {
            let mut s = 0.0;
            for j in (k + 1)..n {
                s += h[i * n + j] * v[j];
            }
            let f = 2.0 * s / vnorm2;
            for j in (k + 1)..n {
                h[i * n + j] -= f * v[j];
            }
            let mut s = 0.0;
            for j in (k + 1)..n {
                s += q[i * n + j] * v[j];
            }
            let f = 2.0 * s / vnorm2;
            for j in (k + 1)..n {
                q[i * n + j] -= f * v[j];
            }
        }
        h[(k + 1) * n + k] = alpha;
        for i in (k + 2)..n {
            h[i * n + k] = 0.0;
        }
    }
    (h, q)
}

fn wilkinson_shift(a: C, b: C, c: C, d: C) -> C {
    // eigenvalue of [[a, b], [c, d]] closest to d
    let tr_half = (a + d) * 0.5;
    let det = a * d - b * c;
    let disc = (tr_half * tr_half - det).sqrt();
    let l1 = tr_half + disc;
    let l2 = tr_half - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Shifted QR on a complex upper Hessenberg matrix, accumulating into `z`.
fn complex_qr(n: usize, t: &mut [C], z: &mut [C]) -> Result<()> {
    let eps = f64::EPSILON;
    let cap = SWEEPS_PER_DIM * n;
    let hnorm = t.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut total = 0usize;
    let mut iter_since_deflation = 0usize;
    let mut hi = n - 1;
    let mut rots: Vec<(C, C)> = Vec::with_capacity(n);
    while hi > 0 {
        // find the start of the active unreduced block
        let mut lo = hi;
        while lo > 0 {
            let sub = t[lo * n + lo - 1].norm();
            let mut scale = t[(lo - 1) * n + lo - 1].norm() + t[lo * n + lo].norm();
            if scale == 0.0 {
                scale = hnorm;
            }
            if sub <= eps * scale || sub < f64::MIN_POSITIVE {
                t[lo * n + lo - 1] = C::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter_since_deflation = 0;
            continue;
        }
        if total >= cap {
            return Err(LinalgError::NoConvergence { iterations: total });
        }
        total += 1;
        iter_since_deflation += 1;

        let shift = if iter_since_deflation % 11 == 10 {
            // exceptional shift breaks symmetric cycles
            t[hi * n + hi] + C::new(t[hi * n + hi - 1].norm() * 0.75, 0.0)
        } else {
            wilkinson_shift(
                t[(hi - 1) * n + hi - 1],
                t[(hi - 1) * n + hi],
                t[hi * n + hi - 1],
                t[hi * n + hi],
            )
        };

        for k in lo..=hi {
            t[k * n + k] -= shift;
        }
        rots.clear();
        for k in lo..hi {
            let x = t[k * n + k];
            let y = t[(k + 1) * n + k];
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 {
                (C::new(1.0, 0.0), C::new(0.0, 0.0))
            } else {
                (x / r, y / r)
            };
            // rows k, k+1 ← [[c̄, s̄], [−s, c]] · rows
            for j in k..n {
                let a = t[k * n + j];
                let b = t[(k + 1) * n + j];
                t[k * n + j] = c.conj() * a + s.conj() * b;
                t[(k + 1) * n + j] = -s * a + c * b;
            }
            t[(k + 1) * n + k] = C::new(0.0, 0.0);
            rots.push((c, s));
        }
        for (idx, &(c, s)) in rots.iter().enumerate() {
            let k = lo + idx;
            // columns k, k+1 ← cols · [[c, −s̄], [s, c̄]]
            for i in 0..=(k + 1).min(hi) {
                let a = t[i * n + k];
                let b = t[i * n + k + 1];
                t[i * n + k] = a * c + b * s;
                t[i * n + k + 1] = -a * s.conj() + b * c.conj();
            }
            for i in 0..n {
                let a = z[i * n + k];
                let b = z[i * n + k + 1];
                z[i * n + k] = a * c + b * s;
                z[i * n + k + 1] = -a * s.conj() + b * c.conj();
            }
        }
        for k in lo..=hi {
            t[k * n + k] += shift;
        }
    }
    Ok(())
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(a: &DenseMatrix) -> Result<f64> {
    if a.rows() == 1 && a.cols() == 1 {
        return Ok(a[(0, 0)].abs());
    }
    if a.is_square() && (a.is_upper_triangular() || a.is_lower_triangular()) {
        return Ok(a.diagonal().iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let schur = ComplexSchur::new(a)?;
    Ok(schur
        .eigenvalues()
        .iter()
        .fold(0.0, |m, v| m.max(v.norm())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigvecCondition {
    /// `‖P‖₂‖P⁻¹‖₂` for the unit-column eigenvector matrix `P`; infinite when
    /// `P` is numerically singular.
    pub mu: f64,
    pub diagonalizable: bool,
}

/// Condition number of the eigenvector basis of `a`.
///
/// Symmetric inputs use the orthonormal Jacobi basis directly.
pub fn eigvec_condition(a: &DenseMatrix) -> Result<EigvecCondition> {
    let n = a.rows();
    if a.is_square() && n > 0 && a.relative_asymmetry() <= SYMMETRY_TOL {
        let e = sym_eigen(a)?;
        let gram = e.vectors.transpose().matmul(&e.vectors)?;
        let mu = condition_from_gram(&gram)?;
        return Ok(EigvecCondition {
            mu,
            diagonalizable: true,
        });
    }
    let schur = ComplexSchur::new(a)?;
    let p = schur.eigenvectors();
    // PᴴP as the real symmetric embedding [[Re, −Im], [Im, Re]]
    let mut embed = DenseMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let mut s = C::new(0.0, 0.0);
            for r in 0..n {
                s += p[r * n + i].conj() * p[r * n + j];
            }
            embed[(i, j)] = s.re;
            embed[(i + n, j + n)] = s.re;
            embed[(i, j + n)] = -s.im;
            embed[(i + n, j)] = s.im;
        }
    }
    let mu = condition_from_gram(&embed)?;
    Ok(EigvecCondition {
        mu,
        diagonalizable: mu.is_finite() && mu <= DIAGONALIZABLE_COND_LIMIT,
    })
}

/// `sqrt(λ_max / λ_min)` of a Gram matrix `PᴴP`.
fn condition_from_gram(gram: &DenseMatrix) -> Result<f64> {
    // symmetrize rounding noise away before the symmetric solver sees it
    let n = gram.rows();
    let mut sym = gram.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (gram[(i, j)] + gram[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    let values = sym_eigen(&sym)?.values;
    let lo = values[0];
    let hi = *values.last().expect("non-empty");
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((hi / lo).sqrt())
}
