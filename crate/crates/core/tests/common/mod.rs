//! Reference implementations used as oracles. Nothing here calls the
//! library's own solvers or kernels.
#![allow(dead_code)]

use ggn::linalg::DenseMatrix;
use ggn::model::NetworkParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::new(rows, cols, gaussian_vec(rng, rows * cols)).unwrap()
}

/// Rows drawn from N(0, I) and scaled to unit norm.
pub fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let mut x = gaussian_matrix(rng, rows, cols);
    for i in 0..rows {
        let r = x.row_mut(i);
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.iter_mut().for_each(|v| *v /= n);
    }
    x
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

/// `B Bᵀ + shift·I` for a Gaussian `B`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DenseMatrix {
    let b = gaussian_matrix(rng, n, n);
    let mut a = naive_matmul(&b, &b.transpose());
    for i in 0..n {
        a[(i, i)] += shift;
    }
    a
}

pub fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.cols(), b.rows());
    let mut c = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            c[(i, j)] = s;
        }
    }
    c
}

pub fn naive_matvec(a: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| (0..a.cols()).map(|k| a[(i, k)] * v[k]).sum()).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    assert!(a.is_square() && b.len() == n);
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .unwrap();
        m.swap(col, piv);
        assert!(m[col][col].abs() > 1e-300, "singular system");
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            let pivot_row = m[col].clone();
            for (c, v) in pivot_row.iter().enumerate().skip(col) {
                m[r][c] -= f * v;
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

pub fn inverse(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = gauss_solve(a, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    inv
}

/// Central differences with `h = 1e-6 (1 + |θ|)`, one row per sample.
pub fn fd_jacobian(params: &NetworkParams, x: &DenseMatrix) -> Vec<Vec<f64>> {
    let theta = params.flat();
    let n = x.rows();
    let mut rows = vec![vec![0.0; theta.len()]; n];
    let mut probe = theta.clone();
    for k in 0..theta.len() {
        let h = 1e-6 * (1.0 + theta[k].abs());
        probe[k] = theta[k] + h;
        let up = params.with_flat(&probe).unwrap().predict(x).unwrap();
        probe[k] = theta[k] - h;
        let down = params.with_flat(&probe).unwrap().predict(x).unwrap();
        probe[k] = theta[k];
        for i in 0..n {
            rows[i][k] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    rows
}

/// Explicit `A = Lᵀ (D − L)⁻¹` where `G = D − L − Lᵀ` with `D` block diagonal
/// and `L` strictly block lower triangular.
pub fn iteration_matrix(g: &DenseMatrix, b: usize) -> DenseMatrix {
    let n = g.rows();
    let block = |i: usize| i / b;
    let mut l = DenseMatrix::zeros(n, n);
    let mut dl = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if block(j) < block(i) {
                l[(i, j)] = -g[(i, j)];
            }
            if block(j) <= block(i) {
                dl[(i, j)] = g[(i, j)];
            }
        }
    }
    naive_matmul(&l.transpose(), &inverse(&dl))
}

/// Spectral radius from `‖A^(2^k)‖_F^(1/2^k)`, renormalizing at every
/// squaring so nothing underflows.
pub fn gelfand_radius(a: &DenseMatrix, squarings: u32) -> f64 {
    let fro = |m: &DenseMatrix| m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = fro(a);
    if s == 0.0 {
        return 0.0;
    }
    let mut m = a.scale(1.0 / s);
    let mut log = s.ln();
    for _ in 0..squarings {
        let sq = naive_matmul(&m, &m);
        let f = fro(&sq);
        if f == 0.0 {
            return 0.0;
        }
        m = sq.scale(1.0 / f);
        log = 2.0 * log + f.ln();
    }
    (log / 2f64.powi(squarings as i32)).exp()
}

/// Plain block Gauss-Seidel sweeps on `G r = c` from `r = 0`. Returns
/// `c − G r` after every sweep, starting with `c` itself.
pub fn block_gauss_seidel(g: &DenseMatrix, c: &[f64], b: usize, sweeps: usize) -> Vec<Vec<f64>> {
    let n = g.rows();
    let mut r = vec![0.0; n];
    let residual = |r: &[f64]| -> Vec<f64> {
        let gr = naive_matvec(g, r);
        c.iter().zip(gr).map(|(ci, v)| ci - v).collect()
    };
    let mut out = vec![residual(&r)];
    for _ in 0..sweeps {
        for start in (0..n).step_by(b) {
            let idx: Vec<usize> = (start..start + b).collect();
            let mut rhs = vec![0.0; b];
            let mut gii = DenseMatrix::zeros(b, b);
            for (p, &i) in idx.iter().enumerate() {
                rhs[p] = c[i] - (0..n).filter(|j| !idx.contains(j)).map(|j| g[(i, j)] * r[j]).sum::<f64>();
                for (q, &j) in idx.iter().enumerate() {
                    gii[(p, q)] = g[(i, j)];
                }
            }
            let sol = gauss_solve(&gii, &rhs);
            for (p, &i) in idx.iter().enumerate() {
                r[i] = sol[p];
            }
        }
        out.push(residual(&r));
    }
    out
}

pub fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|&b| n.is_multiple_of(b)).collect()
}

/// Basis-free projection of `v` onto null(J): `v − Jᵀ (J Jᵀ)⁻¹ J v`.
pub fn null_projection(j: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    let jv = naive_matvec(j, v);
    let g = naive_matmul(j, &j.transpose());
    let z = gauss_solve(&g, &jv);
    let back = naive_matvec(&j.transpose(), &z);
    v.iter().zip(back).map(|(a, b)| a - b).collect()
}
