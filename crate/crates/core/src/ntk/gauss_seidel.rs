use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky_factor, eigvec_condition, spectral_radius, DenseMatrix, DenseVector};

use super::{NtkError, Result};

/// Block splitting `G₀ = D − L − Lᵀ` and the epoch iteration matrix
/// `A = Lᵀ (D − L)⁻¹` of cyclic mini-batch GGN.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationDecomposition {
    /// Block diagonal of `G₀`.
    pub d: DenseMatrix,
    /// Minus the strictly block-lower part of `G₀`.
    pub l: DenseMatrix,
    /// `Lᵀ`, minus the strictly block-upper part of `G₀`.
    pub u: DenseMatrix,
    pub a: DenseMatrix,
    pub block_size: usize,
    /// Per block `i`, the `b × n` matrix holding `G₀,ᵢᵢ⁻¹` in the columns of
    /// block `i` and zeros elsewhere.
    pub padded_inverse_blocks: Vec<DenseMatrix>,
}

impl IterationDecomposition {
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn blocks(&self) -> usize {
        self.n() / self.block_size
    }

    /// `D − L − Lᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let lt = self.l.transpose();
        self.d
            .sub(&self.l)
            .and_then(|m| m.sub(&lt))
            .expect("blocks share the shape of G₀")
    }
}

fn check_blocks(g: &DenseMatrix, b: usize) -> Result<usize> {
    if !g.is_square() {
        return Err(NtkError::InvalidArgument(format!(
            "Gram matrix must be square, got {}×{}",
            g.rows(),
            g.cols()
        )));
    }
    let n = g.rows();
    if b == 0 || n == 0 || !n.is_multiple_of(b) {
        return Err(NtkError::BlockSize { n, b });
    }
    Ok(n / b)
}

/// Inverse of the `i`-th diagonal block.
fn inverse_block(g: &DenseMatrix, b: usize, i: usize) -> Result<DenseMatrix> {
    let block = g.block(i * b, i * b, b, b);
    let factor = cholesky_factor(&block).map_err(|_| NtkError::SingularDiagonalBlock { block: i })?;
    let mut inv = DenseMatrix::zeros(b, b);
    let mut e = vec![0.0; b];
    for c in 0..b {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        for (r, v) in factor.solve(&e).into_iter().enumerate() {
            inv[(r, c)] = v;
        }
    }
    if !inv.all_finite() {
        return Err(NtkError::SingularDiagonalBlock { block: i });
    }
    Ok(inv)
}

/// `b × n` matrix with the inverse of the batch Gram `gb` in the columns of
/// block `bi`.
pub(super) fn padded_inverse(gb: &DenseMatrix, bi: usize, n: usize) -> Result<DenseMatrix> {
    let b = gb.rows();
    let inv = inverse_block(gb, b, 0).map_err(|_| NtkError::SingularDiagonalBlock { block: bi })?;
    let mut p = DenseMatrix::zeros(b, n);
    p.set_block(0, bi * b, &inv);
    Ok(p)
}

/// Splits `G₀` into `b × b` blocks and forms `A` by block forward
/// substitution on `(D − L) X = I`.
pub fn build_iteration_matrix(g0: &DenseMatrix, b: usize) -> Result<IterationDecomposition> {
    let k = check_blocks(g0, b)?;
    let n = g0.rows();
    let mut d = DenseMatrix::zeros(n, n);
    let mut l = DenseMatrix::zeros(n, n);
    let mut inverses = Vec::with_capacity(k);
    for bi in 0..k {
        d.set_block(bi * b, bi * b, &g0.block(bi * b, bi * b, b, b));
        for bj in 0..bi {
            l.set_block(bi * b, bj * b, &g0.block(bi * b, bj * b, b, b).scale(-1.0));
        }
        inverses.push(inverse_block(g0, b, bi)?);
    }

    // block row i of X = (D − L)⁻¹: X_i = D_ii⁻¹ (E_i − Σ_{j<i} G_ij X_j)
    let mut x = DenseMatrix::zeros(n, n);
    for bi in 0..k {
        let mut rhs = DenseMatrix::zeros(b, n);
        for r in 0..b {
            rhs[(r, bi * b + r)] = 1.0;
        }
        for bj in 0..bi {
            let gij = g0.block(bi * b, bj * b, b, b);
            let xj = x.block(bj * b, 0, b, n);
            rhs = rhs.sub(&gij.matmul(&xj)?)?;
        }
        x.set_block(bi * b, 0, &inverses[bi].matmul(&rhs)?);
    }
    let u = l.transpose();
    let a = u.matmul(&x)?;

    let padded_inverse_blocks = inverses
        .iter()
        .enumerate()
        .map(|(bi, inv)| {
            let mut p = DenseMatrix::zeros(b, n);
            p.set_block(0, bi * b, inv);
            p
        })
        .collect();
    Ok(IterationDecomposition {
        d,
        l,
        u,
        a,
        block_size: b,
        padded_inverse_blocks,
    })
}

/// One sweep of block Gauss-Seidel on `G r = c`, blocks in ascending order,
/// starting from `r`.
pub fn gauss_seidel_epoch(g: &DenseMatrix, r: &[f64], c: &[f64], b: usize) -> Result<DenseVector> {
    let k = check_blocks(g, b)?;
    let n = g.rows();
    if r.len() != n || c.len() != n {
        return Err(NtkError::InvalidArgument(format!(
            "vectors of length {} and {} for a {n}×{n} system",
            r.len(),
            c.len()
        )));
    }
    let mut r = r.to_vec();
    for bi in 0..k {
        let rows = bi * b..(bi + 1) * b;
        let mut rhs: Vec<f64> = c[rows.clone()].to_vec();
        for (ri, row) in rows.clone().enumerate() {
            let g_row = g.row(row);
            for j in (0..n).filter(|j| !rows.contains(j)) {
                rhs[ri] -= g_row[j] * r[j];
            }
        }
        let block = g.block(bi * b, bi * b, b, b);
        let factor = cholesky_factor(&block).map_err(|_| NtkError::SingularDiagonalBlock { block: bi })?;
        let sol = factor.solve(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(NtkError::SingularDiagonalBlock { block: bi });
        }
        r[rows].copy_from_slice(&sol);
    }
    Ok(DenseVector(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// `ρ(A)`.
    pub rho: f64,
    /// `‖P‖₂‖P⁻¹‖₂` for unit-norm eigenvector columns `P`; infinite when
    /// `A` is defective.
    pub mu: f64,
    pub diagonalizable: bool,
    /// `ρ < 1`.
    pub bound_satisfied: bool,
}

pub fn spectral_report(decomp: &IterationDecomposition) -> Result<SpectralReport> {
    let rho = spectral_radius(&decomp.a)?;
    let cond = eigvec_condition(&decomp.a)?;
    Ok(SpectralReport {
        rho,
        mu: cond.mu,
        diagonalizable: cond.diagonalizable,
        bound_satisfied: rho < 1.0,
    })
}
