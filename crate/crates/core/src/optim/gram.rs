use crate::linalg::DenseMatrix;
use crate::model::JacobianBatch;

use super::{OptimError, Result};

/// Columns per cache block in the Gram assembly.
const GRAM_CHUNK: usize = 512;

/// Row tile of the micro-kernel: `TILE_ROWS × TILE_COLS` entries of `G` per pass.
const TILE_ROWS: usize = 4;
const TILE_COLS: usize = 2;

type Tile = [[f64; TILE_COLS]; TILE_ROWS];

/// `G = J Jᵀ` over one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DenseMatrix,
    pub source_batch: Vec<usize>,
}

/// `H = Jᵀ J`, used only by the classic Gauss-Newton oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMatrix {
    pub entries: DenseMatrix,
}

/// Portable tile kernel: four lanes per entry, summed pairwise at the end.
fn tile_portable(a: [&[f64]; TILE_ROWS], c: [&[f64]; TILE_COLS]) -> Tile {
    let len = a[0].len();
    let n = len / 4 * 4;
    let mut acc = [[[0.0f64; 4]; TILE_COLS]; TILE_ROWS];
    for k in (0..n).step_by(4) {
        for (r, row) in a.iter().enumerate() {
            let x = &row[k..k + 4];
            for (q, col) in c.iter().enumerate() {
                let y = &col[k..k + 4];
                for l in 0..4 {
                    acc[r][q][l] += x[l] * y[l];
                }
            }
        }
    }
    let mut out = [[0.0; TILE_COLS]; TILE_ROWS];
    for r in 0..TILE_ROWS {
        for q in 0..TILE_COLS {
            let t = acc[r][q];
            let mut v = (t[0] + t[1]) + (t[2] + t[3]);
            for k in n..len {
                v += a[r][k] * c[q][k];
            }
            out[r][q] = v;
        }
    }
    out
}

#[cfg(target_arch = "x86_64")]
#[inline(always)]
unsafe fn load4(s: &[f64], k: usize) -> std::arch::x86_64::__m256d {
    // SAFETY: the caller keeps k + 4 ≤ s.len(); [f64; 4] only needs f64 alignment.
    std::mem::transmute::<[f64; 4], std::arch::x86_64::__m256d>(*s.as_ptr().add(k).cast::<[f64; 4]>())
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tile_fma(a: [&[f64]; TILE_ROWS], c: [&[f64]; TILE_COLS]) -> Tile {
    use std::arch::x86_64::*;
    let len = a[0].len();
    let n = len / 4 * 4;
    let mut acc = [[_mm256_setzero_pd(); TILE_COLS]; TILE_ROWS];
    let mut k = 0;
    while k < n {
        // SAFETY: k + 4 ≤ n ≤ len for every slice, all of which share a length.
        let y0 = load4(c[0], k);
        let y1 = load4(c[1], k);
        for r in 0..TILE_ROWS {
            let x = load4(a[r], k);
            acc[r][0] = _mm256_fmadd_pd(x, y0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_pd(x, y1, acc[r][1]);
        }
        k += 4;
    }
    let mut out = [[0.0; TILE_COLS]; TILE_ROWS];
    for r in 0..TILE_ROWS {
        for q in 0..TILE_COLS {
            let mut t = [0.0; 4];
            _mm256_storeu_pd(t.as_mut_ptr(), acc[r][q]);
            let mut v = (t[0] + t[1]) + (t[2] + t[3]);
            for kk in n..len {
                v += a[r][kk] * c[q][kk];
            }
            out[r][q] = v;
        }
    }
    out
}

fn fma_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn tile(fast: bool, a: [&[f64]; TILE_ROWS], c: [&[f64]; TILE_COLS]) -> Tile {
    #[cfg(target_arch = "x86_64")]
    if fast {
        // SAFETY: `fast` is only set after runtime detection of avx2 and fma.
        return unsafe { tile_fma(a, c) };
    }
    let _ = fast;
    tile_portable(a, c)
}

/// Assembles the Gram matrix in `O(b²m)`.
///
/// Columns are swept in cache-sized chunks. Within a chunk, `4 × 2` tiles of
/// the upper triangle are computed together so each loaded Jacobian value is
/// reused several times. Rows past the end of the batch are padded with the
/// last row and discarded. Uses AVX2/FMA when the CPU has it, so the last few
/// bits can differ between machines but not between runs on one machine.
pub fn gram_matrix(jac: &JacobianBatch) -> Result<GramMatrix> {
    let b = jac.rows();
    if b == 0 {
        return Err(OptimError::EmptyBatch);
    }
    let m = jac.cols();
    let fast = fma_available();
    let clamp = |i: usize| i.min(b - 1);
    let mut g = DenseMatrix::zeros(b, b);
    let mut start = 0;
    while start < m {
        let end = (start + GRAM_CHUNK).min(m);
        let row = |i: usize| &jac.row(clamp(i))[start..end];
        for j0 in (0..b).step_by(TILE_COLS) {
            let cols = std::array::from_fn(|q| row(j0 + q));
            let mut i0 = 0;
            while i0 < b && i0 < j0 + TILE_COLS {
                let rows = std::array::from_fn(|r| row(i0 + r));
                let t = tile(fast, rows, cols);
                for (r, tr) in t.iter().enumerate() {
                    for (q, &v) in tr.iter().enumerate() {
                        let (i, j) = (i0 + r, j0 + q);
                        if i < b && j < b && i <= j {
                            g[(i, j)] += v;
                        }
                    }
                }
                i0 += TILE_ROWS;
            }
        }
        start = end;
    }
    for i in 0..b {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(GramMatrix {
        entries: g,
        source_batch: jac.sample_indices.clone(),
    })
}

pub fn normal_matrix(jac: &JacobianBatch) -> Result<NormalMatrix> {
    if jac.rows() == 0 {
        return Err(OptimError::EmptyBatch);
    }
    let jt = jac.entries.transpose();
    Ok(NormalMatrix {
        entries: jt.matmul(&jac.entries)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn batch(rows: &[&[f64]]) -> JacobianBatch {
        JacobianBatch {
            entries: DenseMatrix::from_rows(rows).unwrap(),
            sample_indices: (0..rows.len()).collect(),
        }
    }

    #[test]
    fn hand_jacobian_gives_identity() {
        let s = 1.0 / 2f64.sqrt();
        let g = gram_matrix(&batch(&[&[s, 0.0, -s, 0.0], &[0.0, s, 0.0, -s]])).unwrap();
        assert!(max_abs_diff(g.entries.as_slice(), DenseMatrix::identity(2).as_slice()) < 1e-15);
    }

    #[test]
    fn zero_and_duplicate_rows() {
        let g = gram_matrix(&batch(&[&[0.0, 0.0, 0.0]])).unwrap();
        assert_eq!(g.entries.as_slice(), &[0.0]);
        let g = gram_matrix(&batch(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]])).unwrap();
        assert!(g.entries.as_slice().iter().all(|&v| v == 14.0));
    }

    #[test]
    fn chunked_entries_equal_inner_products() {
        let m = 5000;
        let r0: Vec<f64> = (0..m).map(|i| (i as f64 * 0.37).sin()).collect();
        let r1: Vec<f64> = (0..m).map(|i| (i as f64 * 0.11).cos()).collect();
        let jac = batch(&[&r0, &r1]);
        let g = gram_matrix(&jac).unwrap();
        let naive: f64 = r0.iter().zip(&r1).map(|(a, b)| a * b).sum();
        assert!((g.entries[(0, 1)] - naive).abs() < 1e-10 * naive.abs().max(1.0));
        assert_eq!(g.entries[(0, 1)], g.entries[(1, 0)]);
    }

    #[test]
    fn tiled_kernel_matches_naive_for_awkward_shapes() {
        for (b, m) in [(1, 3), (3, 7), (5, 1030), (9, 513), (13, 2)] {
            let rows: Vec<Vec<f64>> = (0..b)
                .map(|i| (0..m).map(|k| ((i * 31 + k * 7) as f64 * 0.013).sin()).collect())
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let g = gram_matrix(&batch(&refs)).unwrap();
            for i in 0..b {
                for j in 0..b {
                    let naive: f64 = rows[i].iter().zip(&rows[j]).map(|(x, y)| x * y).sum();
                    assert!((g.entries[(i, j)] - naive).abs() < 1e-11 * (1.0 + naive.abs()), "{b} {m} {i} {j}");
                }
            }
            assert_eq!(tile_portable([&[1.0, 2.0]; 4], [&[3.0, 4.0]; 2]), [[11.0; 2]; 4]);
        }
    }

    #[test]
    fn normal_matrix_spot_check() {
        let jac = batch(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let h = normal_matrix(&jac).unwrap();
        assert_eq!(h.entries.as_slice(), &[2.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn empty_batch_rejected() {
        let jac = JacobianBatch {
            entries: DenseMatrix::zeros(0, 3),
            sample_indices: vec![],
        };
        assert!(matches!(gram_matrix(&jac), Err(OptimError::EmptyBatch)));
    }
}
