//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Singular values at or below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Moore-Penrose pseudoinverse together with the numerical rank used.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: CMatrix,
    pub rank: usize,
}

/// Pseudoinverse with the relative rank rule `sigma <= RANK_TOL * sigma_max`.
pub fn pinv(a: &CMatrix) -> PseudoInverse {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return PseudoInverse {
            matrix: CMatrix::zeros(n, m),
            rank: 0,
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cut = RANK_TOL * smax;
    let mut out = CMatrix::zeros(n, m);
    let mut rank = 0;
    for (k, &sk) in s.iter().enumerate() {
        if sk <= cut || sk == 0.0 {
            continue;
        }
        rank += 1;
        let inv = 1.0 / sk;
        // out += v_k * inv * u_k^H
        for c in 0..m {
            let uc = u[(c, k)].conj() * inv;
            for r in 0..n {
                out[(r, c)] += v_t[(k, r)].conj() * uc;
            }
        }
    }
    PseudoInverse { matrix: out, rank }
}

/// Pseudoinverse of a matrix that must have full column rank.
pub fn left_inverse(a: &CMatrix) -> Result<CMatrix> {
    let p = pinv(a);
    if p.rank < a.ncols() {
        return Err(Error::RankDeficient {
            rank: p.rank,
            required: a.ncols(),
        });
    }
    Ok(p.matrix)
}

/// Singular values in descending order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Block-diagonal stacking.
pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 1.0), c(2.0, 0.0), c(0.0, -1.0), c(3.0, 0.5)]);
        let p = pinv(&a);
        assert_eq!(p.rank, 2);
        let id = &a * &p.matrix;
        for r in 0..2 {
            for k in 0..2 {
                let want = if r == k { 1.0 } else { 0.0 };
                assert!((id[(r, k)] - c(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_rule_drops_tiny_singular_values() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1e-14, 0.0)]);
        assert_eq!(pinv(&a).rank, 1);
        assert!(matches!(left_inverse(&a), Err(Error::RankDeficient { rank: 1, required: 2 })));
    }

    #[test]
    fn block_diag_places_blocks() {
        let a = CMatrix::from_element(2, 1, c(1.0, 0.0));
        let b = CMatrix::from_element(1, 2, c(2.0, 0.0));
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(2, 1)], c(2.0, 0.0));
        assert_eq!(d[(0, 1)], c(0.0, 0.0));
        assert_eq!(d[(1, 0)], c(1.0, 0.0));
    }
}
