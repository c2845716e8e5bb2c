//! Dense linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Vertical concatenation of blocks with equal column counts.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Horizontal concatenation of blocks with equal row counts.
pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Block-diagonal concatenation.
pub fn blkdiag(blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), (b.nrows(), b.ncols())).copy_from(*b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Assemble a matrix from a grid of optional blocks; `None` means zero.
/// Row heights and column widths are inferred from the present blocks.
pub fn block_grid(rows: &[usize], cols: &[usize], blocks: &[Vec<Option<&Mat>>]) -> Mat {
    let mut out = Mat::zeros(rows.iter().sum(), cols.iter().sum());
    let mut r0 = 0;
    for (bi, row) in blocks.iter().enumerate() {
        let mut c0 = 0;
        for (bj, blk) in row.iter().enumerate() {
            if let Some(b) = blk {
                assert_eq!((b.nrows(), b.ncols()), (rows[bi], cols[bj]), "block ({bi},{bj}) shape");
                out.view_mut((r0, c0), (rows[bi], cols[bj])).copy_from(*b);
            }
            c0 += cols[bj];
        }
        r0 += rows[bi];
    }
    out
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Singular values in descending order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        None => 0,
        Some(&smax) if smax == 0.0 => 0,
        Some(&smax) => sv.iter().filter(|&&s| s > rel_tol * smax).count(),
    }
}

pub fn spectral_norm(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Full SVD pieces of an r x c matrix: singular values (length c, descending
/// order not guaranteed), U (r x k) and the full c x c right factor V.
struct FullSvd {
    u: Mat,
    s: Vec<f64>,
    v: Mat,
}

fn full_svd(m: &Mat) -> FullSvd {
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = Mat::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v requested").transpose();
    let u = u.rows(0, r).into_owned();
    FullSvd { u, s: svd.singular_values.iter().copied().collect(), v }
}

/// Moore-Penrose pseudo-inverse with relative cutoff.
pub fn pinv(m: &Mat, rel_tol: f64) -> Mat {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Mat::zeros(c, r);
    }
    let svd = full_svd(m);
    let smax = svd.s.iter().copied().fold(0.0, f64::max);
    let mut out = Mat::zeros(c, r);
    for (k, &s) in svd.s.iter().enumerate() {
        if smax > 0.0 && s > rel_tol * smax {
            out += svd.v.column(k) * svd.u.column(k).transpose() / s;
        }
    }
    out
}

/// Orthonormal basis of the null space (columns), relative cutoff.
pub fn null_space(m: &Mat, rel_tol: f64) -> Mat {
    let (r, c) = m.shape();
    if c == 0 {
        return Mat::zeros(0, 0);
    }
    if r == 0 {
        return Mat::identity(c, c);
    }
    let svd = full_svd(m);
    let smax = svd.s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..c).filter(|&k| !(smax > 0.0 && svd.s[k] > rel_tol * smax)).collect();
    let mut out = Mat::zeros(c, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        out.set_column(j, &svd.v.column(k));
    }
    out
}

/// Inverse of a symmetric positive-definite matrix, or `None` if not PD.
pub fn spd_inverse(m: &Mat) -> Option<Mat> {
    symmetrize(m).cholesky().map(|c| c.inverse())
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    Mat::from_fn(r, c, |i, j| rows[i][j])
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_wide_matrix_is_right_inverse() {
        let a = Mat::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        let p = pinv(&a, 1e-12);
        assert!((&a * &p - Mat::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn null_space_annihilates() {
        let a = Mat::from_row_slice(2, 4, &[1.0, 2.0, 0.0, 1.0, 0.0, 1.0, 1.0, 3.0]);
        let n = null_space(&a, 1e-12);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).abs().max() < 1e-12);
        assert!((n.transpose() * &n - Mat::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn rank_of_outer_product_is_one() {
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(numerical_rank(&(&v * v.transpose()), 1e-9), 1);
    }

    #[test]
    fn blkdiag_places_blocks() {
        let a = Mat::identity(1, 1);
        let b = Mat::from_element(2, 2, 3.0);
        let d = blkdiag(&[&a, &b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 0)], 1.0);
        assert_eq!(d[(2, 1)], 3.0);
        assert_eq!(d[(0, 2)], 0.0);
    }
}
