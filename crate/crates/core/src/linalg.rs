//! Dense complex matrix kernel.
//!
//! Everything downstream works with [`CMatrix`], a dense column-major complex
//! matrix from `nalgebra`. The routines here are deterministic: a fixed input
//! always produces bitwise identical output.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;

/// Relative rank cutoff used by the factorization and rank routines.
pub const RANK_TOL: f64 = 1e-10;
/// Relative Hermitian tolerance.
pub const HERM_TOL: f64 = 1e-10;
/// Budget for verification residuals.
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("matrix is not positive semidefinite: minimal eigenvalue {lambda_min:e}")]
    NotPsd { lambda_min: f64 },
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Builds a complex matrix from real row-major data.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    assert_eq!(data.len(), rows * cols, "real_matrix: data length");
    CMatrix::from_fn(rows, cols, |i, j| c(data[i * cols + j], 0.0))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

/// Largest entry modulus, `0` for empty matrices.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |a_ij - b_ij|`; shapes must agree.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// Hermitian defect `max |m - m*|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs_diff(m, &m.adjoint())
}

fn require_square(m: &CMatrix) -> Result<(), LinalgError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LinalgError::Shape {
            expected: "square matrix".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        })
    }
}

/// Eigen-decomposition of the Hermitian part `(M + M*)/2`.
///
/// Eigenvalues come back in ascending order with matching eigenvector columns.
pub fn hermitian_eig(m: &CMatrix) -> Result<(Vec<f64>, CMatrix), LinalgError> {
    require_square(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), zeros(0, 0)));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((values, vectors))
}

/// Smallest eigenvalue of the Hermitian part; `+inf` for a 0x0 matrix.
pub fn hermitian_eig_min(m: &CMatrix) -> Result<f64, LinalgError> {
    let (values, _) = hermitian_eig(m)?;
    Ok(values.first().copied().unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone)]
pub struct FactorResult {
    /// `r x N` factor with `M ≈ Q* Q`; rows are ordered by decreasing eigenvalue.
    pub q: CMatrix,
    pub rank: usize,
    /// `max |M - Q* Q|`.
    pub residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Rank-revealing factorization `M ≈ Q* Q` of a positive semidefinite matrix.
///
/// Eigenvalues at or below `tol * λ_max` are clipped. The matrix is rejected
/// when `λ_min < -tol * max(1, ‖M‖_max)`.
pub fn psd_factor(m: &CMatrix, tol: f64) -> Result<FactorResult, LinalgError> {
    psd_factor_with(m, tol, tol)
}

/// [`psd_factor`] with separate rank cutoff and positivity slack.
pub fn psd_factor_with(
    m: &CMatrix,
    rank_tol: f64,
    psd_tol: f64,
) -> Result<FactorResult, LinalgError> {
    require_square(m)?;
    let n = m.nrows();
    let (values, vectors) = hermitian_eig(m)?;
    let lambda_min = values.first().copied().unwrap_or(0.0);
    let lambda_max = values.last().copied().unwrap_or(0.0);
    let scale = 1f64.max(max_abs(m));
    if lambda_min < -psd_tol * scale {
        return Err(LinalgError::NotPsd { lambda_min });
    }
    let cutoff = rank_tol * lambda_max.max(0.0);
    let kept: Vec<usize> = (0..n).rev().filter(|&k| values[k] > cutoff && values[k] > 0.0).collect();
    let q = CMatrix::from_fn(kept.len(), n, |r, col| {
        let k = kept[r];
        vectors[(col, k)].conj() * values[k].sqrt()
    });
    let residual = if n == 0 { 0.0 } else { max_abs_diff(m, &(q.adjoint() * &q)) };
    Ok(FactorResult {
        rank: kept.len(),
        q,
        residual,
        lambda_min,
        lambda_max,
    })
}

/// Singular values in decreasing order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(a.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Largest singular value; `0` for empty or zero matrices.
pub fn op_norm(a: &CMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Numerical rank: singular values with `σ² > tol · σ_max²`.
pub fn rank(a: &CMatrix, tol: f64) -> usize {
    let s = singular_values(a);
    let Some(&top) = s.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x * x > tol * top * top).count()
}

/// Orthonormal basis (as columns) of the column span of `a`, same cutoff as [`rank`].
pub fn column_basis(a: &CMatrix, tol: f64) -> CMatrix {
    let rows = a.nrows();
    if rows == 0 || a.ncols() == 0 {
        return zeros(rows, 0);
    }
    // Eigenvectors of A A* give a deterministic, ordered left singular basis.
    let gram = a * a.adjoint();
    let (values, vectors) = hermitian_eig(&gram).expect("square by construction");
    let top = values.last().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return zeros(rows, 0);
    }
    let kept: Vec<usize> = (0..rows).rev().filter(|&k| values[k] > tol * top).collect();
    CMatrix::from_fn(rows, kept.len(), |r, j| vectors[(r, kept[j])])
}

/// Moore-Penrose pseudo-inverse with relative singular value cutoff `tol`.
pub fn pinv(a: &CMatrix, tol: f64) -> CMatrix {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return zeros(cols, rows);
    }
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut out = zeros(cols, rows);
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > tol * top && sigma > 0.0 {
            let vk = v_t.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk).scale(1.0 / sigma);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct LstsqResult {
    pub x: CMatrix,
    /// Frobenius norm `‖A X - B‖_F`.
    pub residual: f64,
}

/// Minimum-norm least squares solution of `A X = B`.
pub fn lstsq(a: &CMatrix, b: &CMatrix) -> Result<LstsqResult, LinalgError> {
    if a.nrows() != b.nrows() {
        return Err(LinalgError::Shape {
            expected: format!("{} rows", a.nrows()),
            found: format!("{} rows", b.nrows()),
        });
    }
    let x = pinv(a, 1e-12) * b;
    let residual = (a * &x - b).norm();
    Ok(LstsqResult { x, residual })
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r, c0), b.shape()).copy_from(b);
        r += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Horizontal concatenation; `rows` is used when `blocks` is empty.
pub fn hstack(rows: usize, blocks: &[CMatrix]) -> CMatrix {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row mismatch");
        out.view_mut((0, c0), b.shape()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_min_examples() {
        let ones = real_matrix(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(hermitian_eig_min(&ones).unwrap().abs() < 1e-14);
        let m = real_matrix(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!((hermitian_eig_min(&m).unwrap() + 1.0).abs() < 1e-14);
        assert!((hermitian_eig_min(&identity(3)).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(hermitian_eig_min(&zeros(2, 3)), Err(LinalgError::Shape { .. })));
    }

    #[test]
    fn factor_rank_one() {
        let ones = real_matrix(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = psd_factor(&ones, RANK_TOL).unwrap();
        assert_eq!(f.rank, 1);
        assert!(f.residual < 1e-12);
        // Q = [1, 1] up to a phase.
        assert!((f.q[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((f.q[(0, 0)] - f.q[(0, 1)]).norm() < 1e-12);
    }

    #[test]
    fn factor_zero_and_not_psd() {
        let f = psd_factor(&zeros(3, 3), RANK_TOL).unwrap();
        assert_eq!(f.rank, 0);
        assert_eq!(f.q.shape(), (0, 3));
        let m = real_matrix(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match psd_factor(&m, RANK_TOL) {
            Err(LinalgError::NotPsd { lambda_min }) => assert!((lambda_min + 1.0).abs() < 1e-12),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn lstsq_examples() {
        let b = real_matrix(2, 2, &[3.0, -1.0, 0.5, 2.0]);
        let r = lstsq(&identity(2), &b).unwrap();
        assert!(max_abs_diff(&r.x, &b) < 1e-14 && r.residual < 1e-14);

        let a = real_matrix(2, 1, &[1.0, 1.0]);
        let r = lstsq(&a, &real_matrix(2, 1, &[1.0, 1.0])).unwrap();
        assert!((r.x[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14 && r.residual < 1e-14);

        // Normal equations: 2x = 1, residual² = 0.5².2.
        let r = lstsq(&a, &real_matrix(2, 1, &[1.0, 0.0])).unwrap();
        assert!((r.x[(0, 0)] - c(0.5, 0.0)).norm() < 1e-14);
        assert!((r.residual * r.residual - 0.5).abs() < 1e-14);

        assert!(lstsq(&a, &identity(3)).is_err());
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&identity(4)) - 1.0).abs() < 1e-14);
        assert_eq!(op_norm(&zeros(3, 2)), 0.0);
        assert!((op_norm(&real_matrix(2, 2, &[0.0, 2.0, 0.0, 0.0])) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn pinv_of_full_row_rank_is_right_inverse() {
        let q = CMatrix::from_fn(2, 4, |i, j| c((i + 2 * j) as f64, (i as f64) - (j as f64)));
        let p = pinv(&q, 1e-12);
        assert!(max_abs_diff(&(&q * p), &identity(2)) < 1e-12);
    }

    #[test]
    fn column_basis_is_orthonormal() {
        let a = real_matrix(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 0.0]);
        let b = column_basis(&a, RANK_TOL);
        assert_eq!(b.ncols(), 2);
        assert!(max_abs_diff(&(b.adjoint() * &b), &identity(2)) < 1e-12);
        assert_eq!(rank(&a, RANK_TOL), 2);
    }
}
