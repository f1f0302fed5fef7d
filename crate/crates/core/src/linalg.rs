//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// `N × N` matrix with ones on the first subdiagonal.
pub fn lower_shift(n: usize) -> Mat {
    let mut l = Mat::zeros(n, n);
    for i in 1..n {
        l[(i, i - 1)] = 1.0;
    }
    l
}

/// Standard basis vector `e_i` (zero-based) of length `n` as a column matrix.
pub fn basis_column(n: usize, i: usize) -> Mat {
    let mut e = Mat::zeros(n, 1);
    e[(i, 0)] = 1.0;
    e
}

/// Stack matrices vertically. All blocks must share a column count.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Maximum absolute row sum.
pub fn norm_inf(a: &Mat) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute column sum.
pub fn norm_one(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Symmetry check with a relative tolerance.
pub fn is_symmetric(a: &Mat, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = 1.0 + a.amax();
    (a - a.transpose()).amax() <= rel_tol * scale
}

/// Cholesky factorization that reports failure as an error naming `what`.
pub fn cholesky(a: &Mat, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Matrix exponential by scaling and squaring with an order-18 Taylor series.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 0.5, which
/// puts the truncation error of the series far below double precision.
pub fn expm(a: &Mat) -> Mat {
    assert!(a.is_square(), "expm of a non-square matrix");
    let n = a.nrows();
    let norm = norm_one(a);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil().max(0.0) as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);
    let mut result = Mat::identity(n, n);
    let mut term = Mat::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Spectral radius from the real Schur form eigenvalues.
pub fn spectral_radius(a: &Mat) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn vec_norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimum-norm least-squares solve of a symmetric positive semidefinite
/// system through its eigen-decomposition; eigenvalues below
/// `rel_cut * max_eig` are treated as zero.
pub fn psd_pinv_solve(a: &Mat, b: &Vector, rel_cut: f64) -> Vector {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = rel_cut * max.max(f64::MIN_POSITIVE);
    let coeff = eig.eigenvectors.transpose() * b;
    let mut scaled = coeff.clone();
    for (i, c) in scaled.iter_mut().enumerate() {
        let lam = eig.eigenvalues[i];
        *c = if lam > cut { *c / lam } else { 0.0 };
    }
    &eig.eigenvectors * scaled
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn expm_of_zero_is_identity() {
        let e = expm(&Mat::zeros(3, 3));
        assert_abs_diff_eq!(e, Mat::identity(3, 3), epsilon = 1e-15);
    }

    #[test]
    fn expm_matches_scalar_exponential() {
        let a = Mat::from_element(1, 1, 3.7);
        assert!((expm(&a)[(0, 0)] - 3.7f64.exp()).abs() < 1e-12 * 3.7f64.exp());
    }

    #[test]
    fn expm_of_rotation_generator() {
        // exp([[0, -t], [t, 0]]) is the rotation by t.
        let t = 2.3;
        let a = Mat::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a);
        let r = Mat::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert_abs_diff_eq!(e, r, epsilon = 1e-13);
    }

    #[test]
    fn expm_of_nilpotent_is_finite_series() {
        let a = lower_shift(4) * 1.5;
        let e = expm(&a);
        let a2 = &a * &a;
        let a3 = &a2 * &a;
        let expected = Mat::identity(4, 4) + &a + &a2 / 2.0 + &a3 / 6.0;
        assert_abs_diff_eq!(e, expected, epsilon = 1e-13);
    }

    #[test]
    fn spectral_radius_of_rotation_and_scaling() {
        let a = Mat::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert!((spectral_radius(&a) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn pinv_solve_is_minimum_norm() {
        // Rank-one PSD matrix [[1,1],[1,1]]; b = (2,2) -> minimum-norm solution (1,1).
        let a = Mat::from_element(2, 2, 1.0);
        let b = Vector::from_vec(vec![2.0, 2.0]);
        let x = psd_pinv_solve(&a, &b, 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }
}
