//! Dense linear-algebra helpers shared by the solver and the risk engine.
//!
//! Everything here works on small dense `nalgebra` matrices. Symmetric
//! matrix functions go through a symmetric eigendecomposition with the
//! eigenvalues clipped at zero, so PSD inputs carrying rounding noise are
//! handled without complaint.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalues below this are treated as rounding noise around zero.
pub const PSD_CLIP: f64 = 1e-12;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&vals) * v.transpose()))
}

/// Principal square root of a symmetric PSD matrix.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |x| x.max(0.0).sqrt())
}

/// Square root and inverse square root from one eigendecomposition.
///
/// Returns `None` when the smallest eigenvalue is not above `floor`.
pub fn sqrt_and_inv_sqrt(
    m: &DMatrix<f64>,
    floor: f64,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&x| !(x > floor)) {
        return None;
    }
    let v = &eig.eigenvectors;
    let root = eig.eigenvalues.map(f64::sqrt);
    let inv_root = root.map(|x| 1.0 / x);
    let s = symmetrize(&(v * DMatrix::from_diagonal(&root) * v.transpose()));
    let s_inv = symmetrize(&(v * DMatrix::from_diagonal(&inv_root) * v.transpose()));
    Some((s, s_inv))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Matrix exponential `e^{m}` (Padé scaling and squaring).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.exp()
}

/// `∫₀^t e^{sM} ds` via the exponential of the augmented block matrix
/// `[[M, I], [0, 0]]`, whose upper-right block is the integral.
pub fn exp_integral_block(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(m * t));
    for i in 0..n {
        aug[(i, n + i)] = t;
    }
    expm(&aug).view((0, n), (n, n)).into_owned()
}

/// Reciprocal 2-norm condition number `σ_min / σ_max` (0 for the zero matrix).
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

pub fn dot(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(b)
}
