//! Shared dense complex linear algebra helpers.
//!
//! Everything in the crate works on small dense matrices (the largest
//! recurring size is `(4N-3)+1` for the solver's block matrix), so plain
//! `nalgebra` dynamic matrices over `Complex<f64>` are used throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{DoaError, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Maximum absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. The input is symmetrized first so callers may pass
/// matrices that are Hermitian only up to rounding.
pub fn hermitian_eig(m: &CMat) -> (DVector<f64>, CMat) {
    let se = hermitian_part(m).symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Eigenvalues of a general (non-Hermitian) complex square matrix via the
/// Schur decomposition.
pub fn complex_eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(DoaError::DimensionMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1.0e-13, 100_000)
        .ok_or_else(|| DoaError::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Kronecker product of two complex vectors: `(a ⊗ b)[i*len(b)+j] = a[i] b[j]`.
pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let (na, nb) = (a.len(), b.len());
    let mut out = CVec::zeros(na * nb);
    for i in 0..na {
        for j in 0..nb {
            out[i * nb + j] = a[i] * b[j];
        }
    }
    out
}

/// Column-major vectorization of a matrix.
pub fn vec_col_major(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}
