//! Small dense helpers for spin matrices and dense-oracle checks.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `max |A_ij|`.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a hermitian matrix.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(m.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    (vals, vecs)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    hermitian_eigen(m).0[0]
}

/// `exp(A)` for anti-hermitian `A`, computed spectrally so the result is unitary
/// to rounding.
pub fn expm_antihermitian(a: &CMat) -> CMat {
    // A = iH with H hermitian.
    let h = a * c(0.0, -1.0);
    let (vals, vecs) = hermitian_eigen(&h);
    let phases = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| Complex64::from_polar(1.0, l)),
    ));
    &vecs * phases * vecs.adjoint()
}

/// Function of a hermitian matrix applied through its eigendecomposition.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&l| c(f(l), 0.0))));
    &vecs * d * vecs.adjoint()
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    m.clone().try_inverse().ok_or(Error::SolveFailure { residual: f64::INFINITY })
}

/// Restriction of `m` to the rows and columns where `mask` is true.
pub fn restrict(m: &CMat, mask: &[bool]) -> CMat {
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    CMat::from_fn(idx.len(), idx.len(), |r, k| m[(idx[r], idx[k])])
}

/// Random matrix with entries uniform in the unit square, from a seeded stream.
pub fn random_matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut impl rand::Rng, n: usize) -> CMat {
    let a = random_matrix(rng, n, n);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

/// Random unitary from the QR factorization of a random matrix.
pub fn random_unitary(rng: &mut impl rand::Rng, n: usize) -> CMat {
    random_matrix(rng, n, n).qr().q()
}
