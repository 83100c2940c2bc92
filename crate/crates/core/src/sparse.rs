//! Compressed sparse row storage with deterministic assembly.
//!
//! Rows are always stored with strictly increasing column indices and
//! duplicates summed, so two assemblies from the same inputs produce
//! bit-identical arrays.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Field scalar usable in [`CsrMatrix`] and the Krylov solvers.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn norm_sqr(self) -> f64;
    fn scale(self, x: f64) -> Self;
    fn re(self) -> f64;
    fn is_zero(self) -> bool {
        self.norm_sqr() == 0.0
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn scale(self, x: f64) -> Self {
        self * x
    }
    fn re(self) -> f64 {
        self
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn scale(self, x: f64) -> Self {
        self * x
    }
    fn re(self) -> f64 {
        self.re
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<T>,
}

/// Row-by-row assembler. Rows must be pushed in order; entries inside a
/// row may come in any order and are sorted and merged on `finish_row`.
pub struct CsrBuilder<T> {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<T>,
    row: Vec<(u32, T)>,
}

impl<T: Scalar> CsrBuilder<T> {
    pub fn new(ncols: usize, nrows_hint: usize, nnz_hint: usize) -> Self {
        let mut indptr = Vec::with_capacity(nrows_hint + 1);
        indptr.push(0);
        Self {
            ncols,
            indptr,
            indices: Vec::with_capacity(nnz_hint),
            data: Vec::with_capacity(nnz_hint),
            row: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, col: usize, value: T) {
        debug_assert!(col < self.ncols);
        self.row.push((col as u32, value));
    }

    pub fn finish_row(&mut self) {
        self.row.sort_by_key(|&(c, _)| c);
        let mut iter = self.row.drain(..);
        if let Some((mut col, mut acc)) = iter.next() {
            for (c, v) in iter {
                if c == col {
                    acc += v;
                } else {
                    if !acc.is_zero() {
                        self.indices.push(col);
                        self.data.push(acc);
                    }
                    col = c;
                    acc = v;
                }
            }
            if !acc.is_zero() {
                self.indices.push(col);
                self.data.push(acc);
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub fn build(self) -> CsrMatrix<T> {
        assert!(self.row.is_empty(), "unfinished row in CsrBuilder");
        CsrMatrix {
            nrows: self.indptr.len() - 1,
            ncols: self.ncols,
            indptr: self.indptr,
            indices: self.indices,
            data: self.data,
        }
    }
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::from_real(1.0); n])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut b = CsrBuilder::new(diag.len(), diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            b.push(i, d);
            b.finish_row();
        }
        b.build()
    }

    /// Assembles from unordered `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1));
        let mut b = CsrBuilder::new(ncols, nrows, triplets.len());
        let mut pos = 0;
        for r in 0..nrows {
            while pos < order.len() && triplets[order[pos]].0 == r {
                let (_, c, v) = triplets[order[pos]];
                b.push(c, v);
                pos += 1;
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[s..e].iter().zip(&self.data[s..e]).map(|(&c, &v)| (c as usize, v))
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        match self.indices[s..e].binary_search(&(c as u32)) {
            Ok(k) => self.data[s + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let (s, e) = (self.indptr[r], self.indptr[r + 1]);
            let mut acc = T::zero();
            for k in s..e {
                acc += self.data[k] * x[self.indices[k] as usize];
            }
            *out = acc;
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut data = vec![T::zero(); self.nnz()];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                indices[slot] = r as u32;
                data[slot] = v.conj();
                next[c] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, indptr, indices, data }
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = s * *v;
        }
        out
    }

    /// `alpha * self + beta * other`.
    pub fn lin_comb(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut b = CsrBuilder::new(self.ncols, self.nrows, self.nnz() + other.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                b.push(c, alpha * v);
            }
            for (c, v) in other.row(r) {
                b.push(c, beta * v);
            }
            b.finish_row();
        }
        Ok(b.build())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(T::from_real(1.0), other, T::from_real(1.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(T::from_real(1.0), other, T::from_real(-1.0))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut b = CsrBuilder::new(other.ncols, self.nrows, self.nnz() + other.nnz());
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, v) in other.row(k) {
                    b.push(c, a * v);
                }
            }
            b.finish_row();
        }
        Ok(b.build())
    }

    /// `self * other - other * self`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr().sqrt()).fold(0.0, f64::max)
    }

    /// Largest absolute entry restricted to rows and columns where `mask` is true.
    pub fn max_abs_on(&self, mask: &[bool]) -> f64 {
        assert_eq!(mask.len(), self.nrows);
        let mut m = 0.0f64;
        for r in (0..self.nrows).filter(|&r| mask[r]) {
            for (c, v) in self.row(r) {
                if mask[c] {
                    m = m.max(v.norm_sqr().sqrt());
                }
            }
        }
        m
    }

    /// `max |A - A^†|`, computed in place without forming the adjoint.
    pub fn hermiticity_defect(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let mut m = 0.0f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let d = v - self.get(c, r).conj();
                m = m.max(d.norm_sqr().sqrt());
            }
        }
        m
    }

    /// Gershgorin interval `[lo, hi]` containing the real parts of the spectrum.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.nrows {
            let mut center = 0.0;
            let mut radius = 0.0;
            for (c, v) in self.row(r) {
                if c == r {
                    center = v.re();
                } else {
                    radius += v.norm_sqr().sqrt();
                }
            }
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        (lo, hi)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        Ok(())
    }
}

impl CsrMatrix<Complex64> {
    /// Real part, if every stored imaginary part is exactly zero.
    pub fn to_real(&self) -> Option<CsrMatrix<f64>> {
        if self.data.iter().all(|v| v.im == 0.0) {
            Some(self.map(|v| v.re))
        } else {
            None
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn from_dense(m: &nalgebra::DMatrix<Complex64>, drop_below: f64) -> Self {
        let mut b = CsrBuilder::new(m.ncols(), m.nrows(), 0);
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v.norm() > drop_below {
                    b.push(c, v);
                }
            }
            b.finish_row();
        }
        b.build()
    }

    /// Kronecker product `small ⊗ self` with `small` dense (the slow index).
    pub fn kron_left(&self, small: &nalgebra::DMatrix<Complex64>) -> Self {
        kron_sum(&[(small, self)], self.nrows, self.ncols)
    }
}

/// Assembles `Σ_t S_t ⊗ A_t` row by row, with dense `S_t` acting on the slow
/// (spin) index and sparse `A_t` on the fast one.
pub fn kron_sum(
    terms: &[(&nalgebra::DMatrix<Complex64>, &CsrMatrix<Complex64>)],
    fast_rows: usize,
    fast_cols: usize,
) -> CsrMatrix<Complex64> {
    let d = terms.first().map(|(s, _)| s.nrows()).unwrap_or(1);
    for (s, a) in terms {
        assert_eq!(s.nrows(), d);
        assert_eq!(s.ncols(), d);
        assert_eq!(a.nrows(), fast_rows);
        assert_eq!(a.ncols(), fast_cols);
    }
    let nnz: usize = terms.iter().map(|(s, a)| a.nnz() * s.iter().filter(|v| v.norm() != 0.0).count()).sum();
    let mut b = CsrBuilder::new(d * fast_cols, d * fast_rows, nnz);
    for alpha in 0..d {
        for r in 0..fast_rows {
            for (s, a) in terms {
                for beta in 0..d {
                    let sv = s[(alpha, beta)];
                    if sv.norm_sqr() == 0.0 {
                        continue;
                    }
                    for (c, v) in a.row(r) {
                        b.push(beta * fast_cols + c, sv * v);
                    }
                }
            }
            b.finish_row();
        }
    }
    b.build()
}
