//! Krylov solvers: preconditioned conjugate gradients for hermitian positive
//! definite shifts and a Lanczos estimate of the smallest eigenvalue.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, Scalar};

/// `Σ conj(x_i) y_i`.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        acc += a.conj() * b;
    }
    acc
}

pub fn norm<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `y += a x`
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn div<T: Scalar>(num: T, den: f64) -> T {
    num.scale(1.0 / den)
}

/// `(A - shift) x`, the only operator shape the solvers need.
pub struct Shifted<'a, T> {
    pub a: &'a CsrMatrix<T>,
    pub shift: f64,
}

impl<T: Scalar> Shifted<'_, T> {
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        self.a.matvec_into(x, y);
        if self.shift != 0.0 {
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi += xi.scale(-self.shift);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned CG for `(A - shift) x = b` with `A - shift` positive
/// definite. `x0` warm-starts the iteration.
pub fn cg<T: Scalar>(
    op: &Shifted<'_, T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome<T>> {
    let n = op.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: vec![T::zero(); n], iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag: Vec<f64> =
        op.a.diagonal()
            .iter()
            .map(|d| {
                let v = d.re() - op.shift;
                if v > 0.0 {
                    1.0 / v
                } else {
                    1.0
                }
            })
            .collect();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![T::zero(); n]);
    let mut r = vec![T::zero(); n];
    op.apply(&x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &d)| ri.scale(d)).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re();
    let mut ap = vec![T::zero(); n];
    let mut res = norm(&r) / bnorm;
    let mut it = 0;
    while res > tol && it < max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap).re();
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SolveFailure { residual: res });
        }
        let alpha = rz / pap;
        axpy(T::from_real(alpha), &p, &mut x);
        axpy(T::from_real(-alpha), &ap, &mut r);
        res = norm(&r) / bnorm;
        it += 1;
        if res <= tol {
            break;
        }
        for ((zi, &ri), &d) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri.scale(d);
        }
        let rz_new = dot(&r, &z).re();
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + pi.scale(beta);
        }
    }
    // Recompute the true residual; the recurrence can drift.
    op.apply(&x, &mut ap);
    for (ai, &bi) in ap.iter_mut().zip(b) {
        *ai = bi - *ai;
    }
    let true_res = norm(&ap) / bnorm;
    if true_res > tol * 10.0 {
        return Err(Error::SolveFailure { residual: true_res });
    }
    Ok(CgOutcome { x, iterations: it, relative_residual: true_res })
}

/// Deterministic unit start vector.
pub fn seeded_unit_vector<T: Scalar>(n: usize, seed: u64, complex: impl Fn(f64, f64) -> T) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<T> = (0..n).map(|_| complex(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let nv = norm(&v);
    for x in &mut v {
        *x = div(*x, nv);
    }
    v
}

/// Smallest eigenvalue of a hermitian matrix by Lanczos without
/// reorthogonalization. Spurious copies of converged Ritz values do not move
/// the extremal one, so this is sufficient for ground energies.
pub fn lanczos_min_eig<T: Scalar>(
    a: &CsrMatrix<T>,
    seed: u64,
    tol: f64,
    max_iter: usize,
    complex: impl Fn(f64, f64) -> T,
) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let is_real = a.triplets().all(|(_, _, v)| v.norm_sqr() == v.re() * v.re());
    if n <= 400 && is_real {
        let mut d = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (r, c, v) in a.triplets() {
            d[(r, c)] = v.re();
        }
        return d.symmetric_eigen().eigenvalues.min();
    }
    let mut v = seeded_unit_vector(n, seed, &complex);
    let mut v_prev = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last = f64::INFINITY;
    let mut beta = 0.0;
    for k in 0..max_iter.min(n) {
        a.matvec_into(&v, &mut w);
        let alpha = dot(&v, &w).re();
        axpy(T::from_real(-alpha), &v, &mut w);
        if k > 0 {
            axpy(T::from_real(-beta), &v_prev, &mut w);
        }
        alphas.push(alpha);
        let m = alphas.len();
        beta = norm(&w);
        // The tridiagonal eigensolve is cubic, so only check every few steps.
        if m % 8 != 0 && m < n && beta > 0.0 && k + 1 < max_iter.min(n) {
            betas.push(beta);
            std::mem::swap(&mut v_prev, &mut v);
            for (vi, &wi) in v.iter_mut().zip(&w) {
                *vi = div(wi, beta);
            }
            continue;
        }
        let t = nalgebra::DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = t.symmetric_eigen();
        let imin = eig.eigenvalues.imin();
        let theta = eig.eigenvalues[imin];
        let scale = theta.abs().max(1.0);
        // Ritz residual of the extremal pair.
        let resid = beta * eig.eigenvectors[(m - 1, imin)].abs();
        if resid <= tol * scale || m == n || beta <= 1e-14 * scale {
            return theta;
        }
        last = theta;
        betas.push(beta);
        std::mem::swap(&mut v_prev, &mut v);
        for (vi, &wi) in v.iter_mut().zip(&w) {
            *vi = div(wi, beta);
        }
    }
    last
}
