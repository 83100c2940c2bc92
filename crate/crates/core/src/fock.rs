//! Truncated bosonic Fock space `F_{≤ n_max}` over the grid modes.
//!
//! States are occupation vectors ordered by total number and then
//! lexicographically, so the `n`-boson sector is a contiguous slice and state 0
//! is the vacuum. The rank of an occupation vector is computed
//! combinatorially, without a lookup table.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{FormFactorVector, ModeGrid};
use crate::sparse::{kron_sum, CsrBuilder, CsrMatrix};

pub const DEFAULT_DIMENSION_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    n_modes: usize,
    n_max: usize,
    /// Flat occupation table, `n_modes` entries per state.
    occupations: Vec<u8>,
    /// `sector_start[t]` is the index of the first state with total number `t`.
    sector_start: Vec<usize>,
    /// `completions[k][r] = C(r + k, k)`: ways to spread `r` bosons over `k + 1` modes.
    completions: Vec<Vec<usize>>,
    id: u64,
}

/// Number of states with at most `n_max` bosons in `m` modes, `C(m + n_max, n_max)`.
pub fn basis_dimension(m: usize, n_max: usize) -> u128 {
    let mut acc: u128 = 1;
    for k in 1..=n_max as u128 {
        acc = acc.saturating_mul(m as u128 + k) / k;
    }
    acc
}

pub fn enumerate_basis(m: usize, n_max: usize) -> Result<FockBasis> {
    FockBasis::new(m, n_max, 1, DEFAULT_DIMENSION_CAP)
}

impl FockBasis {
    /// Builds the basis, refusing when `spin_dim · |states|` exceeds `cap`.
    pub fn new(m: usize, n_max: usize, spin_dim: usize, cap: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyGrid);
        }
        if n_max > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!("n_max {n_max} exceeds 255")));
        }
        let dim = basis_dimension(m, n_max);
        let total = dim.saturating_mul(spin_dim.max(1) as u128);
        if total > cap as u128 {
            return Err(Error::DimensionOverflow { dim: total, cap });
        }
        let dim = dim as usize;
        let completions: Vec<Vec<usize>> =
            (0..m).map(|k| (0..=n_max).map(|r| basis_dimension(k, r) as usize).collect()).collect();
        let mut occupations = Vec::with_capacity(dim * m);
        let mut sector_start = Vec::with_capacity(n_max + 2);
        let mut cur = vec![0u8; m];
        for t in 0..=n_max {
            sector_start.push(occupations.len() / m);
            fill_sector(&mut cur, 0, t, &mut occupations);
        }
        sector_start.push(occupations.len() / m);
        debug_assert_eq!(occupations.len(), dim * m);
        let id = (m as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((n_max as u64) << 32);
        Ok(Self { n_modes: m, n_max, occupations, sector_start, completions, id })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.sector_start[self.n_max + 1]
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.occupations[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn total(&self, i: usize) -> usize {
        self.sector_start.partition_point(|&s| s <= i) - 1
    }

    pub fn sector(&self, t: usize) -> Range<usize> {
        self.sector_start[t]..self.sector_start[t + 1]
    }

    /// Ordinal of an occupation vector, `None` if it lies outside the truncation.
    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        if occ.len() != self.n_modes {
            return None;
        }
        let t: usize = occ.iter().map(|&x| x as usize).sum();
        if t > self.n_max {
            return None;
        }
        let sparse: Vec<(usize, usize)> =
            occ.iter().enumerate().filter(|(_, &n)| n > 0).map(|(i, &n)| (i, n as usize)).collect();
        Some(self.sector_start[t] + self.rank_in_sector(&sparse, t))
    }

    /// Rank inside sector `t` of the state with nonzero occupations `sparse`
    /// (mode-ascending).
    fn rank_in_sector(&self, sparse: &[(usize, usize)], t: usize) -> usize {
        let m = self.n_modes;
        let mut rank = 0;
        let mut rem = t;
        for &(i, n) in sparse {
            if i + 1 < m {
                // States that agree before mode i and hold fewer bosons there come first.
                let row = &self.completions[m - i - 2];
                for v in 0..n {
                    rank += row[rem - v];
                }
            }
            rem -= n;
        }
        rank
    }

    fn sparse_occupation(&self, i: usize) -> Vec<(usize, usize)> {
        self.state(i).iter().enumerate().filter(|(_, &n)| n > 0).map(|(k, &n)| (k, n as usize)).collect()
    }

    /// Compressed creation operator with coefficients `c` in the orthonormal
    /// mode basis: `⟨n + e_i| a*(c) |n⟩ = c_i √(n_i + 1)`.
    pub fn creation_matrix(&self, coeffs: &[Complex64]) -> Result<CsrMatrix<Complex64>> {
        if coeffs.len() != self.n_modes {
            return Err(Error::GridMismatch(format!("{} coefficients for {} modes", coeffs.len(), self.n_modes)));
        }
        let dim = self.dim();
        let mut b = CsrBuilder::new(dim, dim, dim * self.n_max.max(1));
        let mut buf: Vec<(usize, usize)> = Vec::with_capacity(self.n_max);
        for t in 0..=self.n_max {
            for r in self.sector(t) {
                if t > 0 {
                    let occ = self.sparse_occupation(r);
                    for (k, &(i, n)) in occ.iter().enumerate() {
                        let ci = coeffs[i];
                        if ci.norm_sqr() == 0.0 {
                            continue;
                        }
                        buf.clear();
                        buf.extend_from_slice(&occ);
                        if n == 1 {
                            buf.remove(k);
                        } else {
                            buf[k].1 -= 1;
                        }
                        let src = self.sector_start[t - 1] + self.rank_in_sector(&buf, t - 1);
                        b.push(src, ci * (n as f64).sqrt());
                    }
                }
                b.finish_row();
            }
        }
        Ok(b.build())
    }

    pub fn second_quantization_diag(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.n_modes {
            return Err(Error::GridMismatch(format!("{} values for {} modes", xi.len(), self.n_modes)));
        }
        Ok((0..self.dim()).map(|s| self.state(s).iter().zip(xi).map(|(&n, x)| n as f64 * x).sum()).collect())
    }

    /// Marks, on `C^D ⊗ F`, the states whose total number is at most `max_total`.
    pub fn sector_mask(&self, spin_dim: usize, max_total: usize) -> Vec<bool> {
        let end = self.sector_start[(max_total + 1).min(self.n_max + 1)];
        let mut mask = vec![false; spin_dim * self.dim()];
        for a in 0..spin_dim {
            for s in 0..end {
                mask[a * self.dim() + s] = true;
            }
        }
        mask
    }

    /// States strictly below the truncation edge.
    pub fn sub_truncation_mask(&self, spin_dim: usize) -> Vec<bool> {
        if self.n_max == 0 {
            return vec![false; spin_dim * self.dim()];
        }
        self.sector_mask(spin_dim, self.n_max - 1)
    }

    /// CSV of occupation vectors: `index,total,n_1,…,n_M`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,total");
        for i in 1..=self.n_modes {
            let _ = write!(out, ",n_{i}");
        }
        out.push('\n');
        for s in 0..self.dim() {
            let _ = write!(out, "{},{}", s, self.total(s));
            for n in self.state(s) {
                let _ = write!(out, ",{n}");
            }
            out.push('\n');
        }
        out
    }
}

fn fill_sector(cur: &mut [u8], pos: usize, rem: usize, out: &mut Vec<u8>) {
    let m = cur.len();
    if pos + 1 == m {
        cur[pos] = rem as u8;
        out.extend_from_slice(cur);
        cur[pos] = 0;
        return;
    }
    for v in 0..=rem {
        cur[pos] = v as u8;
        fill_sector(cur, pos + 1, rem - v, out);
    }
    cur[pos] = 0;
}

/// Sparse operator on `C^D ⊗ F_{≤ n_max}` with the spin index slow.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    pub matrix: CsrMatrix<Complex64>,
    pub basis_id: u64,
    pub spin_dim: usize,
    pub hermitian: bool,
}

pub const HERMITIAN_TOL: f64 = 1e-12;

impl FockOperator {
    pub fn new(matrix: CsrMatrix<Complex64>, basis: &FockBasis, spin_dim: usize) -> Result<Self> {
        let n = spin_dim * basis.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, space has dimension {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, basis_id: basis.id(), spin_dim, hermitian: false })
    }

    /// Certifies hermiticity, failing with the observed deviation.
    pub fn certified_hermitian(mut self) -> Result<Self> {
        let dev = self.matrix.hermiticity_defect();
        if dev > HERMITIAN_TOL * (1.0 + self.matrix.max_abs()) {
            return Err(Error::NonHermitianResult { deviation: dev });
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            basis_id: self.basis_id,
            spin_dim: self.spin_dim,
            hermitian: self.hermitian,
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.basis_id != self.basis_id || psi.coefficients.len() != self.dim() {
            return Err(Error::DimensionMismatch("state and operator live on different spaces".into()));
        }
        Ok(StateVector {
            coefficients: self.matrix.matvec(&psi.coefficients),
            basis_id: self.basis_id,
            spin_dim: self.spin_dim,
        })
    }

    fn combine(
        &self,
        other: &Self,
        f: impl Fn(&CsrMatrix<Complex64>, &CsrMatrix<Complex64>) -> Result<CsrMatrix<Complex64>>,
    ) -> Result<Self> {
        if self.basis_id != other.basis_id || self.spin_dim != other.spin_dim {
            return Err(Error::DimensionMismatch("operators act on different spaces".into()));
        }
        Ok(Self {
            matrix: f(&self.matrix, &other.matrix)?,
            basis_id: self.basis_id,
            spin_dim: self.spin_dim,
            hermitian: false,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a.sub(b))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a.matmul(b))
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { matrix: self.matrix.scaled(s), basis_id: self.basis_id, spin_dim: self.spin_dim, hermitian: false }
    }

    /// Triplet CSV `row,col,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,re,im\n");
        for (r, c, v) in self.matrix.triplets() {
            let _ = writeln!(out, "{r},{c},{:.16e},{:.16e}", v.re, v.im);
        }
        out
    }
}

/// `S ⊗ A` for a dense spin matrix and a Fock operator.
pub fn spin_tensor(spin: &DMatrix<Complex64>, fock: &CsrMatrix<Complex64>) -> CsrMatrix<Complex64> {
    fock.kron_left(spin)
}

/// `Σ_t S_t ⊗ A_t` as a single operator.
pub fn spin_tensor_sum(
    terms: &[(&DMatrix<Complex64>, &CsrMatrix<Complex64>)],
    basis: &FockBasis,
) -> CsrMatrix<Complex64> {
    kron_sum(terms, basis.dim(), basis.dim())
}

/// `a*(f)` on Fock space alone, with the grid weights folded in.
pub fn creation_op(f: &FormFactorVector, grid: &ModeGrid, basis: &FockBasis) -> Result<FockOperator> {
    check_modes(grid, basis)?;
    let coeffs = grid.mode_coefficients(f)?;
    FockOperator::new(basis.creation_matrix(&coeffs)?, basis, 1)
}

/// `a(f)`, the adjoint of [`creation_op`].
pub fn annihilation_op(f: &FormFactorVector, grid: &ModeGrid, basis: &FockBasis) -> Result<FockOperator> {
    Ok(creation_op(f, grid, basis)?.adjoint())
}

/// `dΓ(ξ)`, diagonal with entries `Σ n_i ξ_i`.
pub fn second_quantization(xi: &[f64], basis: &FockBasis) -> Result<FockOperator> {
    let diag: Vec<Complex64> =
        basis.second_quantization_diag(xi)?.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
    let mut op = FockOperator::new(CsrMatrix::from_diagonal(&diag), basis, 1)?;
    op.hermitian = true;
    Ok(op)
}

pub fn number_op(basis: &FockBasis) -> FockOperator {
    second_quantization(&vec![1.0; basis.n_modes()], basis).expect("mode count matches")
}

/// Creation operator for the orthonormal basis vector `ê_i`.
pub fn mode_creation(i: usize, basis: &FockBasis) -> CsrMatrix<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0); basis.n_modes()];
    c[i] = Complex64::new(1.0, 0.0);
    basis.creation_matrix(&c).expect("mode count matches")
}

pub fn check_modes(grid: &ModeGrid, basis: &FockBasis) -> Result<()> {
    if grid.len() != basis.n_modes() {
        return Err(Error::GridMismatch(format!("grid has {} modes, basis {}", grid.len(), basis.n_modes())));
    }
    Ok(())
}

/// Commutator deviations on the sub-truncation block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcrDeviation {
    /// `max ‖[a_i, a_j*] − δ_ij‖`.
    pub mixed: f64,
    pub annihilators: f64,
    pub creators: f64,
}

impl CcrDeviation {
    pub fn max(&self) -> f64 {
        self.mixed.max(self.annihilators).max(self.creators)
    }
}

/// CCR for the orthonormal mode operators, measured below the truncation edge.
pub fn ccr_deviation(basis: &FockBasis) -> Result<CcrDeviation> {
    let m = basis.n_modes();
    let mask = basis.sub_truncation_mask(1);
    let id = CsrMatrix::<Complex64>::identity(basis.dim());
    let ads: Vec<_> = (0..m).map(|i| mode_creation(i, basis)).collect();
    let as_: Vec<_> = ads.iter().map(|x| x.adjoint()).collect();
    let mut out = CcrDeviation { mixed: 0.0, annihilators: 0.0, creators: 0.0 };
    for i in 0..m {
        for j in 0..m {
            let mut comm = as_[i].commutator(&ads[j])?;
            if i == j {
                comm = comm.sub(&id)?;
            }
            out.mixed = out.mixed.max(comm.max_abs_on(&mask));
            out.annihilators = out.annihilators.max(as_[i].commutator(&as_[j])?.max_abs_on(&mask));
            out.creators = out.creators.max(ads[i].commutator(&ads[j])?.max_abs_on(&mask));
        }
    }
    Ok(out)
}

/// `max |a(f) − a*(f)*|` entrywise; zero by construction.
pub fn adjointness_defect(f: &FormFactorVector, grid: &ModeGrid, basis: &FockBasis) -> Result<f64> {
    let ad = creation_op(f, grid, basis)?;
    let a = annihilation_op(f, grid, basis)?;
    Ok(a.matrix.sub(&ad.matrix.adjoint())?.max_abs())
}

/// Worst ratios `‖Σ M_ℓ⊗a_ℓ ψ‖ / (‖M‖₂ ‖N^{1/2}ψ‖)` and
/// `‖Σ M_ℓ⊗a*_ℓ ψ‖ / (‖M‖₂ ‖(N+1)^{1/2}ψ‖)`; both bounds say the ratio is ≤ 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixBoundCheck {
    pub annihilation_ratio: f64,
    pub creation_ratio: f64,
    pub samples: usize,
}

/// Random matrix couplings `M_ℓ` on `C^spin_dim` and random states supported
/// below the edge, with `‖M‖₂² = Σ_ℓ ‖M_ℓ‖²`.
pub fn matrix_coupling_bounds(
    basis: &FockBasis,
    spin_dim: usize,
    samples: usize,
    rng: &mut impl rand::Rng,
) -> Result<MatrixBoundCheck> {
    let m = basis.n_modes();
    let ads: Vec<_> = (0..m).map(|i| mode_creation(i, basis)).collect();
    let as_: Vec<_> = ads.iter().map(|x| x.adjoint()).collect();
    let n_diag = basis.second_quantization_diag(&vec![1.0; m])?;
    let low = basis.sector_mask(spin_dim, basis.n_max().saturating_sub(1));
    let mut out = MatrixBoundCheck { annihilation_ratio: 0.0, creation_ratio: 0.0, samples };
    for _ in 0..samples {
        let ms: Vec<DMatrix<Complex64>> =
            (0..m).map(|_| crate::dense::random_matrix(rng, spin_dim, spin_dim)).collect();
        let m2 = ms.iter().map(|x| crate::dense::spectral_norm(x).powi(2)).sum::<f64>().sqrt();
        let ann = spin_tensor_sum(&ms.iter().zip(&as_).collect::<Vec<_>>(), basis);
        let cre = spin_tensor_sum(&ms.iter().zip(&ads).collect::<Vec<_>>(), basis);
        let psi: Vec<Complex64> = (0..spin_dim * basis.dim())
            .map(|i| {
                if low[i] {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let nn = |shift: f64| {
            psi.iter().enumerate().map(|(i, p)| p.norm_sqr() * (n_diag[i % basis.dim()] + shift)).sum::<f64>().sqrt()
        };
        let an = nn(0.0);
        if an > 0.0 {
            out.annihilation_ratio = out.annihilation_ratio.max(crate::krylov::norm(&ann.matvec(&psi)) / (m2 * an));
        }
        out.creation_ratio = out.creation_ratio.max(crate::krylov::norm(&cre.matvec(&psi)) / (m2 * nn(1.0)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub coefficients: Vec<Complex64>,
    pub basis_id: u64,
    pub spin_dim: usize,
}

impl StateVector {
    pub fn zeros(basis: &FockBasis, spin_dim: usize) -> Self {
        Self { coefficients: vec![Complex64::new(0.0, 0.0); spin_dim * basis.dim()], basis_id: basis.id(), spin_dim }
    }

    /// `v ⊗ Ω`.
    pub fn spin_vacuum(v: &[Complex64], basis: &FockBasis) -> Self {
        let mut s = Self::zeros(basis, v.len());
        for (a, &x) in v.iter().enumerate() {
            s.coefficients[a * basis.dim()] = x;
        }
        s
    }

    pub fn norm(&self) -> f64 {
        crate::krylov::norm(&self.coefficients)
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        crate::krylov::dot(&self.coefficients, &other.coefficients)
    }

    /// Entries with total number `t`, spin-major.
    pub fn sector(&self, basis: &FockBasis, t: usize) -> Vec<Complex64> {
        let r = basis.sector(t);
        (0..self.spin_dim)
            .flat_map(|a| self.coefficients[a * basis.dim() + r.start..a * basis.dim() + r.end].iter().copied())
            .collect()
    }

    pub fn sector_norms(&self, basis: &FockBasis) -> Vec<f64> {
        (0..=basis.n_max()).map(|t| crate::krylov::norm(&self.sector(basis, t))).collect()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            coefficients: self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a - b).collect(),
            basis_id: self.basis_id,
            spin_dim: self.spin_dim,
        }
    }

    /// Norm restricted to the states where `mask` is true.
    pub fn masked_norm(&self, mask: &[bool]) -> f64 {
        self.coefficients.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v.norm_sqr()).sum::<f64>().sqrt()
    }
}
