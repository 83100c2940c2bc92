//! Spin systems and cut-off GSB Hamiltonians
//! `H_Λ = K ⊗ 1 + 1 ⊗ dΓ(ω) + Σ_j (B_j ⊗ a*(f_j) + B_j* ⊗ a(f_j))`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dense::{self, c, CMat};
use crate::error::{Error, Result};
use crate::fock::{check_modes, FockBasis, FockOperator};
use crate::model::{FormFactorVector, ModeGrid};
use crate::sparse::{kron_sum, CsrMatrix};

pub const COMMUTATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    k: CMat,
    b: Vec<CMat>,
    norms: Vec<f64>,
    commutator_defect: f64,
}

impl SpinSystem {
    /// Validated spin system; rejects non-commuting couplings.
    pub fn new(k: CMat, b: Vec<CMat>) -> Result<Self> {
        let s = Self::new_unchecked_commutation(k, b)?;
        if !s.is_commuting() {
            return Err(Error::NonCommutingCouplings { deviation: s.commutator_defect });
        }
        Ok(s)
    }

    /// Accepts non-commuting couplings for experiments on `H_Λ` itself. The
    /// commutation certificate is still recorded and `dressing` refuses such
    /// systems.
    pub fn new_unchecked_commutation(k: CMat, b: Vec<CMat>) -> Result<Self> {
        let d = k.nrows();
        if d == 0 || k.ncols() != d {
            return Err(Error::DimensionMismatch("K must be a nonempty square matrix".into()));
        }
        if b.is_empty() {
            return Err(Error::InvalidArgument("at least one coupling matrix is required".into()));
        }
        if let Some(bad) = b.iter().find(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::DimensionMismatch(format!(
                "coupling is {}x{}, spin dimension is {d}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        let dev = dense::hermiticity_defect(&k);
        if dev > COMMUTATION_TOL * (1.0 + dense::max_abs(&k)) {
            return Err(Error::NonHermitianResult { deviation: dev });
        }
        let mut commutator_defect = 0.0f64;
        for i in 0..b.len() {
            for j in i + 1..b.len() {
                commutator_defect = commutator_defect.max(dense::spectral_norm(&(&b[i] * &b[j] - &b[j] * &b[i])));
            }
        }
        let norms = b.iter().map(dense::spectral_norm).collect();
        Ok(Self { k, b, norms, commutator_defect })
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn n_couplings(&self) -> usize {
        self.b.len()
    }

    pub fn k(&self) -> &CMat {
        &self.k
    }

    pub fn couplings(&self) -> &[CMat] {
        &self.b
    }

    pub fn coupling_norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn commutator_defect(&self) -> f64 {
        self.commutator_defect
    }

    pub fn is_commuting(&self) -> bool {
        self.commutator_defect <= COMMUTATION_TOL
    }

    /// Same spin system with every coupling multiplied by `s`.
    pub fn scaled_couplings(&self, s: f64) -> Result<Self> {
        Self::new_unchecked_commutation(self.k.clone(), self.b.iter().map(|m| m * c(s, 0.0)).collect())
    }

    /// `K = η σ_z`, `B = λ σ_x`.
    pub fn standard_spin_boson(eta: f64, lambda: f64) -> Result<Self> {
        Self::new(pauli_z() * c(eta, 0.0), vec![pauli_x() * c(lambda, 0.0)])
    }
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// `σ₊ = σ_x + iσ_y`, normalized as written (entry 2, not 1).
pub fn ladder_plus() -> CMat {
    pauli_x() + pauli_y() * c(0.0, 1.0)
}

/// `σ₋ = σ_x − iσ_y`.
pub fn ladder_minus() -> CMat {
    pauli_x() - pauli_y() * c(0.0, 1.0)
}

/// Permutation matrix with `P e_k = e_{p(k)}`.
pub fn permutation(p: &[usize]) -> Result<CMat> {
    let d = p.len();
    let mut seen = vec![false; d];
    for &x in p {
        if x >= d || seen[x] {
            return Err(Error::InvalidArgument(format!("{p:?} is not a permutation of 0..{d}")));
        }
        seen[x] = true;
    }
    let mut m = CMat::zeros(d, d);
    for (k, &pk) in p.iter().enumerate() {
        m[(pk, k)] = c(1.0, 0.0);
    }
    Ok(m)
}

pub fn diag(values: &[f64]) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_iterator(values.len(), values.iter().map(|&x| c(x, 0.0))))
}

/// Named spin matrix: `pauli_x`, `pauli_y`, `pauli_z`, `ladder_plus`,
/// `ladder_minus`, `identity(d)`, `permutation(p0,p1,…)`, `diag(x0,x1,…)`.
pub fn spin_matrix_preset(name: &str) -> Result<CMat> {
    let name = name.trim();
    let args = |prefix: &str| -> Option<Vec<String>> {
        name.strip_prefix(prefix)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
            .map(|r| r.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    };
    let bad = || Error::InvalidArgument(format!("cannot parse spin matrix `{name}`"));
    match name {
        "pauli_x" => return Ok(pauli_x()),
        "pauli_y" => return Ok(pauli_y()),
        "pauli_z" => return Ok(pauli_z()),
        "ladder_plus" => return Ok(ladder_plus()),
        "ladder_minus" => return Ok(ladder_minus()),
        _ => {}
    }
    if let Some(a) = args("permutation") {
        let p: Vec<usize> = a.iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        return permutation(&p);
    }
    if let Some(a) = args("diag") {
        let v: Vec<f64> = a.iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        if v.is_empty() {
            return Err(bad());
        }
        return Ok(diag(&v));
    }
    if let Some(a) = args("identity") {
        let d: usize = a.first().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(CMat::identity(d, d));
    }
    Err(bad())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterTerm {
    pub matrix: CMat,
    pub trace_norm: f64,
}

impl CounterTerm {
    fn new(matrix: CMat) -> Self {
        let trace_norm = if matrix.is_empty() { 0.0 } else { matrix.clone().singular_values().sum() };
        Self { matrix, trace_norm }
    }

    /// `Some(e)` when the counterterm is `e · Id`.
    pub fn as_scalar(&self) -> Option<f64> {
        let e = self.matrix[(0, 0)];
        let d = self.matrix.nrows();
        (e.im == 0.0 && dense::max_abs(&(&self.matrix - CMat::identity(d, d) * e)) == 0.0).then_some(e.re)
    }
}

fn check_form_factors(spin: &SpinSystem, f: &[FormFactorVector], grid: &ModeGrid) -> Result<()> {
    if f.len() != spin.n_couplings() {
        return Err(Error::DimensionMismatch(format!("{} form factors for {} couplings", f.len(), spin.n_couplings())));
    }
    f.iter().try_for_each(|v| grid.check(v))
}

/// `E_Λ = −Σ_{j,j'} B_j* B_j' ⟨f_j, ω⁻¹ f_j'⟩`.
pub fn self_energy(spin: &SpinSystem, f: &[FormFactorVector], grid: &ModeGrid) -> Result<CounterTerm> {
    check_form_factors(spin, f, grid)?;
    let d = spin.dim();
    let scaled: Vec<FormFactorVector> = f.iter().map(|v| grid.omega_times(v, -1.0)).collect::<Result<_>>()?;
    let mut e = CMat::zeros(d, d);
    for (j, fj) in f.iter().enumerate() {
        for (jp, gjp) in scaled.iter().enumerate() {
            let ip = grid.inner(fj, gjp)?;
            if ip.norm_sqr() == 0.0 {
                continue;
            }
            e -= spin.b[j].adjoint() * &spin.b[jp] * ip;
        }
    }
    Ok(CounterTerm::new(e))
}

/// The Fock-space identity as a CSR matrix.
pub fn fock_identity(basis: &FockBasis) -> CsrMatrix<Complex64> {
    CsrMatrix::identity(basis.dim())
}

/// `H_Λ` without the counterterm.
pub fn assemble_cutoff_hamiltonian(
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<FockOperator> {
    assemble_with_shift(spin, f, grid, basis, None)
}

/// `H_Λ − E_Λ`.
pub fn assemble_renormalized_hamiltonian(
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<(FockOperator, CounterTerm)> {
    let e = self_energy(spin, f, grid)?;
    let h = assemble_with_shift(spin, f, grid, basis, Some(&e.matrix))?;
    Ok((h, e))
}

fn assemble_with_shift(
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
    counter: Option<&CMat>,
) -> Result<FockOperator> {
    check_modes(grid, basis)?;
    check_form_factors(spin, f, grid)?;
    let d = spin.dim();
    let id_f = fock_identity(basis);
    let id_s = CMat::identity(d, d);
    let diag: Vec<Complex64> = basis.second_quantization_diag(grid.omega())?.into_iter().map(|x| c(x, 0.0)).collect();
    let dgamma = CsrMatrix::from_diagonal(&diag);
    let spin_part = match counter {
        Some(e) => spin.k() - e,
        None => spin.k().clone(),
    };
    let mut creators = Vec::with_capacity(f.len());
    for fj in f {
        let ad = basis.creation_matrix(&grid.mode_coefficients(fj)?)?;
        let a = ad.adjoint();
        creators.push((ad, a));
    }
    let b_adj: Vec<CMat> = spin.b.iter().map(|m| m.adjoint()).collect();
    let mut terms: Vec<(&DMatrix<Complex64>, &CsrMatrix<Complex64>)> = vec![(&spin_part, &id_f), (&id_s, &dgamma)];
    for (j, (ad, a)) in creators.iter().enumerate() {
        if ad.nnz() == 0 {
            continue;
        }
        terms.push((&spin.b[j], ad));
        terms.push((&b_adj[j], a));
    }
    let m = kron_sum(&terms, basis.dim(), basis.dim());
    FockOperator::new(m, basis, d)?.certified_hermitian()
}

/// `‖(H_Λ − K − E_Λ) − Σ_ℓ ω_ℓ â_ℓ* â_ℓ‖_max` together with `‖H_Λ‖_max`,
/// with the right side formed as explicit operator products.
pub fn completing_square_residual(
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<CompletingSquare> {
    let h = assemble_cutoff_hamiltonian(spin, f, grid, basis)?;
    let e = self_energy(spin, f, grid)?;
    let d = spin.dim();
    let shift = spin.k() + &e.matrix;
    let lhs = h.matrix.sub(&kron_sum(&[(&shift, &fock_identity(basis))], basis.dim(), basis.dim()))?;
    let mut rhs = CsrMatrix::zeros(d * basis.dim(), d * basis.dim());
    for (l, &om) in grid.omega().iter().enumerate() {
        let a_hat = crate::dressing::dressed_annihilation_mode(l, spin, f, grid, basis)?;
        let term = a_hat.matrix.adjoint().matmul(&a_hat.matrix)?;
        rhs = rhs.lin_comb(c(1.0, 0.0), &term, c(om, 0.0))?;
    }
    let residual = lhs.sub(&rhs)?.max_abs();
    Ok(CompletingSquare { residual, hamiltonian_max: h.matrix.max_abs() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletingSquare {
    pub residual: f64,
    pub hamiltonian_max: f64,
}

impl CompletingSquare {
    /// `residual ≤ tol · (1 + ‖H_Λ‖_max)`.
    pub fn holds(&self, tol: f64) -> bool {
        self.residual <= tol * (1.0 + self.hamiltonian_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::enumerate_basis;
    use crate::model::GridScheme;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn presets() {
        assert_eq!(ladder_plus(), CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));
        let p = spin_matrix_preset("permutation(1, 2, 0)").unwrap();
        assert_eq!(p[(1, 0)], c(1.0, 0.0));
        assert_eq!(p[(0, 2)], c(1.0, 0.0));
        assert!(spin_matrix_preset("permutation(0,0)").is_err());
        assert_eq!(spin_matrix_preset("diag(1,2)").unwrap(), diag(&[1.0, 2.0]));
        assert_eq!(spin_matrix_preset("identity(3)").unwrap(), CMat::identity(3, 3));
        assert!(spin_matrix_preset("nonsense").is_err());
    }

    #[test]
    fn noncommuting_couplings_flagged() {
        let err = SpinSystem::new(pauli_z(), vec![pauli_x(), pauli_z()]).unwrap_err();
        assert!(matches!(err, Error::NonCommutingCouplings { deviation } if (deviation - 2.0).abs() < 1e-12));
        let s = SpinSystem::new_unchecked_commutation(pauli_z(), vec![pauli_x(), pauli_z()]).unwrap();
        assert!(!s.is_commuting());
    }

    #[test]
    fn non_hermitian_k_rejected() {
        assert!(matches!(SpinSystem::new(ladder_plus(), vec![pauli_x()]), Err(Error::NonHermitianResult { .. })));
    }

    #[test]
    fn decoupled_hamiltonian() {
        let grid = ModeGrid::build(1.0, 3.0, 2, GridScheme::Uniform).unwrap();
        let basis = enumerate_basis(2, 2).unwrap();
        let spin = SpinSystem::standard_spin_boson(0.7, 1.0).unwrap();
        let h = assemble_cutoff_hamiltonian(&spin, &[grid.zero_vector()], &grid, &basis).unwrap();
        let mut spec: Vec<f64> = dense::hermitian_eigen(&h.matrix.to_dense()).0;
        let mut expected = Vec::new();
        for kappa in [0.7, -0.7] {
            for e in basis.second_quantization_diag(grid.omega()).unwrap() {
                expected.push(kappa + e);
            }
        }
        expected.sort_by(f64::total_cmp);
        spec.sort_by(f64::total_cmp);
        for (a, b) in spec.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_mode_hand_assembly() {
        let grid = ModeGrid::single(2.0, 1.0).unwrap();
        let basis = enumerate_basis(1, 1).unwrap();
        let spin = SpinSystem::new(CMat::zeros(1, 1), vec![CMat::identity(1, 1)]).unwrap();
        let cc = c(0.4, -1.1);
        let f = grid.vector(vec![cc]).unwrap();
        let h = assemble_cutoff_hamiltonian(&spin, &[f], &grid, &basis).unwrap().matrix.to_dense();
        let expected = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), cc.conj(), cc, c(2.0, 0.0)]);
        assert!(dense::max_abs(&(h - expected)) < 1e-15);
    }

    #[test]
    fn standard_spin_boson_layout() {
        let grid = ModeGrid::single(1.0, 1.0).unwrap();
        let basis = enumerate_basis(1, 1).unwrap();
        let spin = SpinSystem::standard_spin_boson(0.5, 0.3).unwrap();
        let f = grid.real_vector(&[2.0]).unwrap();
        let h = assemble_cutoff_hamiltonian(&spin, &[f], &grid, &basis).unwrap().matrix.to_dense();
        // Rows (↑Ω, ↑1, ↓Ω, ↓1).
        let r = |x: f64| c(x, 0.0);
        let expected = CMat::from_row_slice(
            4,
            4,
            &[
                r(0.5),
                r(0.0),
                r(0.0),
                r(0.6),
                r(0.0),
                r(1.5),
                r(0.6),
                r(0.0),
                r(0.0),
                r(0.6),
                r(-0.5),
                r(0.0),
                r(0.6),
                r(0.0),
                r(0.0),
                r(0.5),
            ],
        );
        assert!(dense::max_abs(&(h - expected)) < 1e-15);
    }

    #[test]
    fn self_energy_examples() {
        let grid = ModeGrid::single(2.0, 1.0).unwrap();
        let spin = SpinSystem::new(pauli_z(), vec![pauli_x()]).unwrap();
        assert_eq!(self_energy(&spin, &[grid.zero_vector()], &grid).unwrap().matrix, CMat::zeros(2, 2));
        let cc = c(0.6, 0.8);
        let e = self_energy(&spin, &[grid.vector(vec![cc]).unwrap()], &grid).unwrap();
        assert!(dense::max_abs(&(e.matrix.clone() - CMat::identity(2, 2) * c(-cc.norm_sqr() / 2.0, 0.0))) < 1e-15);
        assert_eq!(e.as_scalar(), Some(-0.5));
    }

    #[test]
    fn self_energy_grows_for_flat_case2() {
        let spin = SpinSystem::new(pauli_z(), vec![pauli_x()]).unwrap();
        let mut prev = 0.0;
        for e_max in [10.0, 100.0, 1000.0] {
            let grid = ModeGrid::build(1.0, e_max, 32, GridScheme::Log).unwrap();
            let f = grid.real_vector(&vec![1.0; 32]).unwrap();
            let e = self_energy(&spin, std::slice::from_ref(&f), &grid).unwrap();
            let expected = 2.0 * grid.omega_norm(&f, -0.5).unwrap().powi(2);
            assert!((e.trace_norm - expected).abs() < 1e-10 * expected);
            assert!(e.trace_norm > prev);
            prev = e.trace_norm;
        }
    }

    #[test]
    fn self_energy_additive_on_disjoint_supports() {
        let grid = ModeGrid::build(1.0, 10.0, 6, GridScheme::Uniform).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b1 = dense::random_hermitian(&mut rng, 2);
        let b2 = &b1 * &b1;
        let spin = SpinSystem::new(pauli_z(), vec![b1, b2]).unwrap();
        let fs: Vec<FormFactorVector> = (0..2)
            .map(|_| {
                grid.vector((0..6).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
                    .unwrap()
            })
            .collect();
        let lo = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let hi = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let e = self_energy(&spin, &fs, &grid).unwrap().matrix;
        let el = self_energy(&spin, &fs.iter().map(|f| f.masked(&lo)).collect::<Vec<_>>(), &grid).unwrap().matrix;
        let eh = self_energy(&spin, &fs.iter().map(|f| f.masked(&hi)).collect::<Vec<_>>(), &grid).unwrap().matrix;
        assert!(dense::max_abs(&(e - el - eh)) < 1e-13);
    }

    #[test]
    fn completing_square_trivial_and_single_mode() {
        let grid = ModeGrid::single(2.0, 1.0).unwrap();
        let basis = enumerate_basis(1, 2).unwrap();
        let spin = SpinSystem::new(CMat::zeros(1, 1), vec![CMat::identity(1, 1)]).unwrap();
        let r0 = completing_square_residual(&spin, &[grid.zero_vector()], &grid, &basis).unwrap();
        assert!(r0.residual <= 1e-14);
        let f = grid.vector(vec![c(0.3, 0.9)]).unwrap();
        let r = completing_square_residual(&spin, &[f], &grid, &basis).unwrap();
        assert!(r.residual <= 1e-12);
    }

    #[test]
    fn renormalized_hamiltonian_is_hermitian_with_complex_data() {
        let grid = ModeGrid::build(1.0, 5.0, 2, GridScheme::Log).unwrap();
        let basis = enumerate_basis(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b1 = dense::random_hermitian(&mut rng, 2);
        let b2 = &b1 * c(0.3, 0.0) + CMat::identity(2, 2) * c(0.0, 0.5);
        let spin = SpinSystem::new(dense::random_hermitian(&mut rng, 2), vec![b1, b2]).unwrap();
        let fs: Vec<FormFactorVector> = (0..2)
            .map(|_| {
                grid.vector((0..2).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
                    .unwrap()
            })
            .collect();
        let (h, _) = assemble_renormalized_hamiltonian(&spin, &fs, &grid, &basis).unwrap();
        assert!(h.hermitian);
    }
}
