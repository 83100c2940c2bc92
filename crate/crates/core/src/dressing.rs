//! Dressing transformation `T = e^B` with `B = −Σ_j B_j ⊗ a*(f_j/ω)`, the
//! dressed annihilation operators `â_ℓ = a_ℓ + Σ_j B_j ⟨ê_ℓ, ω⁻¹ f_j⟩` and the
//! shifted second quantization `dΓ̂(ξ) = Σ_ℓ ξ_ℓ â_ℓ* â_ℓ`.
//!
//! On the truncated space `B` raises the boson number by one and is therefore
//! nilpotent, so `e^{±B}` are finite sums and need no approximation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dense::{self, c, CMat};
use crate::error::{Error, Result};
use crate::fock::{check_modes, FockBasis, FockOperator, StateVector};
use crate::gsb::{fock_identity, SpinSystem};
use crate::model::{FormFactorVector, ModeGrid};
use crate::sparse::{kron_sum, CsrMatrix};

/// Relative truncation tail above which dressed-vector operations refuse to run.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;

/// Threshold for the series versus closed-form cross-check.
pub const CLOSED_FORM_TOL: f64 = 1e-10;

/// Highest truncation for which the permanent form of the closed form is used.
pub const LITERAL_MAX_SECTOR: usize = 8;

/// ε values probed by [`particle_decay_profile`].
pub const DECAY_EPSILONS: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

#[derive(Debug, Clone)]
pub struct DressingGenerator {
    pub operator: FockOperator,
    /// `N · max_j ‖B_j‖ ‖ω⁻¹ f_j‖`.
    pub coupling_norm: f64,
    spin: SpinSystem,
    /// `coeffs[j][ℓ] = ⟨ê_ℓ, ω⁻¹ f_j⟩ = √w_ℓ f_{jℓ} / ω_ℓ`.
    coeffs: Vec<Vec<Complex64>>,
    n_max: usize,
}

fn check_couplings(spin: &SpinSystem, f: &[FormFactorVector], grid: &ModeGrid) -> Result<()> {
    if f.len() != spin.n_couplings() {
        return Err(Error::DimensionMismatch(format!("{} form factors for {} couplings", f.len(), spin.n_couplings())));
    }
    f.iter().try_for_each(|v| grid.check(v))
}

/// `⟨ê_ℓ, ω⁻¹ f_j⟩` for all `j, ℓ`.
pub fn mode_couplings(f: &[FormFactorVector], grid: &ModeGrid) -> Result<Vec<Vec<Complex64>>> {
    f.iter()
        .map(|fj| {
            let s = grid.omega_times(fj, -1.0)?;
            grid.mode_coefficients(&s)
        })
        .collect()
}

/// `M_ℓ = Σ_j ⟨ê_ℓ, ω⁻¹ f_j⟩ B_j`.
fn mode_matrix(spin: &SpinSystem, coeffs: &[Vec<Complex64>], l: usize) -> CMat {
    let d = spin.dim();
    let mut m = CMat::zeros(d, d);
    for (j, bj) in spin.couplings().iter().enumerate() {
        m += bj * coeffs[j][l];
    }
    m
}

pub fn dressing_generator(
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<DressingGenerator> {
    if !spin.is_commuting() {
        return Err(Error::NonCommutingCouplings { deviation: spin.commutator_defect() });
    }
    check_modes(grid, basis)?;
    check_couplings(spin, f, grid)?;
    let coeffs = mode_couplings(f, grid)?;
    let creators: Vec<CsrMatrix<Complex64>> =
        coeffs.iter().map(|cj| basis.creation_matrix(cj)).collect::<Result<_>>()?;
    let neg: Vec<CMat> = spin.couplings().iter().map(|b| -b).collect();
    let terms: Vec<(&DMatrix<Complex64>, &CsrMatrix<Complex64>)> = neg.iter().zip(&creators).collect();
    let op = kron_sum(&terms, basis.dim(), basis.dim());
    let mut max_term = 0.0f64;
    for (j, fj) in f.iter().enumerate() {
        max_term = max_term.max(spin.coupling_norms()[j] * grid.omega_norm(fj, -1.0)?);
    }
    Ok(DressingGenerator {
        operator: FockOperator::new(op, basis, spin.dim())?,
        coupling_norm: spin.n_couplings() as f64 * max_term,
        spin: spin.clone(),
        coeffs,
        n_max: basis.n_max(),
    })
}

impl DressingGenerator {
    pub fn spin(&self) -> &SpinSystem {
        &self.spin
    }

    pub fn mode_coefficients(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    /// `e^{sB} ψ = Σ_n (sB)^n ψ / n!`, exact on the truncated space.
    pub fn exp_apply(&self, psi: &StateVector, s: f64) -> Result<StateVector> {
        let mut term = psi.clone();
        let mut acc = psi.clone();
        for n in 1..=self.n_max {
            term = self.operator.apply(&term)?;
            for x in &mut term.coefficients {
                *x *= s / n as f64;
            }
            if term.norm() == 0.0 {
                break;
            }
            for (a, t) in acc.coefficients.iter_mut().zip(&term.coefficients) {
                *a += t;
            }
        }
        Ok(acc)
    }

    /// Bound on `‖(T(v⊗Ω))^{(m)}‖ / ‖v‖`, namely `κ^m / √m!`.
    pub fn sector_bound(&self, m: usize) -> f64 {
        self.coupling_norm.powi(m as i32) / factorial(m).sqrt()
    }

    /// Relative norm of the sectors above `n_max`, bounded by
    /// `(Σ_{m>n_max} κ^{2m}/m!)^{1/2}`.
    pub fn tail_bound(&self) -> f64 {
        series_tail(self.coupling_norm, self.n_max, |_| 1.0)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `(Σ_{m>start} κ^{2m}/m! · weight(m))^{1/2}`, summed until negligible.
fn series_tail(kappa: f64, start: usize, weight: impl Fn(usize) -> f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut m = start + 1;
    let mut log_term = 2.0 * m as f64 * kappa.ln() - ln_factorial(m);
    loop {
        let t = (log_term).exp() * weight(m);
        acc += t;
        if (t <= 1e-30 * acc && m > start + 5) || m > start + 2000 {
            break;
        }
        m += 1;
        log_term += 2.0 * kappa.ln() - (m as f64).ln();
    }
    acc.sqrt()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

#[derive(Debug, Clone)]
pub struct DressedVacuum {
    pub state: StateVector,
    pub v: Vec<Complex64>,
    pub sector_norms: Vec<f64>,
    /// Largest series versus closed-form deviation over all sectors.
    pub closed_form_deviation: f64,
    /// Whether the closed form was evaluated through the permanent expansion.
    pub literal_closed_form: bool,
    /// Upper bound on the norm lost above the truncation, relative to `‖T(v⊗Ω)‖`.
    pub tail_fraction: f64,
}

/// `T(v⊗Ω)` by the finite exponential series, cross-checked against the
/// sector-wise closed form.
pub fn dressed_vacuum(gen: &DressingGenerator, v: &[Complex64], basis: &FockBasis) -> Result<DressedVacuum> {
    if v.len() != gen.spin.dim() {
        return Err(Error::DimensionMismatch(format!("spin vector of length {} for D = {}", v.len(), gen.spin.dim())));
    }
    if v.iter().all(|x| x.norm_sqr() == 0.0) {
        return Err(Error::InvalidArgument("spin vector must be nonzero".into()));
    }
    let vac = StateVector::spin_vacuum(v, basis);
    let state = gen.exp_apply(&vac, 1.0)?;
    // Ryser costs 2^m m² per sequence, so the permanent route is kept to small sectors.
    let literal = basis.n_max() <= LITERAL_MAX_SECTOR
        && (gen.spin.n_couplings() as f64).powi(basis.n_max() as i32) * basis.dim() as f64 <= 2e5;
    let closed = if literal { closed_form_literal(gen, v, basis)? } else { closed_form_product(gen, v, basis)? };
    let dev = state.coefficients.iter().zip(&closed.coefficients).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let scale = state.norm().max(1.0);
    if dev > CLOSED_FORM_TOL * scale {
        return Err(Error::ClosedFormMismatch { deviation: dev });
    }
    let vnorm = crate::krylov::norm(v);
    let sector_norms = state.sector_norms(basis);
    let tail_fraction = gen.tail_bound() * vnorm / state.norm();
    Ok(DressedVacuum {
        state,
        v: v.to_vec(),
        sector_norms,
        closed_form_deviation: dev,
        literal_closed_form: literal,
        tail_fraction,
    })
}

/// Closed form through `e^B = Π_ℓ e^{−M_ℓ ⊗ a_ℓ*}`: the coefficient of the
/// occupation state `n` is `(−1)^m / √(Π n_ℓ!) · Π_ℓ M_ℓ^{n_ℓ} v`.
pub fn closed_form_product(gen: &DressingGenerator, v: &[Complex64], basis: &FockBasis) -> Result<StateVector> {
    let d = gen.spin.dim();
    let mats: Vec<CMat> = (0..basis.n_modes()).map(|l| mode_matrix(&gen.spin, &gen.coeffs, l)).collect();
    let v0 = nalgebra::DVector::from_column_slice(v);
    let mut out = StateVector::zeros(basis, d);
    for s in 0..basis.dim() {
        let occ = basis.state(s);
        let mut w = v0.clone();
        let mut denom = 1.0;
        let mut m = 0;
        for (l, &n) in occ.iter().enumerate() {
            for _ in 0..n {
                w = &mats[l] * w;
            }
            denom *= factorial(n as usize);
            m += n as usize;
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for a in 0..d {
            out.coefficients[a * basis.dim() + s] = w[a] * (sign / denom.sqrt());
        }
    }
    Ok(out)
}

/// Closed form read off literally: sector `m` is
/// `S_m (−1)^m/√m! Σ_{j₁…j_m} (B_{j₁}…B_{j_m} v) ⊗ (ω⁻¹f_{j₁} ⊗ … ⊗ ω⁻¹f_{j_m})`,
/// projected onto occupation states through permanents.
pub fn closed_form_literal(gen: &DressingGenerator, v: &[Complex64], basis: &FockBasis) -> Result<StateVector> {
    let d = gen.spin.dim();
    let n = gen.spin.n_couplings();
    let bs = gen.spin.couplings();
    let v0 = nalgebra::DVector::from_column_slice(v);
    let mut out = StateVector::zeros(basis, d);
    for t in 0..=basis.n_max() {
        // All index sequences J of length t with their B_J v.
        let mut seqs: Vec<(Vec<usize>, nalgebra::DVector<Complex64>)> = vec![(Vec::new(), v0.clone())];
        for _ in 0..t {
            let mut next = Vec::with_capacity(seqs.len() * n);
            for (seq, w) in &seqs {
                for (j, bj) in bs.iter().enumerate() {
                    // Prepending keeps B_{j₁}…B_{j_m} v in written order.
                    let mut s2 = Vec::with_capacity(seq.len() + 1);
                    s2.push(j);
                    s2.extend_from_slice(seq);
                    next.push((s2, bj * w));
                }
            }
            seqs = next;
        }
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        for s in basis.sector(t) {
            let occ = basis.state(s);
            let modes: Vec<usize> =
                occ.iter().enumerate().flat_map(|(l, &k)| std::iter::repeat_n(l, k as usize)).collect();
            let occ_fact: f64 = occ.iter().map(|&k| factorial(k as usize)).product();
            let mut acc = nalgebra::DVector::<Complex64>::zeros(d);
            for (seq, w) in &seqs {
                let a = CMat::from_fn(t, t, |r, col| gen.coeffs[seq[r]][modes[col]]);
                acc += w * permanent(&a);
            }
            let pref = sign / (factorial(t) * occ_fact.sqrt());
            for a in 0..d {
                out.coefficients[a * basis.dim() + s] = acc[a] * pref;
            }
        }
    }
    Ok(out)
}

/// Ryser's formula.
pub fn permanent(a: &CMat) -> Complex64 {
    let n = a.nrows();
    if n == 0 {
        return c(1.0, 0.0);
    }
    let mut total = c(0.0, 0.0);
    for mask in 1u64..(1u64 << n) {
        let mut prod = c(1.0, 0.0);
        for r in 0..n {
            let mut row = c(0.0, 0.0);
            for col in 0..n {
                if mask >> col & 1 == 1 {
                    row += a[(r, col)];
                }
            }
            prod *= row;
        }
        let sign = if (n - mask.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
        total += prod * sign;
    }
    total
}

/// Orthonormal mode vector `ê_ℓ = e_ℓ / √w_ℓ` as a grid function.
pub fn mode_vector(grid: &ModeGrid, l: usize) -> FormFactorVector {
    let mut g = grid.zero_vector();
    g.values[l] = c(1.0 / grid.weights()[l].sqrt(), 0.0);
    g
}

/// `â(g) = 1 ⊗ a(g) + Σ_j ⟨g, ω⁻¹ f_j⟩ B_j ⊗ 1`.
pub fn dressed_annihilation(
    g: &FormFactorVector,
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<FockOperator> {
    check_modes(grid, basis)?;
    check_couplings(spin, f, grid)?;
    let gc = grid.mode_coefficients(g)?;
    let coeffs = mode_couplings(f, grid)?;
    let shift = (0..spin.n_couplings()).fold(CMat::zeros(spin.dim(), spin.dim()), |acc, j| {
        let ip: Complex64 = gc.iter().zip(&coeffs[j]).map(|(a, b)| a.conj() * b).sum();
        acc + &spin.couplings()[j] * ip
    });
    dressed_annihilation_raw(&gc, &shift, spin.dim(), basis)
}

fn dressed_annihilation_raw(gc: &[Complex64], shift: &CMat, d: usize, basis: &FockBasis) -> Result<FockOperator> {
    let a = basis.creation_matrix(gc)?.adjoint();
    let id_s = CMat::identity(d, d);
    let id_f = fock_identity(basis);
    let m = kron_sum(&[(&id_s, &a), (shift, &id_f)], basis.dim(), basis.dim());
    FockOperator::new(m, basis, d)
}

/// `â_ℓ = â(ê_ℓ)`.
pub fn dressed_annihilation_mode(
    l: usize,
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<FockOperator> {
    if l >= grid.len() {
        return Err(Error::InvalidArgument(format!("mode {l} out of range")));
    }
    dressed_annihilation(&mode_vector(grid, l), spin, f, grid, basis)
}

/// `Ψ = a*_{ℓ₁} … a*_{ℓ_k} T(v⊗Ω)`, refused when the truncation loses more than
/// `tail_tol` of the norm.
pub fn dressed_test_vector(
    gen: &DressingGenerator,
    v: &[Complex64],
    modes: &[usize],
    basis: &FockBasis,
    tail_tol: f64,
) -> Result<StateVector> {
    let dv = dressed_vacuum(gen, v, basis)?;
    let k = modes.len();
    if k > basis.n_max() {
        return Err(Error::TruncationTail { fraction: 1.0, tolerance: tail_tol });
    }
    // Sectors that the creators push past the edge are lost.
    let lost: f64 = dv.sector_norms[basis.n_max() + 1 - k..].iter().map(|x| x * x).sum::<f64>().sqrt();
    let fraction = lost / dv.state.norm() + dv.tail_fraction;
    if fraction > tail_tol {
        return Err(Error::TruncationTail { fraction, tolerance: tail_tol });
    }
    let d = gen.spin.dim();
    let id = CMat::identity(d, d);
    let mut psi = dv.state;
    for &l in modes {
        if l >= basis.n_modes() {
            return Err(Error::InvalidArgument(format!("mode {l} out of range")));
        }
        let ad = crate::fock::mode_creation(l, basis);
        let op = FockOperator::new(kron_sum(&[(&id, &ad)], basis.dim(), basis.dim()), basis, d)?;
        psi = op.apply(&psi)?;
    }
    Ok(psi)
}

/// `dΓ̂(ξ) = dΓ(ξ) + Σ_j (B_j ⊗ a*(ξf_j/ω) + B_j* ⊗ a(ξf_j/ω)) + Σ_{jj'} B_j*B_j' ⟨f_j/ω, ξ f_j'/ω⟩`,
/// which is `Σ_ℓ ξ_ℓ â_ℓ* â_ℓ` expanded.
pub fn dressed_second_quantization(
    xi: &[f64],
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<FockOperator> {
    check_modes(grid, basis)?;
    check_couplings(spin, f, grid)?;
    if xi.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} values for {} modes", xi.len(), grid.len())));
    }
    let d = spin.dim();
    let coeffs = mode_couplings(f, grid)?;
    let diag: Vec<Complex64> = basis.second_quantization_diag(xi)?.into_iter().map(|x| c(x, 0.0)).collect();
    let dgamma = CsrMatrix::from_diagonal(&diag);
    let id_s = CMat::identity(d, d);
    let id_f = fock_identity(basis);
    let mut constant = CMat::zeros(d, d);
    for j in 0..spin.n_couplings() {
        for jp in 0..spin.n_couplings() {
            let ip: Complex64 = (0..grid.len()).map(|l| coeffs[j][l].conj() * xi[l] * coeffs[jp][l]).sum();
            constant += spin.couplings()[j].adjoint() * &spin.couplings()[jp] * ip;
        }
    }
    let mut creators = Vec::new();
    for cj in &coeffs {
        let xc: Vec<Complex64> = cj.iter().zip(xi).map(|(a, x)| a * x).collect();
        let ad = basis.creation_matrix(&xc)?;
        let a = ad.adjoint();
        creators.push((ad, a));
    }
    let b_adj: Vec<CMat> = spin.couplings().iter().map(|b| b.adjoint()).collect();
    let mut terms: Vec<(&DMatrix<Complex64>, &CsrMatrix<Complex64>)> = vec![(&id_s, &dgamma), (&constant, &id_f)];
    for (j, (ad, a)) in creators.iter().enumerate() {
        terms.push((&spin.couplings()[j], ad));
        terms.push((&b_adj[j], a));
    }
    FockOperator::new(kron_sum(&terms, basis.dim(), basis.dim()), basis, d)?.certified_hermitian()
}

/// `Σ_{ℓ,ℓ'} ⟨u_ℓ, ξ u_ℓ'⟩ â(u_ℓ)* â(u_ℓ')` for the orthonormal basis
/// `u_ℓ = Σ_i U_{iℓ} ê_i`, formed from explicit products.
pub fn dressed_second_quantization_in_basis(
    xi: &[f64],
    u: &CMat,
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<FockOperator> {
    check_modes(grid, basis)?;
    check_couplings(spin, f, grid)?;
    let m = grid.len();
    if u.nrows() != m || u.ncols() != m || xi.len() != m {
        return Err(Error::DimensionMismatch("rotation must be M x M".into()));
    }
    let d = spin.dim();
    let coeffs = mode_couplings(f, grid)?;
    let mut hats = Vec::with_capacity(m);
    for l in 0..m {
        let gc: Vec<Complex64> = (0..m).map(|i| u[(i, l)]).collect();
        let shift = (0..spin.n_couplings()).fold(CMat::zeros(d, d), |acc, j| {
            let ip: Complex64 = gc.iter().zip(&coeffs[j]).map(|(a, b)| a.conj() * b).sum();
            acc + &spin.couplings()[j] * ip
        });
        hats.push(dressed_annihilation_raw(&gc, &shift, d, basis)?.matrix);
    }
    let mut out = CsrMatrix::zeros(d * basis.dim(), d * basis.dim());
    for l in 0..m {
        let adj = hats[l].adjoint();
        for lp in 0..m {
            let w: Complex64 = (0..m).map(|i| u[(i, l)].conj() * xi[i] * u[(i, lp)]).sum();
            if w.norm() < 1e-15 {
                continue;
            }
            out = out.lin_comb(c(1.0, 0.0), &adj.matmul(&hats[lp])?, w)?;
        }
    }
    FockOperator::new(out, basis, d)
}

/// `(dΓ̂(ω) + K) Ψ`, refused when Ψ reaches the truncation edge.
pub fn renormalized_action(
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
    psi: &StateVector,
    tail_tol: f64,
) -> Result<StateVector> {
    let top = crate::krylov::norm(&psi.sector(basis, basis.n_max()));
    let total = psi.norm();
    if total > 0.0 && top / total > tail_tol {
        return Err(Error::TruncationTail { fraction: top / total, tolerance: tail_tol });
    }
    let h = dressed_second_quantization(grid.omega(), spin, f, grid, basis)?;
    let k = kron_sum(&[(spin.k(), &fock_identity(basis))], basis.dim(), basis.dim());
    let full = FockOperator::new(h.matrix.add(&k)?, basis, spin.dim())?;
    full.apply(psi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    /// `‖(N+1)^{1/2} … (N+n)^{1/2} T(v⊗Ω)‖` for `n = 0..=n_up_to`.
    pub profile: Vec<f64>,
    /// `(ε, C_ε)` with `C_ε = max_n profile_n / (n!)^{(1+ε)/2}`.
    pub constants: Vec<(f64, f64)>,
    /// Least ε whose constant is at most `1e3`.
    pub least_epsilon: Option<f64>,
    pub tail_fraction: f64,
}

pub const DECAY_CONSTANT_CAP: f64 = 1e3;

/// Particle-number decay of the dressed vacuum.
pub fn particle_decay_profile(
    gen: &DressingGenerator,
    v: &[Complex64],
    n_up_to: usize,
    basis: &FockBasis,
    tail_tol: f64,
) -> Result<DecayProfile> {
    if n_up_to > basis.n_max() {
        return Err(Error::InvalidArgument(format!("n_up_to {n_up_to} exceeds n_max {}", basis.n_max())));
    }
    let dv = dressed_vacuum(gen, v, basis)?;
    let vnorm = crate::krylov::norm(v);
    // Sector m contributes ‖ψ_m‖² (m+1)…(m+n).
    let rising = |m: usize, n: usize| (1..=n).map(|k| (m + k) as f64).product::<f64>();
    let profile: Vec<f64> = (0..=n_up_to)
        .map(|n| dv.sector_norms.iter().enumerate().map(|(m, s)| s * s * rising(m, n)).sum::<f64>().sqrt())
        .collect();
    // Unseen sectors are bounded by κ^m/√m! ‖v‖.
    let tail = series_tail(gen.coupling_norm, basis.n_max(), |m| rising(m, n_up_to)) * vnorm;
    let tail_fraction = tail / profile[n_up_to];
    if tail_fraction > tail_tol {
        return Err(Error::TruncationTail { fraction: tail_fraction, tolerance: tail_tol });
    }
    let constants: Vec<(f64, f64)> = DECAY_EPSILONS
        .iter()
        .map(|&eps| {
            let cst =
                profile.iter().enumerate().map(|(n, p)| p / factorial(n).powf((1.0 + eps) / 2.0)).fold(0.0, f64::max);
            (eps, cst)
        })
        .collect();
    let least_epsilon = constants.iter().find(|(_, cst)| *cst <= DECAY_CONSTANT_CAP).map(|(e, _)| *e);
    Ok(DecayProfile { profile, constants, least_epsilon, tail_fraction })
}

/// `max` deviation of `[â_ℓ, â_ℓ'*]` from
/// `δ_{ℓℓ'} + Σ_{jj'} [B_j, B_j'*] ⟨ê_ℓ, ω⁻¹f_j⟩ ⟨ω⁻¹f_j', ê_ℓ'⟩` below the edge.
pub fn dressed_ccr_deviation(
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<f64> {
    let d = spin.dim();
    let coeffs = mode_couplings(f, grid)?;
    let hats: Vec<CsrMatrix<Complex64>> = (0..grid.len())
        .map(|l| dressed_annihilation_mode(l, spin, f, grid, basis).map(|o| o.matrix))
        .collect::<Result<_>>()?;
    let mask = basis.sub_truncation_mask(d);
    let id_f = fock_identity(basis);
    let mut worst = 0.0f64;
    for l in 0..grid.len() {
        for lp in 0..grid.len() {
            let comm = hats[l].commutator(&hats[lp].adjoint())?;
            let mut expected = CMat::zeros(d, d);
            if l == lp {
                expected += CMat::identity(d, d);
            }
            for j in 0..spin.n_couplings() {
                for jp in 0..spin.n_couplings() {
                    let bj = &spin.couplings()[j];
                    let bjp = spin.couplings()[jp].adjoint();
                    expected += (bj * &bjp - &bjp * bj) * (coeffs[j][l] * coeffs[jp][lp].conj());
                }
            }
            let e = kron_sum(&[(&expected, &id_f)], basis.dim(), basis.dim());
            worst = worst.max(comm.sub(&e)?.max_abs_on(&mask));
        }
    }
    Ok(worst)
}

/// `max_ℓ ‖â_ℓ T(v⊗Ω)‖` restricted to sectors below the edge, and on the full
/// space (where only the top sector can leak).
pub fn vacuum_annihilation(
    gen: &DressingGenerator,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
    v: &[Complex64],
) -> Result<(f64, f64)> {
    let dv = dressed_vacuum(gen, v, basis)?;
    let mask = basis.sub_truncation_mask(gen.spin.dim());
    let (mut sub, mut full) = (0.0f64, 0.0f64);
    for l in 0..grid.len() {
        let a = dressed_annihilation_mode(l, &gen.spin, f, grid, basis)?;
        let out = a.apply(&dv.state)?;
        sub = sub.max(out.masked_norm(&mask));
        full = full.max(out.norm());
    }
    Ok((sub, full))
}

/// Worst ratio `‖â(gχ_S)Ψ‖ / (‖(g/ω)χ_S‖ ‖dΓ̂(ω²χ_S)^{1/2}Ψ‖)` over random
/// `Ψ` supported below the edge; the conversion bound says it is at most 1.
pub fn ahat_conversion_ratio(
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
    g: &FormFactorVector,
    chi: &[f64],
    samples: usize,
    rng: &mut impl rand::Rng,
) -> Result<f64> {
    let gs = g.masked(chi);
    let a = dressed_annihilation(&gs, spin, f, grid, basis)?;
    let xi: Vec<f64> = grid.omega().iter().zip(chi).map(|(o, x)| o * o * x).collect();
    let dg = dressed_second_quantization(&xi, spin, f, grid, basis)?;
    let bound = grid.omega_norm(&gs, -1.0)?;
    let low = basis.sub_truncation_mask(spin.dim());
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut psi = StateVector::zeros(basis, spin.dim());
        for (x, &m) in psi.coefficients.iter_mut().zip(&low) {
            if m {
                *x = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        let lhs = a.apply(&psi)?.norm();
        let q = psi.inner(&dg.apply(&psi)?).re.max(0.0).sqrt();
        if lhs > 0.0 {
            worst = worst.max(lhs / (bound * q));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBound {
    /// `χ_S` as a 0/1 mask over the modes.
    pub chi: Vec<f64>,
    /// `N² max_j (‖B_j‖ ‖(f_j/ω)χ_S‖)²`, at most `ε/8`.
    pub delta: f64,
    pub epsilon: f64,
    /// Smallest eigenvalue of `dΓ̂(ωχ_S)² − (1−ε) dΓ̂(ω²χ_S)` below the edge.
    pub min_eig: f64,
}

/// `δ` of the tail set of modes with index `≥ start`.
fn tail_delta(spin: &SpinSystem, f: &[FormFactorVector], grid: &ModeGrid, start: usize) -> Result<f64> {
    let chi: Vec<f64> = (0..grid.len()).map(|l| if l >= start { 1.0 } else { 0.0 }).collect();
    let n = spin.n_couplings() as f64;
    let mut worst = 0.0f64;
    for (fj, bj) in f.iter().zip(spin.coupling_norms()) {
        worst = worst.max(bj * grid.omega_norm(&fj.masked(&chi), -1.0)?);
    }
    Ok(n * n * worst * worst)
}

/// Largest high-frequency tail set with `δ ≤ ε/8`, and the smallest
/// sub-truncation eigenvalue of the quadratic form difference on it.
pub fn quadratic_lower_bound(
    spin: &SpinSystem,
    f: &[FormFactorVector],
    grid: &ModeGrid,
    basis: &FockBasis,
    epsilon: f64,
) -> Result<QuadraticBound> {
    if !(0.0..1.0).contains(&epsilon) || epsilon == 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside (0, 1)")));
    }
    check_couplings(spin, f, grid)?;
    // Nodes increase with ω, so tails are suffixes.
    let mut start = grid.len();
    while start > 0 && tail_delta(spin, f, grid, start - 1)? <= epsilon / 8.0 {
        start -= 1;
    }
    if start == grid.len() {
        return Err(Error::InvalidArgument("no nonempty tail set satisfies the smallness condition".into()));
    }
    let chi: Vec<f64> = (0..grid.len()).map(|l| if l >= start { 1.0 } else { 0.0 }).collect();
    let delta = tail_delta(spin, f, grid, start)?;
    let x1: Vec<f64> = grid.omega().iter().zip(&chi).map(|(o, x)| o * x).collect();
    let x2: Vec<f64> = grid.omega().iter().zip(&chi).map(|(o, x)| o * o * x).collect();
    let a = dressed_second_quantization(&x1, spin, f, grid, basis)?.matrix.to_dense();
    let b = dressed_second_quantization(&x2, spin, f, grid, basis)?.matrix.to_dense();
    let m = &a * &a - b * c(1.0 - epsilon, 0.0);
    let mask = basis.sub_truncation_mask(spin.dim());
    Ok(QuadraticBound { chi, delta, epsilon, min_eig: min_eig_on(&m, &mask) })
}

/// Smallest eigenvalue of a hermitian dense matrix restricted to a mask.
pub fn min_eig_on(m: &CMat, mask: &[bool]) -> f64 {
    dense::min_eigenvalue(&dense::restrict(m, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::enumerate_basis;
    use crate::gsb::{pauli_x, pauli_z};
    use crate::model::GridScheme;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn commuting_pair(rng: &mut ChaCha8Rng) -> SpinSystem {
        // Commuting but non-normal: B₂ is a polynomial in B₁.
        let b1 = dense::random_matrix(rng, 2, 2);
        let b2 = &b1 * &b1 * c(0.2, 0.1) + &b1 * c(-0.3, 0.0);
        SpinSystem::new(dense::random_hermitian(rng, 2), vec![b1, b2]).unwrap()
    }

    fn random_ff(rng: &mut ChaCha8Rng, grid: &ModeGrid, scale: f64) -> FormFactorVector {
        grid.vector(
            (0..grid.len()).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_coupling_is_trivial() {
        let grid = ModeGrid::build(1.0, 4.0, 2, GridScheme::Uniform).unwrap();
        let basis = enumerate_basis(2, 3).unwrap();
        let spin = SpinSystem::standard_spin_boson(1.0, 1.0).unwrap();
        let gen = dressing_generator(&spin, &[grid.zero_vector()], &grid, &basis).unwrap();
        assert_eq!(gen.operator.matrix.nnz(), 0);
        let v = [c(0.6, 0.0), c(0.0, 0.8)];
        let dv = dressed_vacuum(&gen, &v, &basis).unwrap();
        assert_eq!(dv.state, StateVector::spin_vacuum(&v, &basis));
        assert_eq!(dv.sector_norms, vec![1.0, 0.0, 0.0, 0.0]);
        let one = dressed_test_vector(&gen, &v, &[1], &basis, DEFAULT_TAIL_TOLERANCE).unwrap();
        let mut expected = StateVector::zeros(&basis, 2);
        let idx = basis.index_of(&[0, 1]).unwrap();
        expected.coefficients[idx] = v[0];
        expected.coefficients[basis.dim() + idx] = v[1];
        assert_eq!(one, expected);
        let p = particle_decay_profile(&gen, &v, 3, &basis, DEFAULT_TAIL_TOLERANCE).unwrap();
        for (n, x) in p.profile.iter().enumerate() {
            assert!((x - factorial(n).sqrt()).abs() < 1e-12);
        }
        let a = dressed_annihilation(&mode_vector(&grid, 0), &spin, &[grid.zero_vector()], &grid, &basis).unwrap();
        let plain = crate::fock::mode_creation(0, &basis).adjoint();
        assert_eq!(a.matrix, plain.kron_left(&CMat::identity(2, 2)));
        let action =
            renormalized_action(&spin, &[grid.zero_vector()], &grid, &basis, &dv.state, DEFAULT_TAIL_TOLERANCE)
                .unwrap();
        let kv = spin.k() * nalgebra::DVector::from_column_slice(&v);
        assert_eq!(action, StateVector::spin_vacuum(kv.as_slice(), &basis));
    }

    #[test]
    fn zero_coupling_test_vectors_orthonormal() {
        let grid = ModeGrid::build(1.0, 4.0, 3, GridScheme::Uniform).unwrap();
        let basis = enumerate_basis(3, 2).unwrap();
        let spin = SpinSystem::standard_spin_boson(1.0, 1.0).unwrap();
        let gen = dressing_generator(&spin, &[grid.zero_vector()], &grid, &basis).unwrap();
        let v = [c(1.0, 0.0), c(1.0, 1.0)];
        for i in 0..3 {
            for j in 0..3 {
                let a = dressed_test_vector(&gen, &v, &[i], &basis, 1e-8).unwrap();
                let b = dressed_test_vector(&gen, &v, &[j], &basis, 1e-8).unwrap();
                let expected = if i == j { 3.0 } else { 0.0 };
                assert!((a.inner(&b) - c(expected, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn single_mode_generator_and_sectors() {
        let grid = ModeGrid::single(2.0, 1.0).unwrap();
        let basis = enumerate_basis(1, 4).unwrap();
        let b1 = CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(-0.5, 0.2)]);
        let spin = SpinSystem::new(pauli_z(), vec![b1.clone()]).unwrap();
        let cc = c(0.7, -0.4);
        let f = grid.vector(vec![cc]).unwrap();
        let gen = dressing_generator(&spin, &[f], &grid, &basis).unwrap();
        let v = [c(0.3, 0.1), c(-0.2, 0.9)];
        let vv = nalgebra::DVector::from_column_slice(&v);
        let once = gen.operator.apply(&StateVector::spin_vacuum(&v, &basis)).unwrap();
        let expected1 = &b1 * &vv * (-cc / 2.0);
        for a in 0..2 {
            assert!((once.coefficients[a * basis.dim() + 1] - expected1[a]).norm() < 1e-15);
        }
        let dv = dressed_vacuum(&gen, &v, &basis).unwrap();
        assert!(dv.literal_closed_form);
        let expected2 = &b1 * &b1 * &vv * ((cc / 2.0) * (cc / 2.0) / 2f64.sqrt());
        for a in 0..2 {
            assert!((dv.state.coefficients[a * basis.dim() + 1] - expected1[a]).norm() < 1e-15);
            assert!((dv.state.coefficients[a * basis.dim() + 2] - expected2[a]).norm() < 1e-15);
        }
        let vn = crate::krylov::norm(&v);
        for (m, s) in dv.sector_norms.iter().enumerate() {
            assert!(*s <= gen.sector_bound(m) * vn * (1.0 + 1e-12));
        }
    }

    #[test]
    fn generator_raises_number_by_one() {
        let grid = ModeGrid::build(1.0, 5.0, 3, GridScheme::Log).unwrap();
        let basis = enumerate_basis(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spin = commuting_pair(&mut rng);
        let f = vec![random_ff(&mut rng, &grid, 0.5), random_ff(&mut rng, &grid, 0.5)];
        let gen = dressing_generator(&spin, &f, &grid, &basis).unwrap();
        let dim = basis.dim();
        for (r, col, _) in gen.operator.matrix.triplets() {
            assert_eq!(basis.total(r % dim), basis.total(col % dim) + 1);
        }
    }

    #[test]
    fn noncommuting_rejected() {
        let grid = ModeGrid::single(1.0, 1.0).unwrap();
        let basis = enumerate_basis(1, 2).unwrap();
        let spin = SpinSystem::new_unchecked_commutation(pauli_z(), vec![pauli_x(), pauli_z()]).unwrap();
        let f = vec![grid.real_vector(&[1.0]).unwrap(), grid.real_vector(&[1.0]).unwrap()];
        assert!(matches!(dressing_generator(&spin, &f, &grid, &basis), Err(Error::NonCommutingCouplings { .. })));
    }

    #[test]
    fn closed_forms_agree_with_series() {
        let grid = ModeGrid::build(1.0, 3.0, 2, GridScheme::Uniform).unwrap();
        let basis = enumerate_basis(2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spin = commuting_pair(&mut rng);
        let f = vec![random_ff(&mut rng, &grid, 0.8), random_ff(&mut rng, &grid, 0.8)];
        let gen = dressing_generator(&spin, &f, &grid, &basis).unwrap();
        let v = [c(0.5, -0.5), c(0.1, 0.7)];
        let series = gen.exp_apply(&StateVector::spin_vacuum(&v, &basis), 1.0).unwrap();
        let lit = closed_form_literal(&gen, &v, &basis).unwrap();
        let prod = closed_form_product(&gen, &v, &basis).unwrap();
        for ((a, b), p) in series.coefficients.iter().zip(&lit.coefficients).zip(&prod.coefficients) {
            assert!((a - b).norm() < 1e-12);
            assert!((a - p).norm() < 1e-12);
        }
    }

    #[test]
    fn permanent_examples() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        assert_eq!(permanent(&a), c(10.0, 0.0));
        let ones = CMat::from_element(4, 4, c(1.0, 0.0));
        assert_eq!(permanent(&ones), c(24.0, 0.0));
    }

    #[test]
    fn vacuum_constant_term_and_annihilation() {
        let grid = ModeGrid::build(1.0, 4.0, 2, GridScheme::Uniform).unwrap();
        let basis = enumerate_basis(2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spin = commuting_pair(&mut rng);
        let f = vec![random_ff(&mut rng, &grid, 0.4), random_ff(&mut rng, &grid, 0.4)];
        let v = [c(1.0, 0.0), c(0.0, -1.0)];
        // â_ℓ (v⊗Ω) = Σ_j ⟨ê_ℓ, ω⁻¹ f_j⟩ (B_j v) ⊗ Ω
        let coeffs = mode_couplings(&f, &grid).unwrap();
        let vv = nalgebra::DVector::from_column_slice(&v);
        for l in 0..2 {
            let a = dressed_annihilation_mode(l, &spin, &f, &grid, &basis).unwrap();
            let out = a.apply(&StateVector::spin_vacuum(&v, &basis)).unwrap();
            let expected =
                (0..2).fold(nalgebra::DVector::zeros(2), |acc, j| acc + &spin.couplings()[j] * &vv * coeffs[j][l]);
            let dev = out.sub(&StateVector::spin_vacuum(expected.as_slice(), &basis));
            assert!(dev.norm() < 1e-14);
        }
        let gen = dressing_generator(&spin, &f, &grid, &basis).unwrap();
        let (sub, full) = vacuum_annihilation(&gen, &f, &grid, &basis, &v).unwrap();
        assert!(sub <= 1e-10, "{sub}");
        assert!(full > sub);
    }

    #[test]
    fn inverse_dressing() {
        let grid = ModeGrid::build(1.0, 3.0, 2, GridScheme::Uniform).unwrap();
        let basis = enumerate_basis(2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spin = commuting_pair(&mut rng);
        let f = vec![random_ff(&mut rng, &grid, 1.0), random_ff(&mut rng, &grid, 1.0)];
        let gen = dressing_generator(&spin, &f, &grid, &basis).unwrap();
        let mut psi = StateVector::zeros(&basis, 2);
        for x in &mut psi.coefficients {
            *x = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let back = gen.exp_apply(&gen.exp_apply(&psi, 1.0).unwrap(), -1.0).unwrap();
        // Nilpotency makes both series exact: e^{-B} e^{B} = 1 on the whole truncation.
        let dev = back.sub(&psi).coefficients.iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(dev <= 1e-10);
    }

    #[test]
    fn dressed_ccr() {
        let grid = ModeGrid::build(1.0, 3.0, 2, GridScheme::Uniform).unwrap();
        let basis = enumerate_basis(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spin = commuting_pair(&mut rng);
        let f = vec![random_ff(&mut rng, &grid, 1.0), random_ff(&mut rng, &grid, 1.0)];
        assert!(dressed_ccr_deviation(&spin, &f, &grid, &basis).unwrap() <= 1e-10);
        // Normal commuting couplings reproduce the undressed relations.
        let normal = SpinSystem::new(pauli_z(), vec![pauli_z(), CMat::identity(2, 2)]).unwrap();
        assert!(dressed_ccr_deviation(&normal, &f, &grid, &basis).unwrap() <= 1e-12);
    }

    #[test]
    fn direct_and_product_second_quantization_agree() {
        let grid = ModeGrid::build(1.0, 6.0, 3, GridScheme::Log).unwrap();
        let basis = enumerate_basis(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let spin = commuting_pair(&mut rng);
        let f = vec![random_ff(&mut rng, &grid, 1.0), random_ff(&mut rng, &grid, 1.0)];
        let xi = [0.3, 1.7, 2.2];
        let direct = dressed_second_quantization(&xi, &spin, &f, &grid, &basis).unwrap();
        let prod = dressed_second_quantization_in_basis(&xi, &CMat::identity(3, 3), &spin, &f, &grid, &basis).unwrap();
        assert!(direct.matrix.sub(&prod.matrix).unwrap().max_abs() < 1e-12);
        let zero =
            dressed_second_quantization(&xi, &spin, &[grid.zero_vector(), grid.zero_vector()], &grid, &basis).unwrap();
        let plain = crate::fock::second_quantization(&xi, &basis).unwrap();
        assert_eq!(zero.matrix, plain.matrix.kron_left(&CMat::identity(2, 2)));
    }

    #[test]
    fn basis_independence() {
        let grid = ModeGrid::build(1.0, 6.0, 3, GridScheme::Log).unwrap();
        let basis = enumerate_basis(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let spin = commuting_pair(&mut rng);
        let f = vec![random_ff(&mut rng, &grid, 1.0), random_ff(&mut rng, &grid, 1.0)];
        let u = dense::random_unitary(&mut rng, 3);
        let canonical = dressed_second_quantization(grid.omega(), &spin, &f, &grid, &basis).unwrap();
        let rotated = dressed_second_quantization_in_basis(grid.omega(), &u, &spin, &f, &grid, &basis).unwrap();
        assert!(canonical.matrix.sub(&rotated.matrix).unwrap().max_abs() <= 1e-9);
    }

    #[test]
    fn renormalized_hamiltonian_matches_completed_square() {
        let grid = ModeGrid::build(1.0, 6.0, 3, GridScheme::Log).unwrap();
        let basis = enumerate_basis(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let spin = commuting_pair(&mut rng);
        let f = vec![random_ff(&mut rng, &grid, 1.0), random_ff(&mut rng, &grid, 1.0)];
        let dg = dressed_second_quantization(grid.omega(), &spin, &f, &grid, &basis).unwrap();
        let (h, _) = crate::gsb::assemble_renormalized_hamiltonian(&spin, &f, &grid, &basis).unwrap();
        let k = kron_sum(&[(spin.k(), &fock_identity(&basis))], basis.dim(), basis.dim());
        assert!(dg.matrix.add(&k).unwrap().sub(&h.matrix).unwrap().max_abs() < 1e-12);
        // Positivity below the edge.
        let mask = basis.sub_truncation_mask(2);
        assert!(min_eig_on(&dg.matrix.to_dense(), &mask) >= -1e-8);
    }

    #[test]
    fn decay_profile_small_coupling() {
        let grid = ModeGrid::build(1.0, 3.0, 2, GridScheme::Uniform).unwrap();
        let basis = enumerate_basis(2, 24).unwrap();
        let spin = SpinSystem::standard_spin_boson(1.0, 1.0).unwrap();
        let raw = grid.real_vector(&[1.0, 1.0]).unwrap();
        let s = 0.5 / grid.omega_norm(&raw, -1.0).unwrap();
        let f = vec![raw.scaled(c(s, 0.0))];
        let gen = dressing_generator(&spin, &f, &grid, &basis).unwrap();
        assert!((gen.coupling_norm - 0.5).abs() < 1e-12);
        let p = particle_decay_profile(&gen, &[c(1.0, 0.0), c(0.0, 0.0)], 8, &basis, 1e-8).unwrap();
        assert!(p.profile.windows(2).all(|w| w[1] >= w[0]));
        let (_, c055) = p.constants[0];
        assert!(c055 <= 1e3);
        assert_eq!(p.least_epsilon, Some(0.1));
    }

    #[test]
    fn tail_gate_refuses_tiny_truncation() {
        let grid = ModeGrid::single(1.0, 1.0).unwrap();
        let basis = enumerate_basis(1, 0).unwrap();
        let spin = SpinSystem::standard_spin_boson(1.0, 1.0).unwrap();
        let gen = dressing_generator(&spin, &[grid.real_vector(&[1.0]).unwrap()], &grid, &basis).unwrap();
        let v = [c(1.0, 0.0), c(0.0, 0.0)];
        assert!(matches!(dressed_test_vector(&gen, &v, &[], &basis, 1e-8), Err(Error::TruncationTail { .. })));
        assert!(matches!(particle_decay_profile(&gen, &v, 0, &basis, 1e-8), Err(Error::TruncationTail { .. })));
    }

    #[test]
    fn quadratic_bound_on_tail_set() {
        let grid = ModeGrid::build(1.0, 40.0, 4, GridScheme::Log).unwrap();
        let basis = enumerate_basis(4, 4).unwrap();
        let spin = SpinSystem::standard_spin_boson(1.0, 1.0).unwrap();
        let f = vec![grid.real_vector(&grid.omega().iter().map(|w| 0.3 * w.sqrt()).collect::<Vec<_>>()).unwrap()];
        let q = quadratic_lower_bound(&spin, &f, &grid, &basis, 0.5).unwrap();
        assert!(q.delta <= 0.5 / 8.0);
        assert!(q.chi.iter().sum::<f64>() >= 1.0);
        assert!(q.min_eig >= -1e-8, "{q:?}");
        assert!(quadratic_lower_bound(&spin, &f, &grid, &basis, 1.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn ahat_conversion_bound(seed in 0u64..10_000) {
            // ‖â(gχ_S)Ψ‖ ≤ ‖(g/ω)χ_S‖ ‖dΓ̂(ω²χ_S)^{1/2} Ψ‖
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = ModeGrid::build(1.0, 8.0, 3, GridScheme::Log).unwrap();
            let basis = enumerate_basis(3, 3).unwrap();
            let spin = commuting_pair(&mut rng);
            let f = vec![random_ff(&mut rng, &grid, 1.0), random_ff(&mut rng, &grid, 1.0)];
            let g = random_ff(&mut rng, &grid, 1.0);
            let chi: Vec<f64> = (0..3).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
            let r = ahat_conversion_ratio(&spin, &f, &grid, &basis, &g, &chi, 4, &mut rng).unwrap();
            prop_assert!(r <= 1.0 + 1e-10, "{}", r);
        }
    }
}
