//! Weyl operators, fiber decomposition of permutation couplings and the
//! supercritical triviality sweep.
//!
//! When the single coupling `B` is unitary and permutes an eigenbasis
//! `v_1 … v_D` of `K`, the map `V = ⊕_n B^n ⊗ P_n` untwists the Hamiltonian into
//! fibers `F_k = Σ_n κ_{k;n} P_n + dΓ(ω) + a*(f) + a(f)` on Fock space alone,
//! with `κ_{k;n} = ⟨B^n v_k, K B^n v_k⟩` periodic in `n`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dense::{self, c, CMat};
use crate::error::{Error, Result};
use crate::fock::{check_modes, FockBasis, FockOperator};
use crate::gsb::{assemble_cutoff_hamiltonian, SpinSystem};
use crate::model::{FormFactorVector, ModeGrid};
use crate::sparse::CsrMatrix;

/// Tolerance for the eigenbasis-permutation assumption.
pub const ASSUMPTION_TOL: f64 = 1e-10;

/// Largest Fock dimension for which dense Weyl matrices are formed.
pub const DENSE_CAP: usize = 4000;

fn dense_guard(basis: &FockBasis) -> Result<()> {
    if basis.dim() > DENSE_CAP {
        return Err(Error::DimensionOverflow { dim: basis.dim() as u128, cap: DENSE_CAP });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct WeylOperator {
    pub s: FormFactorVector,
    pub alpha: f64,
    /// `U = e^{iα}`, acting as `Γ(U) = U^𝒩`.
    pub phase: Complex64,
    pub matrix: FockOperator,
}

/// Compressed generator `a*(s) − a(s)`.
fn generator(s: &FormFactorVector, grid: &ModeGrid, basis: &FockBasis) -> Result<CsrMatrix<Complex64>> {
    check_modes(grid, basis)?;
    let ad = basis.creation_matrix(&grid.mode_coefficients(s)?)?;
    ad.sub(&ad.adjoint())
}

fn gamma_diag(alpha: f64, basis: &FockBasis) -> Vec<Complex64> {
    (0..basis.dim()).map(|i| Complex64::from_polar(1.0, alpha * basis.total(i) as f64)).collect()
}

fn weyl_dense(s: &FormFactorVector, alpha: f64, grid: &ModeGrid, basis: &FockBasis) -> Result<CMat> {
    dense_guard(basis)?;
    let g = generator(s, grid, basis)?.to_dense();
    let mut w = dense::expm_antihermitian(&g);
    for (j, u) in gamma_diag(alpha, basis).into_iter().enumerate() {
        for i in 0..w.nrows() {
            w[(i, j)] *= u;
        }
    }
    Ok(w)
}

/// `W(s, e^{iα}) = e^{a*(s) − a(s)} Γ(e^{iα})` from the compressed generator,
/// exactly unitary on the truncated space.
pub fn weyl_operator(s: &FormFactorVector, alpha: f64, grid: &ModeGrid, basis: &FockBasis) -> Result<WeylOperator> {
    let w = weyl_dense(s, alpha, grid, basis)?;
    Ok(WeylOperator {
        s: s.clone(),
        alpha,
        phase: Complex64::from_polar(1.0, alpha),
        matrix: FockOperator::new(CsrMatrix::from_dense(&w, 0.0), basis, 1)?,
    })
}

impl WeylOperator {
    pub fn unitarity_defect(&self) -> f64 {
        let w = self.matrix.matrix.to_dense();
        let n = w.nrows();
        dense::max_abs(&(w.adjoint() * &w - CMat::identity(n, n)))
    }
}

/// `⟨m|e^{αa* − ᾱa}|n⟩` for `m, n ≤ n_max`, via
/// `D_{m+1,n} = (√n D_{m,n−1} + α D_{m,n}) / √(m+1)`.
pub fn displacement_elements(alpha: Complex64, n_max: usize) -> CMat {
    let n = n_max + 1;
    let mut d = CMat::zeros(n, n);
    let pref = (-alpha.norm_sqr() / 2.0).exp();
    // ⟨0|D|k⟩ = e^{−|α|²/2} (−ᾱ)^k / √k!
    let mut v = c(pref, 0.0);
    for k in 0..n {
        d[(0, k)] = v;
        v *= -alpha.conj() / ((k + 1) as f64).sqrt();
    }
    for m in 0..n - 1 {
        for k in 0..n {
            let lower = if k > 0 { d[(m, k - 1)] * (k as f64).sqrt() } else { c(0.0, 0.0) };
            d[(m + 1, k)] = (lower + alpha * d[(m, k)]) / ((m + 1) as f64).sqrt();
        }
    }
    d
}

/// `P W(s, e^{iα}) P` from the exact matrix elements of the infinite-dimensional
/// Weyl operator; not unitary, but free of truncation artifacts in each entry.
pub fn exact_weyl_matrix(s: &FormFactorVector, alpha: f64, grid: &ModeGrid, basis: &FockBasis) -> Result<CMat> {
    check_modes(grid, basis)?;
    dense_guard(basis)?;
    let coeffs = grid.mode_coefficients(s)?;
    let tables: Vec<CMat> = coeffs.iter().map(|&a| displacement_elements(a, basis.n_max())).collect();
    let gamma = gamma_diag(alpha, basis);
    let n = basis.dim();
    Ok(CMat::from_fn(n, n, |i, j| {
        let (si, sj) = (basis.state(i), basis.state(j));
        let mut v = gamma[j];
        for (l, t) in tables.iter().enumerate() {
            v *= t[(si[l] as usize, sj[l] as usize)];
            if v.norm_sqr() == 0.0 {
                break;
            }
        }
        v
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockResidual {
    pub full: f64,
    /// Restricted to sectors `≤ n_max / 2`, away from the truncation edge.
    pub lower_half: f64,
}

fn block_residual(m: &CMat, basis: &FockBasis) -> BlockResidual {
    let mask = basis.sector_mask(1, basis.n_max() / 2);
    let mut out = BlockResidual { full: 0.0, lower_half: 0.0 };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)].norm();
            out.full = out.full.max(v);
            if mask[i] && mask[j] {
                out.lower_half = out.lower_half.max(v);
            }
        }
    }
    out
}

/// `W(s₁,U₁)W(s₂,U₂) − e^{−i Im⟨s₁,U₁s₂⟩} W(s₁ + U₁s₂, U₁U₂)` in max norm.
pub fn weyl_relation_residual(
    s1: &FormFactorVector,
    alpha1: f64,
    s2: &FormFactorVector,
    alpha2: f64,
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<BlockResidual> {
    let u1 = Complex64::from_polar(1.0, alpha1);
    let w1 = weyl_dense(s1, alpha1, grid, basis)?;
    let w2 = weyl_dense(s2, alpha2, grid, basis)?;
    let u1s2 = s2.scaled(u1);
    let phase = Complex64::from_polar(1.0, -grid.inner(s1, &u1s2)?.im);
    let w12 = weyl_dense(&add(s1, &u1s2)?, alpha1 + alpha2, grid, basis)?;
    Ok(block_residual(&(w1 * w2 - w12 * phase), basis))
}

fn add(a: &FormFactorVector, b: &FormFactorVector) -> Result<FormFactorVector> {
    a.sub(&b.scaled(c(-1.0, 0.0)))
}

#[derive(Debug, Clone)]
pub struct AssumptionCertificate {
    /// `‖U*U − 1‖_max` for `U = B / c`.
    pub unitarity_defect: f64,
    /// `c` with `B*B = c² · 1`.
    pub coupling_scale: f64,
    /// Largest deviation of `|⟨v_i, U v_k⟩|` from a permutation pattern.
    pub permutation_defect: f64,
    /// `U v_k ∝ v_{permutation[k]}`.
    pub permutation: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors `v_k`.
    pub eigenbasis: CMat,
    pub holds: bool,
}

impl AssumptionCertificate {
    pub fn summary(&self) -> String {
        let perm: Vec<String> = self.permutation.iter().map(|p| (p + 1).to_string()).collect();
        let ev: Vec<String> = self.eigenvalues.iter().map(|e| format!("{e:.17e}")).collect();
        format!(
            "assumption = {}\ncoupling_scale = {:.17e}\nunitarity_defect = {:.3e}\npermutation_defect = {:.3e}\npermutation = {}\neigenvalues = {}\n",
            if self.holds { "holds" } else { "violated" },
            self.coupling_scale,
            self.unitarity_defect,
            self.permutation_defect,
            perm.join(" "),
            ev.join(" ")
        )
    }
}

fn is_diagonal(m: &CMat) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].norm() == 0.0))
}

/// Check that the single coupling is a multiple of a unitary that permutes an
/// eigenbasis of `K`. A diagonal `K` is tried in the standard basis first, so
/// degenerate spectra keep the basis the caller wrote down.
pub fn assumption_check(spin: &SpinSystem) -> Result<AssumptionCertificate> {
    if spin.n_couplings() != 1 {
        return Err(Error::AssumptionViolated(format!(
            "fiber decomposition needs exactly one coupling, got {}",
            spin.n_couplings()
        )));
    }
    let d = spin.dim();
    let b = &spin.couplings()[0];
    let btb = b.adjoint() * b;
    let scale = btb[(0, 0)].re.max(0.0).sqrt();
    if scale == 0.0 {
        return Err(Error::AssumptionViolated("coupling vanishes".into()));
    }
    let u = b / c(scale, 0.0);
    let unitarity_defect = dense::max_abs(&(u.adjoint() * &u - CMat::identity(d, d)));
    let candidates: Vec<(Vec<f64>, CMat)> = {
        let mut v = Vec::new();
        if is_diagonal(spin.k()) {
            v.push(((0..d).map(|i| spin.k()[(i, i)].re).collect(), CMat::identity(d, d)));
        }
        v.push(dense::hermitian_eigen(spin.k()));
        v
    };
    let mut best: Option<AssumptionCertificate> = None;
    for (eigenvalues, basis) in candidates {
        let m = basis.adjoint() * &u * &basis;
        let mut permutation = Vec::with_capacity(d);
        let mut defect = 0.0f64;
        for k in 0..d {
            let (imax, _) =
                (0..d).fold((0, -1.0), |acc, i| if m[(i, k)].norm() > acc.1 { (i, m[(i, k)].norm()) } else { acc });
            permutation.push(imax);
            for i in 0..d {
                let target = if i == imax { 1.0 } else { 0.0 };
                defect = defect.max((m[(i, k)].norm() - target).abs());
            }
        }
        let mut seen = permutation.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != d {
            defect = defect.max(1.0);
        }
        let holds = unitarity_defect <= ASSUMPTION_TOL && defect <= ASSUMPTION_TOL;
        let cert = AssumptionCertificate {
            unitarity_defect,
            coupling_scale: scale,
            permutation_defect: defect,
            permutation,
            eigenvalues,
            eigenbasis: basis,
            holds,
        };
        let better = match &best {
            None => true,
            Some(b) => !b.holds && (cert.holds || cert.permutation_defect < b.permutation_defect),
        };
        if better {
            best = Some(cert);
        }
    }
    Ok(best.expect("at least one candidate basis"))
}

#[derive(Debug, Clone)]
pub struct FiberSet {
    /// `κ_{k;n}` for `n = 0..=n_max`.
    pub kappa: Vec<Vec<f64>>,
    /// Period of each fiber's sequence (the length of the cycle through `k`).
    pub periods: Vec<usize>,
    /// `η_{k;m}` for `m = 0..periods[k]`.
    pub eta: Vec<Vec<Complex64>>,
    pub fibers: Vec<FockOperator>,
    pub certificate: AssumptionCertificate,
    /// `f · c`, the form factor seen by every fiber.
    pub fiber_form_factor: FormFactorVector,
    /// `‖W* H_Λ W − ⊕_k F_k‖_max` for the untwisting `W = V (U_K ⊗ 1)`.
    pub block_residual: f64,
    /// `‖W (⊕_k F_k) W* − H_Λ‖_max`.
    pub reconstruction_residual: f64,
}

impl FiberSet {
    /// Common period of all fibers.
    pub fn period(&self) -> usize {
        self.periods.iter().fold(1, |acc, &p| lcm(acc, p))
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Columns `U^n v_k` for `n = 0..count`.
fn orbit(u: &CMat, v: nalgebra::DVector<Complex64>, count: usize) -> Vec<nalgebra::DVector<Complex64>> {
    let mut out = Vec::with_capacity(count);
    let mut cur = v;
    for _ in 0..count {
        let next = u * &cur;
        out.push(cur);
        cur = next;
    }
    out
}

/// `κ_{k;n}` from the spin data alone, `n = 0..count`.
fn kappa_sequences(spin: &SpinSystem, cert: &AssumptionCertificate, count: usize) -> Vec<Vec<f64>> {
    let u = &spin.couplings()[0] / c(cert.coupling_scale, 0.0);
    (0..spin.dim())
        .map(|k| {
            orbit(&u, cert.eigenbasis.column(k).into_owned(), count)
                .iter()
                .map(|w| w.dotc(&(spin.k() * w)).re)
                .collect()
        })
        .collect()
}

fn minimal_period(seq: &[f64], max_period: usize) -> usize {
    (1..=max_period)
        .find(|&p| {
            (0..seq.len().saturating_sub(p)).all(|n| (seq[n + p] - seq[n]).abs() <= 1e-10 * (1.0 + seq[n].abs()))
        })
        .unwrap_or(max_period)
}

/// `F = Σ_n κ_n P_n + dΓ(ω) + a*(f) + a(f)` on Fock space.
pub fn fiber_operator(kappa: &[f64], f: &FormFactorVector, grid: &ModeGrid, basis: &FockBasis) -> Result<FockOperator> {
    check_modes(grid, basis)?;
    if kappa.len() != basis.n_max() + 1 {
        return Err(Error::DimensionMismatch(format!("{} sector energies for n_max {}", kappa.len(), basis.n_max())));
    }
    let dg = basis.second_quantization_diag(grid.omega())?;
    let diag: Vec<Complex64> = (0..basis.dim()).map(|i| c(dg[i] + kappa[basis.total(i)], 0.0)).collect();
    let ad = basis.creation_matrix(&grid.mode_coefficients(f)?)?;
    let m = CsrMatrix::from_diagonal(&diag).add(&ad)?.add(&ad.adjoint())?;
    FockOperator::new(m, basis, 1)?.certified_hermitian()
}

/// Untwist `H_Λ` into Fock-space fibers.
pub fn fiber_decompose(
    spin: &SpinSystem,
    f: &FormFactorVector,
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<FiberSet> {
    let cert = assumption_check(spin)?;
    if !cert.holds {
        return Err(Error::AssumptionViolated(format!(
            "coupling does not permute an eigenbasis of K (unitarity defect {:.3e}, permutation defect {:.3e})",
            cert.unitarity_defect, cert.permutation_defect
        )));
    }
    let d = spin.dim();
    let n_max = basis.n_max();
    let extended = kappa_sequences(spin, &cert, (n_max + 1).max(2 * d + 1));
    let periods: Vec<usize> = extended.iter().map(|s| minimal_period(s, d)).collect();
    let kappa: Vec<Vec<f64>> = extended.iter().map(|s| s[..=n_max].to_vec()).collect();
    let eta: Vec<Vec<Complex64>> = extended.iter().zip(&periods).map(|(s, &p)| kappa_dft(&s[..p])).collect();
    let ff = f.scaled(c(cert.coupling_scale, 0.0));
    let fibers: Vec<FockOperator> = kappa.iter().map(|k| fiber_operator(k, &ff, grid, basis)).collect::<Result<_>>()?;

    // W[(a, s), (k, s)] = (U^{n_s} v_k)_a
    let u = &spin.couplings()[0] / c(cert.coupling_scale, 0.0);
    let orbits: Vec<Vec<nalgebra::DVector<Complex64>>> =
        (0..d).map(|k| orbit(&u, cert.eigenbasis.column(k).into_owned(), n_max + 1)).collect();
    let dim = basis.dim();
    let mut trip = Vec::with_capacity(d * d * dim);
    for (k, ork) in orbits.iter().enumerate() {
        for s in 0..dim {
            let w = &ork[basis.total(s)];
            for a in 0..d {
                if w[a].norm_sqr() != 0.0 {
                    trip.push((a * dim + s, k * dim + s, w[a]));
                }
            }
        }
    }
    let w = CsrMatrix::from_triplets(d * dim, d * dim, &trip);
    let h = assemble_cutoff_hamiltonian(spin, std::slice::from_ref(f), grid, basis)?;
    let mut block_trip = Vec::new();
    for (k, fib) in fibers.iter().enumerate() {
        for (r, col, v) in fib.matrix.triplets() {
            block_trip.push((k * dim + r, k * dim + col, v));
        }
    }
    let block = CsrMatrix::from_triplets(d * dim, d * dim, &block_trip);
    let untwisted = w.adjoint().matmul(&h.matrix)?.matmul(&w)?;
    let block_residual = untwisted.sub(&block)?.max_abs();
    let rebuilt = w.matmul(&block)?.matmul(&w.adjoint())?;
    let reconstruction_residual = rebuilt.sub(&h.matrix)?.max_abs();
    Ok(FiberSet {
        kappa,
        periods,
        eta,
        fibers,
        certificate: cert,
        fiber_form_factor: ff,
        block_residual,
        reconstruction_residual,
    })
}

/// `η_m = (1/M) Σ_{n<M} κ_n e^{−2πimn/M}`.
pub fn kappa_dft(kappa: &[f64]) -> Vec<Complex64> {
    let m = kappa.len();
    (0..m)
        .map(|j| {
            kappa
                .iter()
                .enumerate()
                .map(|(n, &k)| Complex64::from_polar(k, -2.0 * PI * (j * n) as f64 / m as f64))
                .sum::<Complex64>()
                / m as f64
        })
        .collect()
}

/// `κ_n = Σ_m η_m e^{2πimn/M}`.
pub fn inverse_kappa_dft(eta: &[Complex64]) -> Vec<Complex64> {
    let m = eta.len();
    (0..m)
        .map(|n| {
            eta.iter()
                .enumerate()
                .map(|(j, &e)| e * Complex64::from_polar(1.0, 2.0 * PI * (j * n) as f64 / m as f64))
                .sum()
        })
        .collect()
}

/// `η_{k;0} + Σ_{m≥1} η_{k;m} e^{i Im⟨s, U_m s⟩} W(s(1 − U_m), U_m) + dΓ(ω)`
/// with `U_m = e^{2πim/M}`, using `weyl` to realize each Weyl operator.
fn closed_form_with(
    eta: &[Complex64],
    s: &FormFactorVector,
    grid: &ModeGrid,
    basis: &FockBasis,
    weyl: impl Fn(&FormFactorVector, f64) -> Result<CMat>,
) -> Result<CMat> {
    let n = basis.dim();
    let m_len = eta.len();
    let dg = basis.second_quantization_diag(grid.omega())?;
    let mut out = CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, dg.iter().map(|&x| c(x, 0.0) + eta[0])));
    for (m, &em) in eta.iter().enumerate().skip(1) {
        if em.norm() == 0.0 {
            continue;
        }
        let alpha = 2.0 * PI * m as f64 / m_len as f64;
        let u = Complex64::from_polar(1.0, alpha);
        let phase = Complex64::from_polar(1.0, grid.inner(s, &s.scaled(u))?.im);
        let shifted = s.sub(&s.scaled(u))?;
        out += weyl(&shifted, alpha)? * (em * phase);
    }
    Ok(out)
}

/// Closed form realized with the exact Weyl matrix elements.
pub fn conjugated_fiber_exact(
    eta: &[Complex64],
    f: &FormFactorVector,
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<CMat> {
    let s = grid.omega_times(f, -1.0)?;
    closed_form_with(eta, &s, grid, basis, |g, a| exact_weyl_matrix(g, a, grid, basis))
}

#[derive(Debug, Clone)]
pub struct ConjugatedFiber {
    /// `W(s,1) (F − E_Λ) W(s,1)*` with the unitary compressed Weyl operator.
    pub conjugated: FockOperator,
    /// The closed form with the same compressed Weyl operators.
    pub closed_form: FockOperator,
    /// `E_Λ = −‖ω^{−1/2} f‖²`.
    pub self_energy: f64,
    pub mismatch: BlockResidual,
}

/// Conjugate a fiber with `W(f/ω, 1)` and compare with the closed form.
pub fn conjugated_fiber(
    fiber: &FockOperator,
    eta: &[Complex64],
    f: &FormFactorVector,
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<ConjugatedFiber> {
    dense_guard(basis)?;
    if eta.is_empty() {
        return Err(Error::InvalidArgument("empty DFT coefficients".into()));
    }
    let s = grid.omega_times(f, -1.0)?;
    let e = -grid.omega_norm(f, -0.5)?.powi(2);
    let w = weyl_dense(&s, 0.0, grid, basis)?;
    let n = basis.dim();
    let fm = fiber.matrix.to_dense() - CMat::identity(n, n) * c(e, 0.0);
    let conj = &w * fm * w.adjoint();
    let closed = closed_form_with(eta, &s, grid, basis, |g, a| weyl_dense(g, a, grid, basis))?;
    let mismatch = block_residual(&(&conj - &closed), basis);
    Ok(ConjugatedFiber {
        conjugated: FockOperator::new(CsrMatrix::from_dense(&conj, 0.0), basis, 1)?,
        closed_form: FockOperator::new(CsrMatrix::from_dense(&closed, 0.0), basis, 1)?,
        self_energy: e,
        mismatch,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrivialityReport {
    /// Ladder labels, one per point.
    pub labels: Vec<f64>,
    /// `‖ω⁻¹ f_Λ‖` of the fiber form factor.
    pub norms: Vec<f64>,
    /// `distances[i][k]` for ladder point `i` and fiber `k`.
    pub distances: Vec<Vec<f64>>,
    /// Same distances with the truncated unitary conjugation in place of the
    /// closed form; kept as a diagnostic of truncation artifacts.
    pub truncated_distances: Vec<Vec<f64>>,
    pub eta0: Vec<f64>,
    pub z: f64,
    /// Every fiber decreases strictly over the tail of the ladder.
    pub trend_ok: bool,
}

impl TrivialityReport {
    /// Norm of the block-diagonal difference, the largest fiber distance.
    pub fn aggregate(&self) -> Vec<f64> {
        self.distances.iter().map(|d| d.iter().cloned().fold(0.0, f64::max)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,norm_f_over_omega,fiber,k,distance_to_limit\n");
        let agg = self.aggregate();
        for i in 0..self.labels.len() {
            for (k, d) in self.distances[i].iter().enumerate() {
                s.push_str(&format!("{:.16e},{:.16e},fiber,{},{:.16e}\n", self.labels[i], self.norms[i], k + 1, d));
            }
            s.push_str(&format!("{:.16e},{:.16e},aggregate,0,{:.16e}\n", self.labels[i], self.norms[i], agg[i]));
        }
        s
    }
}

/// Number of trailing ladder points over which the decrease is asserted.
pub fn trend_window(len: usize) -> usize {
    len.div_ceil(2).max(len.min(3))
}

/// Strict decrease over the trailing window, with exact zeros allowed to repeat.
pub fn decreasing_tail(values: &[f64]) -> bool {
    let w = trend_window(values.len());
    values[values.len() - w..].windows(2).all(|p| p[1] < p[0] || (p[0] == 0.0 && p[1] == 0.0))
}

/// Distance of each conjugated fiber from its decoupled limit `η_{k;0} + dΓ(ω)`
/// along a ladder of growing form factors.
pub fn triviality_sweep(
    spin: &SpinSystem,
    ladder: &[(f64, FormFactorVector)],
    grid: &ModeGrid,
    basis: &FockBasis,
) -> Result<TrivialityReport> {
    if ladder.is_empty() {
        return Err(Error::EmptyCutoffList);
    }
    dense_guard(basis)?;
    let n = basis.dim();
    let mut labels = Vec::new();
    let mut norms = Vec::new();
    let mut distances = Vec::new();
    let mut truncated = Vec::new();
    let mut eta0 = Vec::new();
    let mut z = 0.0;
    for (i, (label, f)) in ladder.iter().enumerate() {
        let set = fiber_decompose(spin, f, grid, basis)?;
        if i == 0 {
            eta0 = set.eta.iter().map(|e| e[0].re).collect();
            // The conjugated fibers are bounded below by min κ, the limits by min η₀.
            let worst = set.kappa.iter().flatten().fold(0.0f64, |a, k| a.max(k.abs()));
            z = -10.0 - worst;
        }
        let ff = &set.fiber_form_factor;
        let dg = basis.second_quantization_diag(grid.omega())?;
        let mut row = Vec::new();
        let mut trow = Vec::new();
        for (k, eta) in set.eta.iter().enumerate() {
            let limit = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
                n,
                dg.iter().map(|&x| c(x + eta[0].re - z, 0.0)),
            ));
            let r_limit = dense::inverse(&limit)?;
            let shifted = |m: CMat| m - CMat::identity(n, n) * c(z, 0.0);
            let exact = conjugated_fiber_exact(eta, ff, grid, basis)?;
            row.push(dense::spectral_norm(&(dense::inverse(&shifted(exact))? - &r_limit)));
            let conj = conjugated_fiber(&set.fibers[k], eta, ff, grid, basis)?;
            trow.push(dense::spectral_norm(&(dense::inverse(&shifted(conj.conjugated.matrix.to_dense()))? - &r_limit)));
        }
        labels.push(*label);
        norms.push(grid.omega_norm(ff, -1.0)?);
        distances.push(row);
        truncated.push(trow);
    }
    let d = distances[0].len();
    let trend_ok = (0..d).all(|k| decreasing_tail(&distances.iter().map(|r| r[k]).collect::<Vec<_>>()));
    Ok(TrivialityReport { labels, norms, distances, truncated_distances: truncated, eta0, z, trend_ok })
}
