//! Mode grids, form factors and the analytic UV classification.
//!
//! The measure space is `X = [m, E_max]` with `ω(k) = k`. A grid is a
//! quadrature rule on `X`, so every integral `∫ g dμ` becomes `Σ w_i g(k_i)`.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScheme {
    /// Midpoint rule on equal panels.
    Uniform,
    /// Geometric nodes with trapezoid weights.
    Log,
}

impl std::str::FromStr for GridScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "log" => Ok(Self::Log),
            other => Err(Error::InvalidArgument(format!("unknown grid scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    dispersion: Vec<f64>,
    mass: f64,
    id: u64,
}

impl ModeGrid {
    pub fn build(mass: f64, e_max: f64, n_modes: usize, scheme: GridScheme) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NonPositiveMass(mass));
        }
        if n_modes == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(e_max > mass) || !e_max.is_finite() {
            return Err(Error::InvalidInterval { mass, e_max });
        }
        let n = n_modes;
        let (nodes, weights) = match scheme {
            GridScheme::Uniform => {
                let h = (e_max - mass) / n as f64;
                ((0..n).map(|i| mass + (i as f64 + 0.5) * h).collect(), vec![h; n])
            }
            GridScheme::Log if n == 1 => (vec![(mass * e_max).sqrt()], vec![e_max - mass]),
            GridScheme::Log => {
                let ratio = e_max / mass;
                let mut x: Vec<f64> = (0..n).map(|i| mass * ratio.powf(i as f64 / (n - 1) as f64)).collect();
                x[0] = mass;
                x[n - 1] = e_max;
                let w = (0..n)
                    .map(|i| {
                        let lo = if i == 0 { x[0] } else { x[i - 1] };
                        let hi = if i == n - 1 { x[n - 1] } else { x[i + 1] };
                        0.5 * (hi - lo)
                    })
                    .collect();
                (x, w)
            }
        };
        Self::from_parts(nodes.clone(), weights, nodes, mass)
    }

    /// Arbitrary quadrature rule; validates every grid invariant.
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>, dispersion: Vec<f64>, mass: f64) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NonPositiveMass(mass));
        }
        if nodes.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if nodes.len() != weights.len() || nodes.len() != dispersion.len() {
            return Err(Error::DimensionMismatch("nodes, weights and dispersion differ in length".into()));
        }
        if nodes.windows(2).any(|p| !(p[1] > p[0])) || nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("grid nodes must be finite and strictly increasing".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
        }
        // Tiny slack for the rounding in geometric nodes.
        if dispersion.iter().any(|&w| !(w >= mass * (1.0 - 1e-12)) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("dispersion must be at least the mass {mass}")));
        }
        let id = fingerprint(&[&nodes, &weights, &dispersion, &[mass]]);
        Ok(Self { nodes, weights, dispersion, mass, id })
    }

    /// One mode at energy `omega` with weight `weight`.
    pub fn single(omega: f64, weight: f64) -> Result<Self> {
        Self::from_parts(vec![omega], vec![weight], vec![omega], omega)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn omega(&self) -> &[f64] {
        &self.dispersion
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn max_omega(&self) -> f64 {
        self.dispersion.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_omega(&self) -> f64 {
        self.dispersion.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Content hash identifying the grid in sampled vectors and reports.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn check(&self, f: &FormFactorVector) -> Result<()> {
        if f.grid_id != self.id || f.values.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "vector of length {} sampled on grid {:016x}, expected grid {:016x} with {} modes",
                f.values.len(),
                f.grid_id,
                self.id,
                self.len()
            )));
        }
        Ok(())
    }

    /// Wraps raw samples as a vector on this grid.
    pub fn vector(&self, values: Vec<Complex64>) -> Result<FormFactorVector> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch(format!("{} samples for {} modes", values.len(), self.len())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidFormFactor("non-finite sample".into()));
        }
        Ok(FormFactorVector { values, grid_id: self.id })
    }

    pub fn real_vector(&self, values: &[f64]) -> Result<FormFactorVector> {
        self.vector(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zero_vector(&self) -> FormFactorVector {
        FormFactorVector { values: vec![Complex64::new(0.0, 0.0); self.len()], grid_id: self.id }
    }

    /// Coefficients of `g` in the orthonormal mode basis `ê_i = e_i/√w_i`.
    pub fn mode_coefficients(&self, g: &FormFactorVector) -> Result<Vec<Complex64>> {
        self.check(g)?;
        Ok(g.values.iter().zip(&self.weights).map(|(v, w)| v * w.sqrt()).collect())
    }

    /// `⟨f, g⟩ = Σ w_i conj(f_i) g_i`.
    pub fn inner(&self, f: &FormFactorVector, g: &FormFactorVector) -> Result<Complex64> {
        weighted_inner_product(f, g, self)
    }

    /// `‖ω^p f‖`.
    pub fn omega_norm(&self, f: &FormFactorVector, p: f64) -> Result<f64> {
        self.check(f)?;
        Ok(f.values
            .iter()
            .zip(&self.weights)
            .zip(&self.dispersion)
            .map(|((v, w), om)| w * om.powf(2.0 * p) * v.norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    pub fn norm(&self, f: &FormFactorVector) -> Result<f64> {
        self.omega_norm(f, 0.0)
    }

    /// `ω^p f` pointwise.
    pub fn omega_times(&self, f: &FormFactorVector, p: f64) -> Result<FormFactorVector> {
        self.check(f)?;
        Ok(FormFactorVector {
            values: f.values.iter().zip(&self.dispersion).map(|(v, om)| v * om.powf(p)).collect(),
            grid_id: self.id,
        })
    }

    /// CSV with header `k,weight,omega,re_f,im_f`; `f = None` writes zeros.
    pub fn to_csv(&self, f: Option<&FormFactorVector>) -> Result<String> {
        if let Some(f) = f {
            self.check(f)?;
        }
        let mut out = String::from("k,weight,omega,re_f,im_f\n");
        for i in 0..self.len() {
            let v = f.map(|f| f.values[i]).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.nodes[i], self.weights[i], self.dispersion[i], v.re, v.im
            );
        }
        Ok(out)
    }
}

fn fingerprint(parts: &[&[f64]]) -> u64 {
    // FNV-1a over the raw bit patterns.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for x in part.iter() {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormFactorFamily {
    /// `J(E) = λ² E^s`
    PowerLaw { exponent: f64, scale: f64 },
    /// `J(E) = λ² E^s e^{-E/E_c}`
    OhmicExpCutoff { exponent: f64, scale: f64, e_cut: f64 },
    /// `J(E) = λ² E / (1 + log² E)`, the borderline of the second case.
    LogCritical { scale: f64 },
    /// Explicit samples on a grid. `compact_support` asserts that the
    /// underlying function vanishes beyond the grid.
    FiniteL2 { samples: Vec<Complex64>, compact_support: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormFactorSpec {
    pub family: FormFactorFamily,
    pub mass: f64,
    pub description: String,
}

impl FormFactorSpec {
    pub fn new(family: FormFactorFamily, mass: f64, description: impl Into<String>) -> Result<Self> {
        let spec = Self { family, mass, description: description.into() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn power_law(exponent: f64, scale: f64, mass: f64) -> Result<Self> {
        Self::new(FormFactorFamily::PowerLaw { exponent, scale }, mass, format!("power law E^{exponent}"))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::NonPositiveMass(self.mass));
        }
        let bad = |msg: &str| Err(Error::InvalidFormFactor(msg.to_string()));
        match &self.family {
            FormFactorFamily::PowerLaw { exponent, scale } => {
                if !exponent.is_finite() {
                    return bad("exponent must be finite");
                }
                if !(*scale > 0.0) {
                    return bad("scale must be positive");
                }
            }
            FormFactorFamily::OhmicExpCutoff { exponent, scale, e_cut } => {
                if !exponent.is_finite() {
                    return bad("exponent must be finite");
                }
                if !(*scale > 0.0) {
                    return bad("scale must be positive");
                }
                if !(*e_cut > 0.0) {
                    return bad("cutoff energy must be positive");
                }
            }
            FormFactorFamily::LogCritical { scale } => {
                if !(*scale > 0.0) {
                    return bad("scale must be positive");
                }
            }
            FormFactorFamily::FiniteL2 { samples, .. } => {
                if samples.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return bad("non-finite sample");
                }
            }
        }
        Ok(())
    }

    /// Spectral density `J(E) = |f(E)|²`; `None` for sampled families.
    pub fn spectral_density(&self, e: f64) -> Option<f64> {
        match &self.family {
            FormFactorFamily::PowerLaw { exponent, scale } => Some(scale * scale * e.powf(*exponent)),
            FormFactorFamily::OhmicExpCutoff { exponent, scale, e_cut } => {
                Some(scale * scale * e.powf(*exponent) * (-e / e_cut).exp())
            }
            FormFactorFamily::LogCritical { scale } => {
                let l = e.ln();
                Some(scale * scale * e / (1.0 + l * l))
            }
            FormFactorFamily::FiniteL2 { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UvClass {
    Case0L2,
    Case1,
    Case2,
    Case3,
}

impl std::fmt::Display for UvClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Case0L2 => "case0_l2",
            Self::Case1 => "case1",
            Self::Case2 => "case2",
            Self::Case3 => "case3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UvCase {
    pub case: UvClass,
    pub critical: bool,
}

/// Classifies from the analytic tail of `J`, never from samples.
///
/// For a tail `E^a` the integral `∫_m^∞ E^a dE` converges iff `a < -1`, so
/// `J ~ E^s` lands in case 0 for `s < -1`, case 1 for `s < 0`, case 2 for
/// `s < 1` and case 3 otherwise. Pure powers are never critical.
pub fn classify_uv_case(spec: &FormFactorSpec) -> Result<UvCase> {
    spec.validate()?;
    let from_exponent = |s: f64| {
        let case = if s < -1.0 {
            UvClass::Case0L2
        } else if s < 0.0 {
            UvClass::Case1
        } else if s < 1.0 {
            UvClass::Case2
        } else {
            UvClass::Case3
        };
        UvCase { case, critical: false }
    };
    match &spec.family {
        FormFactorFamily::PowerLaw { exponent, .. } => Ok(from_exponent(*exponent)),
        FormFactorFamily::OhmicExpCutoff { .. } => Ok(UvCase { case: UvClass::Case0L2, critical: false }),
        // ∫ dE / (E (1 + log² E)) converges, ∫ E^{ε-1} / (1 + log² E) does not.
        FormFactorFamily::LogCritical { .. } => Ok(UvCase { case: UvClass::Case2, critical: true }),
        FormFactorFamily::FiniteL2 { compact_support: true, .. } => {
            Ok(UvCase { case: UvClass::Case0L2, critical: false })
        }
        FormFactorFamily::FiniteL2 { compact_support: false, .. } => Err(Error::Unclassifiable),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormFactorVector {
    pub values: Vec<Complex64>,
    pub grid_id: u64,
}

impl FormFactorVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm_sqr() == 0.0)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { values: self.values.iter().map(|v| v * s).collect(), grid_id: self.grid_id }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid_id != other.grid_id || self.len() != other.len() {
            return Err(Error::GridMismatch("difference of vectors on different grids".into()));
        }
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(), grid_id: self.grid_id })
    }

    /// Pointwise product with a real per-mode mask or weight.
    pub fn masked(&self, mask: &[f64]) -> Self {
        Self { values: self.values.iter().zip(mask).map(|(v, m)| v * m).collect(), grid_id: self.grid_id }
    }
}

/// `f_i = √J(ω_i)` with zero phase, or the explicit samples.
pub fn sample_form_factor(spec: &FormFactorSpec, grid: &ModeGrid) -> Result<FormFactorVector> {
    spec.validate()?;
    match &spec.family {
        FormFactorFamily::FiniteL2 { samples, .. } => grid.vector(samples.clone()),
        _ => {
            let vals = grid
                .omega()
                .iter()
                .map(|&e| Complex64::new(spec.spectral_density(e).unwrap_or(0.0).sqrt(), 0.0))
                .collect();
            grid.vector(vals)
        }
    }
}

/// Sharp cutoffs `f_Λ = f · [ω ≤ Λ]`.
pub fn cutoff_family(f: &FormFactorVector, grid: &ModeGrid, cutoffs: &[f64]) -> Result<Vec<FormFactorVector>> {
    grid.check(f)?;
    if cutoffs.is_empty() {
        return Err(Error::EmptyCutoffList);
    }
    if cutoffs.iter().any(|&l| !(l >= grid.mass())) {
        return Err(Error::InvalidCutoff(format!("every cutoff must be at least the mass {}", grid.mass())));
    }
    if cutoffs.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidCutoff("cutoffs must be strictly increasing".into()));
    }
    Ok(cutoffs.iter().map(|&l| apply_cutoff(f, grid, l)).collect())
}

pub fn apply_cutoff(f: &FormFactorVector, grid: &ModeGrid, lambda: f64) -> FormFactorVector {
    let mask: Vec<f64> = grid.omega().iter().map(|&om| if om <= lambda { 1.0 } else { 0.0 }).collect();
    f.masked(&mask)
}

/// `⟨f, g⟩ = Σ w_i conj(f_i) g_i`, antilinear in the first slot.
pub fn weighted_inner_product(f: &FormFactorVector, g: &FormFactorVector, grid: &ModeGrid) -> Result<Complex64> {
    grid.check(f)?;
    grid.check(g)?;
    Ok(f.values.iter().zip(&g.values).zip(grid.weights()).map(|((a, b), w)| a.conj() * b * w).sum())
}
