//! Experiment configuration: a TOML file validated into ready-to-use core
//! objects before any computation starts.

use std::path::Path;

use gsb_renorm_core::dense::{c, CMat};
use gsb_renorm_core::fock::DEFAULT_DIMENSION_CAP;
use gsb_renorm_core::gsb::spin_matrix_preset;
use gsb_renorm_core::model::{sample_form_factor, FormFactorFamily};
use gsb_renorm_core::{Complex64, FockBasis, FormFactorSpec, FormFactorVector, GridScheme, ModeGrid, SpinSystem};
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Kinematics,
    DressingChecks,
    Case2Convergence,
    Triviality,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Kinematics => "kinematics",
            Mode::DressingChecks => "dressing_checks",
            Mode::Case2Convergence => "case2_convergence",
            Mode::Triviality => "triviality",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub form_factors: Vec<FormFactorConfig>,
    pub spin: SpinConfig,
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub dressing: DressingConfig,
    #[serde(default)]
    pub triviality: TrivialityConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub mass: f64,
    pub e_max: f64,
    pub n_modes: usize,
    pub scheme: SchemeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeConfig {
    Uniform,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormFactorConfig {
    PowerLaw {
        exponent: f64,
        scale: f64,
    },
    OhmicExpCutoff {
        exponent: f64,
        scale: f64,
        e_cut: f64,
    },
    LogCritical {
        scale: f64,
    },
    FiniteL2 {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
        #[serde(default)]
        compact_support: bool,
    },
}

/// A spin matrix: a preset name understood by the core
/// (`pauli_x`, `ladder_plus`, `permutation(1,2,0)`, `diag(1,-1)`, …), the same
/// with a scale factor, or explicit real and imaginary rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixConfig {
    Named(String),
    Scaled {
        preset: String,
        scale: f64,
    },
    Literal {
        re: Vec<Vec<f64>>,
        #[serde(default)]
        im: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinConfig {
    pub k: MatrixConfig,
    pub couplings: Vec<MatrixConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub n_max: usize,
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub cutoffs: Vec<f64>,
    #[serde(default = "default_offset")]
    pub shift_offset: f64,
}

fn default_offset() -> f64 {
    10.0
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { cutoffs: Vec::new(), shift_offset: default_offset() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DressingConfig {
    /// Truncations for the top-sector leakage ladder.
    pub leakage_nmax: Vec<usize>,
    pub decay_up_to: usize,
    pub epsilon: f64,
    pub tail_tolerance: f64,
    pub conversion_samples: usize,
}

impl Default for DressingConfig {
    fn default() -> Self {
        Self {
            leakage_nmax: vec![4, 6, 8, 10],
            decay_up_to: 8,
            epsilon: 0.5,
            tail_tolerance: 1e-8,
            conversion_samples: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderKind {
    /// Rescale the form factor so that `‖ω⁻¹f‖` takes the listed values.
    Amplitude,
    /// Sharp cutoffs of the form factor at the sweep cutoffs.
    Cutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrivialityConfig {
    pub ladder: LadderKind,
    pub amplitudes: Vec<f64>,
    /// Truncations for the single-mode Weyl-relation ladder.
    pub weyl_nmax: Vec<usize>,
}

impl Default for TrivialityConfig {
    fn default() -> Self {
        Self { ladder: LadderKind::Amplitude, amplitudes: vec![1.0, 2.0, 4.0, 8.0], weyl_nmax: vec![8, 12, 16, 20] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
    pub n_modes: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.n_max {
            self.truncation.n_max = n;
        }
        if let Some(m) = o.n_modes {
            self.grid.n_modes = m;
        }
    }

    /// Canonical serialization; hashed into the manifest.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// A validated configuration with its core objects built.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub grid: ModeGrid,
    pub basis: FockBasis,
    pub spin: SpinSystem,
    pub specs: Vec<FormFactorSpec>,
    pub form_factors: Vec<FormFactorVector>,
}

fn invalid(msg: impl std::fmt::Display) -> RunError {
    RunError::Config(msg.to_string())
}

fn matrix(m: &MatrixConfig) -> Result<CMat, RunError> {
    match m {
        MatrixConfig::Named(name) => spin_matrix_preset(name).map_err(invalid),
        MatrixConfig::Scaled { preset, scale } => {
            if !scale.is_finite() {
                return Err(invalid(format!("non-finite scale for `{preset}`")));
            }
            Ok(spin_matrix_preset(preset).map_err(invalid)? * c(*scale, 0.0))
        }
        MatrixConfig::Literal { re, im } => {
            let d = re.len();
            if d == 0 || re.iter().any(|r| r.len() != d) {
                return Err(invalid("matrix literal must be square and nonempty"));
            }
            if !im.is_empty() && (im.len() != d || im.iter().any(|r| r.len() != d)) {
                return Err(invalid("imaginary part must match the real part"));
            }
            let m = CMat::from_fn(d, d, |i, j| c(re[i][j], if im.is_empty() { 0.0 } else { im[i][j] }));
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(invalid("matrix literal has non-finite entries"));
            }
            Ok(m)
        }
    }
}

fn family(f: &FormFactorConfig) -> Result<FormFactorFamily, RunError> {
    Ok(match f {
        FormFactorConfig::PowerLaw { exponent, scale } => {
            FormFactorFamily::PowerLaw { exponent: *exponent, scale: *scale }
        }
        FormFactorConfig::OhmicExpCutoff { exponent, scale, e_cut } => {
            FormFactorFamily::OhmicExpCutoff { exponent: *exponent, scale: *scale, e_cut: *e_cut }
        }
        FormFactorConfig::LogCritical { scale } => FormFactorFamily::LogCritical { scale: *scale },
        FormFactorConfig::FiniteL2 { re, im, compact_support } => {
            if !im.is_empty() && im.len() != re.len() {
                return Err(invalid("finite_l2 imaginary samples must match the real samples"));
            }
            let samples: Vec<Complex64> =
                re.iter().enumerate().map(|(i, &r)| c(r, im.get(i).copied().unwrap_or(0.0))).collect();
            FormFactorFamily::FiniteL2 { samples, compact_support: *compact_support }
        }
    })
}

fn positive_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite() && *x > 0.0) && v.windows(2).all(|w| w[1] > w[0])
}

/// Schema and consistency checks, then object construction. Nothing here
/// touches the output directory.
pub fn prepare(config: ExperimentConfig) -> Result<Prepared, RunError> {
    let g = &config.grid;
    let scheme = match g.scheme {
        SchemeConfig::Uniform => GridScheme::Uniform,
        SchemeConfig::Log => GridScheme::Log,
    };
    let grid = ModeGrid::build(g.mass, g.e_max, g.n_modes, scheme).map_err(invalid)?;
    let k = matrix(&config.spin.k)?;
    let couplings: Vec<CMat> = config.spin.couplings.iter().map(matrix).collect::<Result<_, _>>()?;
    let spin = SpinSystem::new_unchecked_commutation(k, couplings).map_err(invalid)?;
    if config.form_factors.len() != spin.n_couplings() {
        return Err(invalid(format!(
            "{} form factors for {} couplings",
            config.form_factors.len(),
            spin.n_couplings()
        )));
    }
    let specs: Vec<FormFactorSpec> = config
        .form_factors
        .iter()
        .map(|f| FormFactorSpec::new(family(f)?, g.mass, format!("{f:?}")).map_err(invalid))
        .collect::<Result<_, _>>()?;
    let form_factors: Vec<FormFactorVector> =
        specs.iter().map(|s| sample_form_factor(s, &grid).map_err(invalid)).collect::<Result<_, _>>()?;
    let t = &config.truncation;
    let basis = FockBasis::new(grid.len(), t.n_max, spin.dim(), t.dimension_cap).map_err(invalid)?;

    match config.mode {
        Mode::Kinematics => {}
        Mode::DressingChecks => {
            let d = &config.dressing;
            if !(d.epsilon > 0.0 && d.epsilon < 1.0) {
                return Err(invalid("dressing.epsilon must lie in (0, 1)"));
            }
            if !(d.tail_tolerance > 0.0) {
                return Err(invalid("dressing.tail_tolerance must be positive"));
            }
            if d.leakage_nmax.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("dressing.leakage_nmax must be increasing"));
            }
        }
        Mode::Case2Convergence => {
            let s = &config.sweep;
            if s.cutoffs.is_empty() || !positive_increasing(&s.cutoffs) {
                return Err(invalid("sweep.cutoffs must be a nonempty increasing list of positive energies"));
            }
            if *s.cutoffs.last().unwrap() < grid.max_omega() {
                return Err(invalid("the last cutoff must reach the top of the grid"));
            }
            if !(s.shift_offset > 0.0) {
                return Err(invalid("sweep.shift_offset must be positive"));
            }
        }
        Mode::Triviality => {
            if spin.n_couplings() != 1 {
                return Err(invalid("triviality needs exactly one coupling"));
            }
            let tc = &config.triviality;
            match tc.ladder {
                LadderKind::Amplitude => {
                    if tc.amplitudes.is_empty() || !positive_increasing(&tc.amplitudes) {
                        return Err(invalid("triviality.amplitudes must be a nonempty increasing positive list"));
                    }
                    if form_factors[0].is_zero() {
                        return Err(invalid("an amplitude ladder needs a nonzero form factor"));
                    }
                }
                LadderKind::Cutoff => {
                    if config.sweep.cutoffs.is_empty() || !positive_increasing(&config.sweep.cutoffs) {
                        return Err(invalid("a cutoff ladder needs increasing sweep.cutoffs"));
                    }
                }
            }
            if tc.weyl_nmax.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("triviality.weyl_nmax must be increasing"));
            }
        }
    }
    Ok(Prepared { config, grid, basis, spin, specs, form_factors })
}
