//! The four experiment modes. Each returns its tables and criterion lines;
//! nothing here touches the file system.

use gsb_renorm_core::dense::{self, c};
use gsb_renorm_core::dressing::{
    ahat_conversion_ratio, dressed_ccr_deviation, dressed_second_quantization, dressed_second_quantization_in_basis,
    dressed_vacuum, dressing_generator, min_eig_on, particle_decay_profile, quadratic_lower_bound, vacuum_annihilation,
    DressingGenerator,
};
use gsb_renorm_core::fock::{adjointness_defect, ccr_deviation, matrix_coupling_bounds};
use gsb_renorm_core::gsb::{
    assemble_renormalized_hamiltonian, completing_square_residual, fock_identity, self_energy, COMMUTATION_TOL,
};
use gsb_renorm_core::model::apply_cutoff;
use gsb_renorm_core::resolvent::{convergence_sweep, SweepOptions, FIT_SLACK};
use gsb_renorm_core::sparse::kron_sum;
use gsb_renorm_core::triviality::{
    assumption_check, decreasing_tail, fiber_decompose, inverse_kappa_dft, triviality_sweep, weyl_relation_residual,
};
use gsb_renorm_core::{Complex64, Error, FockBasis, FormFactorVector, ModeGrid, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{LadderKind, Mode, Prepared};
use crate::output::{checks_csv, Check, Criterion};
use crate::RunError;

/// Largest `D · dim` for which dense eigenvalue checks are attempted.
pub const DENSE_CHECK_CAP: usize = 3000;

/// Tables, criterion lines and extra manifest entries of one run.
#[derive(Debug, Clone, Default)]
pub struct ModeResult {
    pub tables: Vec<(String, String)>,
    pub criteria: Vec<Criterion>,
    pub manifest: Vec<(String, String)>,
}

fn compute(e: Error) -> RunError {
    RunError::Compute(e.to_string())
}

pub fn run_mode(p: &Prepared) -> Result<ModeResult, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.config.seed);
    match p.config.mode {
        Mode::Kinematics => kinematics(p, &mut rng),
        Mode::DressingChecks => dressing_checks(p, &mut rng),
        Mode::Case2Convergence => case2_convergence(p),
        Mode::Triviality => triviality(p),
    }
}

fn pick<'a>(rows: &'a [Check], checks: &[&str]) -> Vec<&'a Check> {
    rows.iter().filter(|r| checks.contains(&r.check.as_str())).collect()
}

fn random_spin_vector(d: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..d).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn random_form_factor(grid: &ModeGrid, rng: &mut impl Rng) -> FormFactorVector {
    grid.vector((0..grid.len()).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
        .expect("length matches")
}

fn kinematics(p: &Prepared, rng: &mut ChaCha8Rng) -> Result<ModeResult, RunError> {
    let (grid, basis, spin) = (&p.grid, &p.basis, &p.spin);
    let mut rows = Vec::new();
    let ccr = ccr_deviation(basis).map_err(compute)?;
    rows.push(Check::at_most("ccr", "a_astar", ccr.mixed, 1e-12));
    rows.push(Check::at_most("ccr", "a_a", ccr.annihilators, 1e-12));
    rows.push(Check::at_most("ccr", "astar_astar", ccr.creators, 1e-12));
    for (j, f) in p.form_factors.iter().enumerate() {
        rows.push(Check::at_most(
            "adjointness",
            &format!("f_{}", j + 1),
            adjointness_defect(f, grid, basis).map_err(compute)?,
            0.0,
        ));
    }
    let g = random_form_factor(grid, rng);
    rows.push(Check::at_most("adjointness", "random", adjointness_defect(&g, grid, basis).map_err(compute)?, 0.0));
    let bounds = matrix_coupling_bounds(basis, spin.dim(), 100, rng).map_err(compute)?;
    rows.push(Check::at_most("number_bounds", "annihilation_ratio", bounds.annihilation_ratio, 1.0 + 1e-12));
    rows.push(Check::at_most("number_bounds", "creation_ratio", bounds.creation_ratio, 1.0 + 1e-12));

    // dΓ(ωχ_S)² ≥ dΓ(ω²χ_S) with S the upper half of the grid.
    let chi: Vec<f64> = (0..grid.len()).map(|l| if 2 * l >= grid.len() { 1.0 } else { 0.0 }).collect();
    let x1: Vec<f64> = grid.omega().iter().zip(&chi).map(|(o, x)| o * x).collect();
    let x2: Vec<f64> = grid.omega().iter().zip(&chi).map(|(o, x)| o * o * x).collect();
    let d1 = basis.second_quantization_diag(&x1).map_err(compute)?;
    let d2 = basis.second_quantization_diag(&x2).map_err(compute)?;
    let gap = d1.iter().zip(&d2).map(|(a, b)| a * a - b).fold(f64::INFINITY, f64::min);
    rows.push(Check::at_least("dgamma_square", "min_eigenvalue", gap, -1e-10));

    let cs = completing_square_residual(spin, &p.form_factors, grid, basis).map_err(compute)?;
    rows.push(Check::at_most(
        "completing_square",
        "relative_residual",
        cs.residual / (1.0 + cs.hamiltonian_max),
        1e-10,
    ));
    let e = self_energy(spin, &p.form_factors, grid).map_err(compute)?;
    rows.push(Check::at_most("self_energy", "hermiticity", dense::hermiticity_defect(&e.matrix), 1e-12));

    let criteria = vec![
        Criterion::from_checks("C1", &pick(&rows, &["ccr", "adjointness", "number_bounds"])),
        Criterion::from_checks("C2", &pick(&rows, &["completing_square"])),
    ];
    Ok(ModeResult {
        tables: vec![("kinematics.csv".into(), checks_csv(&rows))],
        criteria,
        manifest: vec![("self_energy_trace_norm".into(), crate::output::fmt_f64(e.trace_norm))],
    })
}

/// Criterion from headline checks first, then the guards it depends on.
fn criterion(id: &str, rows: &[Check], headline: &[&str], guards: &[&str]) -> Criterion {
    let mut sel = pick(rows, headline);
    sel.extend(pick(rows, guards));
    Criterion::from_checks(id, &sel)
}

fn dressing_criteria(rows: &[Check]) -> Vec<Criterion> {
    let g = ["assumption", "tail_gate"];
    vec![
        criterion("C3", rows, &["vacuum_annihilation", "leakage"], &g),
        criterion("C4", rows, &["closed_form"], &g),
        criterion("C5", rows, &["decay"], &g),
        criterion("C8", rows, &["quadratic_bound"], &g),
    ]
}

fn dressing_result(rows: Vec<Check>, manifest: Vec<(String, String)>) -> ModeResult {
    ModeResult {
        criteria: dressing_criteria(&rows),
        tables: vec![("dressing.csv".into(), checks_csv(&rows))],
        manifest,
    }
}

/// Top-sector leakage `max_ℓ ‖â_ℓ T(v⊗Ω)‖` at truncation `n_max`.
fn leakage_at(p: &Prepared, n_max: usize, v: &[Complex64]) -> Result<f64, RunError> {
    let basis =
        FockBasis::new(p.grid.len(), n_max, p.spin.dim(), p.config.truncation.dimension_cap).map_err(compute)?;
    let gen = dressing_generator(&p.spin, &p.form_factors, &p.grid, &basis).map_err(compute)?;
    Ok(vacuum_annihilation(&gen, &p.form_factors, &p.grid, &basis, v).map_err(compute)?.1)
}

fn dressing_checks(p: &Prepared, rng: &mut ChaCha8Rng) -> Result<ModeResult, RunError> {
    let (grid, basis, spin, f) = (&p.grid, &p.basis, &p.spin, &p.form_factors);
    let dc = &p.config.dressing;
    let d = spin.dim();
    let mut rows = Vec::new();
    let mut manifest = Vec::new();
    if !spin.is_commuting() {
        rows.push(Check::at_most("assumption", "commuting_couplings", spin.commutator_defect(), COMMUTATION_TOL));
        return Ok(dressing_result(rows, manifest));
    }
    let gen: DressingGenerator = dressing_generator(spin, f, grid, basis).map_err(compute)?;
    manifest.push(("coupling_norm".into(), crate::output::fmt_f64(gen.coupling_norm)));
    let v = random_spin_vector(d, rng);

    let dv = match dressed_vacuum(&gen, &v, basis) {
        Ok(dv) => dv,
        Err(Error::ClosedFormMismatch { deviation }) => {
            rows.push(Check::at_most("closed_form", "max_sector_deviation", deviation, 1e-10));
            return Ok(dressing_result(rows, manifest));
        }
        Err(e) => return Err(compute(e)),
    };
    rows.push(Check::at_most("tail_gate", "dressed_vacuum", dv.tail_fraction, dc.tail_tolerance));
    if dv.tail_fraction > dc.tail_tolerance {
        return Ok(dressing_result(rows, manifest));
    }
    rows.push(Check::at_most("closed_form", "max_sector_deviation", dv.closed_form_deviation, 1e-10));
    let vn = gsb_renorm_core::krylov::norm(&v);
    let ratio = dv
        .sector_norms
        .iter()
        .enumerate()
        .map(|(m, s)| {
            let b = gen.sector_bound(m) * vn;
            if b > 0.0 {
                s / b
            } else if *s == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    rows.push(Check::at_most("closed_form", "sector_bound_ratio", ratio, 1.0 + 1e-12));

    let (sub, _) = vacuum_annihilation(&gen, f, grid, basis, &v).map_err(compute)?;
    rows.push(Check::at_most("vacuum_annihilation", "sub_truncation", sub, 1e-10));
    let leak: Vec<f64> = dc.leakage_nmax.par_iter().map(|&n| leakage_at(p, n, &v)).collect::<Result<_, _>>()?;
    for (n, l) in dc.leakage_nmax.iter().zip(&leak) {
        rows.push(Check::new("leakage", &format!("n_max_{n}"), *l, f64::NAN, true));
    }
    if leak.len() >= 2 {
        let worst = leak
            .windows(2)
            .map(|w| {
                if w[0] > 0.0 {
                    w[1] / w[0]
                } else if w[1] == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        rows.push(Check::at_most("leakage", "monotone_ratio", worst, 1.1));
    }

    let psi = StateVector {
        coefficients: (0..d * basis.dim())
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
        basis_id: basis.id(),
        spin_dim: d,
    };
    let back = gen.exp_apply(&gen.exp_apply(&psi, 1.0).map_err(compute)?, -1.0).map_err(compute)?;
    let dev = back.coefficients.iter().zip(&psi.coefficients).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    rows.push(Check::at_most("inverse_dressing", "max_deviation", dev, 1e-10));
    rows.push(Check::at_most(
        "dressed_ccr",
        "sub_truncation",
        dressed_ccr_deviation(spin, f, grid, basis).map_err(compute)?,
        1e-10,
    ));

    let dg = dressed_second_quantization(grid.omega(), spin, f, grid, basis).map_err(compute)?;
    let u = dense::random_unitary(rng, grid.len());
    let rotated = dressed_second_quantization_in_basis(grid.omega(), &u, spin, f, grid, basis).map_err(compute)?;
    rows.push(Check::at_most(
        "basis_independence",
        "max_deviation",
        dg.matrix.sub(&rotated.matrix).map_err(compute)?.max_abs(),
        1e-9,
    ));
    let (h, _) = assemble_renormalized_hamiltonian(spin, f, grid, basis).map_err(compute)?;
    let k = kron_sum(&[(spin.k(), &fock_identity(basis))], basis.dim(), basis.dim());
    let diff = dg.matrix.add(&k).map_err(compute)?.sub(&h.matrix).map_err(compute)?.max_abs();
    rows.push(Check::at_most(
        "renormalized_hamiltonian",
        "relative_deviation",
        diff / (1.0 + h.matrix.max_abs()),
        1e-10,
    ));

    let dense_ok = d * basis.dim() <= DENSE_CHECK_CAP;
    if dense_ok {
        let mask = basis.sub_truncation_mask(d);
        rows.push(Check::at_least(
            "positivity",
            "dgamma_hat_min_eigenvalue",
            min_eig_on(&dg.matrix.to_dense(), &mask),
            -1e-8,
        ));
    } else {
        rows.push(Check::skipped("positivity", "dgamma_hat_min_eigenvalue"));
    }

    let n_up = dc.decay_up_to.min(basis.n_max());
    match particle_decay_profile(&gen, &v, n_up, basis, dc.tail_tolerance) {
        Ok(prof) => {
            let best = prof.constants.iter().map(|(_, k)| *k).fold(f64::INFINITY, f64::min);
            rows.push(Check::new("decay", "least_constant", best, 1e3, prof.least_epsilon.is_some()));
            let monotone = prof.profile.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
            rows.push(Check::new("decay", "profile_nondecreasing", prof.profile[n_up], f64::NAN, monotone));
            for (eps, cst) in &prof.constants {
                rows.push(Check::new("decay_constant", &format!("epsilon_{eps}"), *cst, 1e3, true));
            }
            if let Some(e) = prof.least_epsilon {
                manifest.push(("decay_least_epsilon".into(), format!("{e}")));
            }
        }
        Err(Error::TruncationTail { fraction, tolerance }) => {
            rows.push(Check::at_most("decay", "tail_fraction", fraction, tolerance))
        }
        Err(e) => return Err(compute(e)),
    }

    if dense_ok {
        match quadratic_lower_bound(spin, f, grid, basis, dc.epsilon) {
            Ok(q) => {
                rows.push(Check::at_least("quadratic_bound", "min_eigenvalue", q.min_eig, -1e-8));
                rows.push(Check::at_most("quadratic_bound", "delta", q.delta, dc.epsilon / 8.0));
                manifest.push(("quadratic_bound_modes".into(), format!("{}", q.chi.iter().sum::<f64>())));
            }
            Err(Error::InvalidArgument(_)) => rows.push(Check::skipped("quadratic_bound", "no_qualifying_tail_set")),
            Err(e) => return Err(compute(e)),
        }
    } else {
        rows.push(Check::skipped("quadratic_bound", "min_eigenvalue"));
    }

    let g = random_form_factor(grid, rng);
    let chi: Vec<f64> = (0..grid.len()).map(|l| if 2 * l + 1 >= grid.len() { 1.0 } else { 0.0 }).collect();
    let r = ahat_conversion_ratio(spin, f, grid, basis, &g, &chi, dc.conversion_samples, rng).map_err(compute)?;
    rows.push(Check::at_most("ahat_conversion", "worst_ratio", r, 1.0 + 1e-10));
    Ok(dressing_result(rows, manifest))
}

fn case2_convergence(p: &Prepared) -> Result<ModeResult, RunError> {
    let s = &p.config.sweep;
    let opts = SweepOptions { offset: s.shift_offset, seed: p.config.seed, ..SweepOptions::default() };
    let rep = convergence_sweep(&p.spin, &p.form_factors, &p.grid, &p.basis, &s.cutoffs, &opts).map_err(compute)?;
    let mut rows = Vec::new();
    let r = &rep.residual_norms;
    let worst_step = r.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::INFINITY }).fold(0.0, f64::max);
    rows.push(Check::new("convergence", "strictly_decreasing_to_zero", worst_step, 1.0, rep.monotone_ok));
    rows.push(Check::new(
        "convergence",
        "norm_estimates_converged",
        rep.residual_converged.iter().filter(|c| !**c).count() as f64,
        0.0,
        rep.residual_converged.iter().all(|c| *c),
    ));
    let fit = r
        .iter()
        .zip(&rep.predictor)
        .filter(|(_, q)| **q > 0.0)
        .map(|(x, q)| x / (rep.fitted_c * q))
        .fold(0.0, f64::max);
    rows.push(Check::new("convergence", "rate_fit", fit, 1.0 + FIT_SLACK, rep.fit_ok));
    let drift_ratio = rep.bare_drift() / rep.renorm_drift();
    rows.push(Check::at_least("convergence", "bare_over_renormalized_drift", drift_ratio, 10.0));
    let criteria = vec![Criterion::from_checks("C6", &rows.iter().collect::<Vec<_>>())];
    let f = crate::output::fmt_f64;
    Ok(ModeResult {
        tables: vec![("convergence.csv".into(), rep.to_csv()), ("sweep_checks.csv".into(), checks_csv(&rows))],
        criteria,
        manifest: vec![
            ("shift".into(), f(rep.shift.z)),
            ("fitted_c".into(), f(rep.fitted_c)),
            ("ls_slope".into(), f(rep.ls_slope)),
            ("bare_drift".into(), f(rep.bare_drift())),
            ("renormalized_drift".into(), f(rep.renorm_drift())),
        ],
    })
}

/// Weyl-relation residuals on a single unit mode, used as a standing check of
/// the Weyl machinery alongside every triviality run.
fn weyl_rows(n_maxes: &[usize]) -> Result<Vec<Check>, RunError> {
    let grid = ModeGrid::single(1.0, 1.0).map_err(compute)?;
    let s1 = grid.vector(vec![c(0.3, 0.4)]).map_err(compute)?;
    let s2 = grid.vector(vec![c(-0.2, 0.45)]).map_err(compute)?;
    let res: Vec<f64> = n_maxes
        .par_iter()
        .map(|&n| {
            let basis = FockBasis::new(1, n, 1, usize::MAX).map_err(compute)?;
            Ok(weyl_relation_residual(&s1, 1.0, &s2, 2.0, &grid, &basis).map_err(compute)?.lower_half)
        })
        .collect::<Result<_, RunError>>()?;
    let mut rows = Vec::new();
    if res.len() >= 2 {
        let worst = res.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).fold(0.0, f64::max);
        rows.push(Check::at_most("weyl_relation", "monotone_ratio", worst, 1.1));
    }
    let basis = FockBasis::new(1, 12, 1, usize::MAX).map_err(compute)?;
    let s = grid.real_vector(&[0.5]).map_err(compute)?;
    let inv = weyl_relation_residual(&s, 0.0, &s.scaled(c(-1.0, 0.0)), 0.0, &grid, &basis).map_err(compute)?;
    rows.push(Check::at_most("weyl_relation", "inverse_n_max_12", inv.full, 1e-8));
    rows.extend(
        n_maxes.iter().zip(&res).map(|(n, r)| Check::new("weyl_relation", &format!("n_max_{n}"), *r, f64::NAN, true)),
    );
    Ok(rows)
}

fn triviality(p: &Prepared) -> Result<ModeResult, RunError> {
    let (grid, basis, spin) = (&p.grid, &p.basis, &p.spin);
    let tc = &p.config.triviality;
    let mut rows = Vec::new();
    let cert = assumption_check(spin).map_err(compute)?;
    rows.push(Check::at_most("assumption", "permutation_defect", cert.permutation_defect, 1e-10));
    rows.push(Check::at_most("assumption", "unitarity_defect", cert.unitarity_defect, 1e-10));
    if !cert.holds {
        let criteria =
            ["C10", "C11"].iter().map(|id| Criterion::from_checks(id, &rows.iter().collect::<Vec<_>>())).collect();
        return Ok(ModeResult {
            tables: vec![("triviality_checks.csv".into(), checks_csv(&rows))],
            criteria,
            manifest: vec![],
        });
    }
    let f0 = &p.form_factors[0];
    let ladder: Vec<(f64, FormFactorVector)> = match tc.ladder {
        LadderKind::Amplitude => {
            // Amplitudes refer to the form factor each fiber sees, f · c.
            let unit = grid.omega_norm(f0, -1.0).map_err(compute)? * cert.coupling_scale;
            tc.amplitudes.iter().map(|&a| (a, f0.scaled(c(a / unit, 0.0)))).collect()
        }
        LadderKind::Cutoff => p.config.sweep.cutoffs.iter().map(|&l| (l, apply_cutoff(f0, grid, l))).collect(),
    };
    let rep = triviality_sweep(spin, &ladder, grid, basis).map_err(compute)?;

    let set = fiber_decompose(spin, &ladder[ladder.len() - 1].1, grid, basis).map_err(compute)?;
    rows.push(Check::at_most("fiber", "block_residual", set.block_residual, 1e-10));
    rows.push(Check::at_most("fiber", "reconstruction_residual", set.reconstruction_residual, 1e-10));
    let dft = set
        .kappa
        .iter()
        .zip(&set.eta)
        .flat_map(|(k, e)| {
            inverse_kappa_dft(e).into_iter().zip(k.iter()).map(|(b, a)| (b - c(*a, 0.0)).norm()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    rows.push(Check::at_most("dft", "round_trip", dft, 1e-12));
    rows.extend(weyl_rows(&tc.weyl_nmax)?);
    for k in 0..rep.eta0.len() {
        let series: Vec<f64> = rep.distances.iter().map(|r| r[k]).collect();
        rows.push(Check::new(
            "trend",
            &format!("fiber_{}", k + 1),
            series[series.len() - 1],
            f64::NAN,
            decreasing_tail(&series),
        ));
    }
    let criteria = vec![
        criterion("C9", &rows, &["weyl_relation"], &[]),
        criterion("C10", &rows, &["fiber", "dft"], &["assumption"]),
        criterion("C11", &rows, &["trend"], &["assumption"]),
    ];
    let periods: Vec<String> = set.periods.iter().map(|m| m.to_string()).collect();
    Ok(ModeResult {
        tables: vec![("triviality.csv".into(), rep.to_csv()), ("triviality_checks.csv".into(), checks_csv(&rows))],
        criteria,
        manifest: vec![
            ("triviality_z".into(), crate::output::fmt_f64(rep.z)),
            ("fiber_periods".into(), periods.join(" ")),
            ("coupling_scale".into(), crate::output::fmt_f64(cert.coupling_scale)),
        ],
    })
}
