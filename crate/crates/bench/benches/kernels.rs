use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use gsb_renorm_core::fock::{enumerate_basis, DEFAULT_DIMENSION_CAP};
use gsb_renorm_core::gsb::{assemble_renormalized_hamiltonian, pauli_x, pauli_z};
use gsb_renorm_core::model::{sample_form_factor, GridScheme};
use gsb_renorm_core::resolvent::{choose_shift, ResolventSolver};
use gsb_renorm_core::{Complex64, FockBasis, FormFactorSpec, ModeGrid, SpinSystem};

fn basis(c: &mut Criterion) {
    let mut g = c.benchmark_group("basis");
    for (m, n) in [(8, 4), (16, 4), (32, 3)] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("m{m}_n{n}")), &(m, n), |b, &(m, n)| {
            b.iter(|| enumerate_basis(black_box(m), black_box(n)).unwrap())
        });
    }
    g.finish();
}

fn setup(m: usize, n_max: usize) -> (SpinSystem, Vec<gsb_renorm_core::FormFactorVector>, ModeGrid, FockBasis) {
    let grid = ModeGrid::build(1.0, 50.0, m, GridScheme::Log).unwrap();
    let spec = FormFactorSpec::power_law(0.5, 0.5, 1.0).unwrap();
    let f = vec![sample_form_factor(&spec, &grid).unwrap()];
    let spin = SpinSystem::new(pauli_z(), vec![pauli_x()]).unwrap();
    let basis = FockBasis::new(m, n_max, 2, DEFAULT_DIMENSION_CAP).unwrap();
    (spin, f, grid, basis)
}

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    for (m, n) in [(8, 4), (16, 3)] {
        let (spin, f, grid, basis) = setup(m, n);
        g.bench_function(format!("m{m}_n{n}"), |b| {
            b.iter(|| assemble_renormalized_hamiltonian(&spin, &f, &grid, &basis).unwrap())
        });
    }
    g.finish();
}

fn solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    g.sample_size(20);
    for (m, n) in [(8, 4), (16, 3)] {
        let (spin, f, grid, basis) = setup(m, n);
        let (h, _) = assemble_renormalized_hamiltonian(&spin, &f, &grid, &basis).unwrap();
        let solver = ResolventSolver::new(&h, choose_shift(&h, 10.0).unwrap()).unwrap();
        let rhs: Vec<Complex64> = (0..solver.dim()).map(|i| Complex64::new(1.0 / (1.0 + i as f64), 0.0)).collect();
        g.bench_function(format!("m{m}_n{n}"), |b| b.iter(|| solver.solve(black_box(&rhs), None).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, basis, assembly, solve);
criterion_main!(benches);
