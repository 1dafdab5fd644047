use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use guidance_bench::{grid, hamiltonian, packet, quartic};
use guidance_core::epstein::poisson_solve;
use guidance_core::solver::rk4_step;
use guidance_core::CurrentTable;

fn derive(c: &mut Criterion) {
    let mut group = c.benchmark_group("derive_table");
    for dim in 1..=3 {
        let h = hamiltonian(dim);
        group.bench_with_input(BenchmarkId::new("oscillator", dim), &h, |b, h| {
            b.iter(|| CurrentTable::derive(black_box(h)).unwrap())
        });
    }
    let q = quartic();
    group.bench_function("quartic", |b| b.iter(|| CurrentTable::derive(black_box(&q)).unwrap()));
    group.finish();
}

fn eval_current(c: &mut Criterion) {
    let mut group = c.benchmark_group("eval_current");
    for (dim, points) in [(1, 1024), (2, 64), (3, 32)] {
        let g = grid(dim, points);
        let psi = packet(&g);
        let table = CurrentTable::derive(&hamiltonian(dim)).unwrap();
        let bound = table.on_grid(&g).unwrap();
        group.bench_function(BenchmarkId::new("oscillator", format!("{dim}d_{points}")), |b| {
            b.iter(|| bound.eval(black_box(&psi), 0.0).unwrap())
        });
    }
    group.finish();
}

fn rk4(c: &mut Criterion) {
    let mut group = c.benchmark_group("rk4_step");
    for (dim, points) in [(1, 1024), (2, 64), (3, 32)] {
        let g = grid(dim, points);
        let psi = packet(&g);
        let op = hamiltonian(dim).on_grid(&g).unwrap();
        group.bench_function(BenchmarkId::new("oscillator", format!("{dim}d_{points}")), |b| {
            b.iter(|| rk4_step(&op, black_box(&psi.values), 0.0, 1e-4).unwrap())
        });
    }
    group.finish();
}

fn poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("poisson_solve");
    for (dim, points) in [(2, 64), (2, 256), (3, 32)] {
        let g = grid(dim, points);
        let rho = packet(&g).density();
        let mean = rho.iter().sum::<f64>() / rho.len() as f64;
        let source: Vec<f64> = rho.iter().map(|r| r - mean).collect();
        group.bench_function(BenchmarkId::new("density", format!("{dim}d_{points}")), |b| {
            b.iter(|| poisson_solve(&g, black_box(&source)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, derive, eval_current, rk4, poisson);
criterion_main!(benches);
