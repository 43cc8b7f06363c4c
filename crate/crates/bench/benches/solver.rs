use criterion::{black_box, criterion_group, criterion_main, Criterion};
use vrmec_bench::{desk, enumerable, quick_solver};
use vrmec_core::baselines::solve_nearest_offloading;
use vrmec_core::latency::evaluate;
use vrmec_core::oracle::brute_force_solve;
use vrmec_core::radio::{allocate_power, DEFAULT_POWER_EPSILON};
use vrmec_core::{jcpt_solve, PowerMode, SolverConfig};

fn evaluation(c: &mut Criterion) {
    let s = desk(0);
    let d = solve_nearest_offloading(&s).best_decision.expect("feasible");
    c.bench_function("evaluate desk decision", |b| b.iter(|| evaluate(black_box(&s), black_box(&d))));
    c.bench_function("allocate power desk", |b| {
        b.iter(|| allocate_power(black_box(&s), black_box(&d), DEFAULT_POWER_EPSILON))
    });
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solvers");
    group.sample_size(10);
    let s = desk(0);
    group.bench_function("nearest offloading desk", |b| b.iter(|| solve_nearest_offloading(black_box(&s))));
    let cfg = quick_solver();
    group.bench_function("jcpt desk 10 iterations", |b| b.iter(|| jcpt_solve(black_box(&s), &cfg)));

    let small = enumerable(0);
    let exact = SolverConfig {
        tolerance: 0.0,
        max_iterations: usize::MAX,
        power: PowerMode::Grid { levels: 4 },
        ..SolverConfig::default()
    };
    group.bench_function("jcpt exact 2x2x3", |b| b.iter(|| jcpt_solve(black_box(&small), &exact)));
    group.bench_function("oracle 2x2x3", |b| b.iter(|| brute_force_solve(black_box(&small), 4)));
    group.finish();
}

criterion_group!(benches, evaluation, solvers);
criterion_main!(benches);
