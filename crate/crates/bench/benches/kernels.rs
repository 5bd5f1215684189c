//! Hot-kernel benchmarks: closure evaluation (direct quadrature vs the
//! interpolation table), the diffusion right-hand side, one explicit step,
//! and the entropy-variable round trip.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use biofilm_core::entropy::{entropy_vars, invert_entropy_vars};
use biofilm_core::reactions::Reaction;
use biofilm_core::solver::{diffusion_rhs, step_explicit};
use biofilm_core::{
    BoundaryCondition, Closures, GridSpec, ModelParams, Reference, State,
};

fn params() -> ModelParams {
    ModelParams::uniform(2.0, 2.0, 1.0, 1.0, 3).unwrap()
}

fn smooth_state(grid: &GridSpec) -> State {
    let weights = [0.12, 0.10, 0.08];
    let fields: Vec<Vec<f64>> = weights
        .iter()
        .map(|w| {
            (0..grid.num_nodes())
                .map(|k| {
                    let (ix, iy) = grid.coords(k);
                    let (x, y) = grid.position(ix, iy);
                    w * (1.0
                        + 0.4 * (std::f64::consts::PI * x).cos()
                        + 0.3 * (std::f64::consts::PI * y).cos())
                })
                .collect()
        })
        .collect();
    State::from_fields(&fields, grid, 0.0).unwrap()
}

fn bench_closure_eval(c: &mut Criterion) {
    let direct = Closures::direct(params());
    let table = Closures::tabulated(params()).unwrap();
    let ms: Vec<f64> = (1..400).map(|i| i as f64 / 401.0).collect();
    let mut g = c.benchmark_group("log_qp sweep over (0,1)");
    g.bench_function("direct quadrature", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &m in &ms {
                acc += direct.log_qp(black_box(m)).unwrap();
            }
            acc
        })
    });
    g.bench_function("interpolation table", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &m in &ms {
                acc += table.log_qp(black_box(m)).unwrap();
            }
            acc
        })
    });
    g.finish();
}

fn bench_diffusion_rhs(c: &mut Criterion) {
    let cls = Closures::tabulated(params()).unwrap();
    let grid = GridSpec::unit_square(32, 32, BoundaryCondition::Neumann, None).unwrap();
    let state = smooth_state(&grid);
    c.bench_function("diffusion rhs 32x32x3", |b| {
        b.iter(|| diffusion_rhs(&cls, &grid, black_box(&state)).unwrap())
    });
}

fn bench_explicit_step(c: &mut Criterion) {
    let cls = Closures::tabulated(params()).unwrap();
    let grid = GridSpec::unit_square(32, 32, BoundaryCondition::Neumann, None).unwrap();
    let state = smooth_state(&grid);
    c.bench_function("explicit step 32x32x3", |b| {
        b.iter(|| step_explicit(&cls, &grid, &Reaction::None, black_box(&state), 1e-4).unwrap())
    });
}

fn bench_entropy_round_trip(c: &mut Criterion) {
    let cls = Closures::tabulated(params()).unwrap();
    let rf = Reference::new(&cls, &[0.1, 0.1, 0.1]).unwrap();
    let us: Vec<[f64; 3]> = (0..100)
        .map(|i| {
            let s = i as f64 / 100.0;
            [0.05 + 0.2 * s, 0.10 + 0.1 * s, 0.15 - 0.1 * s]
        })
        .collect();
    c.bench_function("entropy vars round trip", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for u in &us {
                let w = entropy_vars(&cls, black_box(u), &rf).unwrap();
                acc += invert_entropy_vars(&cls, &w, &rf).unwrap()[0];
            }
            acc
        })
    });
}

criterion_group!(
    kernels,
    bench_closure_eval,
    bench_diffusion_rhs,
    bench_explicit_step,
    bench_entropy_round_trip
);
criterion_main!(kernels);
