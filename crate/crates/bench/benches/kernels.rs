use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qcframe::degree::{degree_sweep, target_grid, DegreeOptions, Domain};
use qcframe::homotopy::{nodes_within, Homotopy, HomotopyConfig};
use qcframe::zoo::ZooMap;
use qcframe_bench::{cubic_form, glued_objective};

fn exterior_derivative(c: &mut Criterion) {
    let mut g = c.benchmark_group("exterior_derivative");
    for res in [32, 64] {
        let form = cubic_form(3, res);
        g.bench_with_input(BenchmarkId::from_parameter(res), &form, |b, f| {
            b.iter(|| f.exterior_derivative().unwrap())
        });
    }
    g.finish();
}

fn homotopy(c: &mut Criterion) {
    let form = cubic_form(3, 32);
    let t = Homotopy::new(3, HomotopyConfig::default(), 1.0, [0.0; 3]).unwrap();
    let nodes = nodes_within(form.grid(), &[0.0; 3], 0.5);
    let mut g = c.benchmark_group("homotopy");
    g.sample_size(10);
    g.bench_function("ball_half_32", |b| b.iter(|| t.apply(&form, &nodes).unwrap()));
    g.finish();
}

fn degree(c: &mut Criterion) {
    let mut g = c.benchmark_group("degree_sweep");
    g.sample_size(10);
    for (n, spec, res) in [(2, "winding2d:k=2", 128), (3, "winding3d:k=2", 24)] {
        let map = ZooMap::parse(spec, n).unwrap();
        let domain = Domain::ball(1.0);
        let targets = target_grid(&map, domain, res).unwrap();
        g.bench_function(format!("{spec}_{res}"), |b| {
            b.iter(|| degree_sweep(&map, domain, &targets, DegreeOptions::for_dim(n)).unwrap())
        });
    }
    g.finish();
}

fn objective(c: &mut Criterion) {
    let mut g = c.benchmark_group("objective_gradient");
    for res in [24, 48] {
        let (obj, x) = glued_objective(3, res);
        let mut grad = vec![0.0; x.len()];
        g.bench_function(BenchmarkId::from_parameter(res), |b| {
            b.iter(|| obj.value_and_gradient(&x, 1.0, &mut grad))
        });
    }
    g.finish();
}

criterion_group!(benches, exterior_derivative, homotopy, degree, objective);
criterion_main!(benches);
