use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pcfnet::besov::{direct_energy, unit_form, PiecewiseFunction};
use pcfnet::fractal::{builtin, cell_tree_trace, LevelGraph};
use pcfnet::par::Exec;
use pcfnet::HpFloat;

fn modes() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", Exec::Parallel));
    v
}

fn trace(c: &mut Criterion) {
    let sys = builtin("eyebolt-vicsek").unwrap();
    let t: Vec<(usize, usize, HpFloat)> = sys.template_conductances();
    let mut g = c.benchmark_group("cell_tree_trace/eyebolt-level3");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| cell_tree_trace(&sys, 3, exec, |_| t.clone()).unwrap())
        });
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let sys = builtin("sickle").unwrap();
    let graph = LevelGraph::build(&sys, 4);
    let mut g = c.benchmark_group("level_network/sickle-level4");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| graph.network::<f64>(&sys, exec))
        });
    }
    g.finish();
}

fn energy(c: &mut Criterion) {
    let sys = builtin("sickle").unwrap();
    let u = PiecewiseFunction::harmonic(&sys, vec![0.0, 1.0, 0.25]).unwrap();
    let form = unit_form::<f64>(3);
    let mut g = c.benchmark_group("direct_energy/sickle-level4");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| direct_energy(&sys, &u, 4, &form, None, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, trace, network, energy);
criterion_main!(benches);
