use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use darl1n_core::nn::{layer_sizes, Head, Mlp};
use darl1n_core::proximity::{brute_neighbor_sets, grid_neighbor_sets, AgentState, GraphConfig};
use darl1n_core::seed::stream;
use rand::Rng;

fn mlp(c: &mut Criterion) {
    let mut rng = stream(1, 0, 0);
    let mut group = c.benchmark_group("mlp");
    for width in [32, 64, 128] {
        let net = Mlp::new(&layer_sizes(40, 2, width, 1), Head::Linear, &mut rng).unwrap();
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        group.bench_with_input(BenchmarkId::new("forward", width), &width, |b, _| b.iter(|| net.predict(&x).unwrap()));
        group.bench_with_input(BenchmarkId::new("forward_backward", width), &width, |b, _| {
            b.iter(|| {
                let (_, cache) = net.forward(&x).unwrap();
                net.backward(&cache, &[1.0]).unwrap()
            })
        });
    }
    group.finish();
}

fn neighbors(c: &mut Criterion) {
    let mut rng = stream(2, 0, 0);
    let cfg = GraphConfig::euclidean(0.35, 0.25).unwrap();
    let mut group = c.benchmark_group("neighbor_sets");
    for agents in [12, 48, 192] {
        let half = 3.0 * (agents as f64 / 48.0).sqrt();
        let states: Vec<AgentState> = (0..agents)
            .map(|_| AgentState::at(vec![rng.random_range(-half..half), rng.random_range(-half..half)]))
            .collect();
        group.bench_with_input(BenchmarkId::new("brute", agents), &states, |b, s| b.iter(|| brute_neighbor_sets(s, &cfg).unwrap()));
        group.bench_with_input(BenchmarkId::new("grid", agents), &states, |b, s| b.iter(|| grid_neighbor_sets(s, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, mlp, neighbors);
criterion_main!(benches);
