//! Oracle-labeling throughput: sequential baseline vs the thread-pool path.
//!
//! Labeling dominates dataset generation, and each sample is an independent
//! interior-point solve, so this is the crate's parallelism showcase. Both
//! paths produce identical output (order-preserving map); only wall time
//! should differ. Built without the `parallel` feature, `map_batch`
//! degenerates to the sequential path and the two series coincide.
//!
//! Run with `cargo bench -p gridopf` (pool sized by rayon's default) or
//! compare single-threaded via `RAYON_NUM_THREADS=1`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use gridopf::dataset::{full_loads, sample_uniform_loads, LoadSample};
use gridopf::grid::{build_admittance, parse_case, NetworkCase};
use gridopf::opf::{solve_opf, OpfOptions};
use gridopf::par::{map_batch, map_sequential};
use std::hint::black_box;

fn load_case(name: &str) -> NetworkCase {
    let path = format!("{}/../../cases/{name}.m", env!("CARGO_MANIFEST_DIR"));
    parse_case(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn label_all(
    case: &NetworkCase,
    samples: &[LoadSample],
    parallel: bool,
) -> Vec<Option<f64>> {
    let y = build_admittance(case).unwrap();
    let opts = OpfOptions::default();
    let solve = |s: &LoadSample| {
        let loads = full_loads(case, &s.loads_p, &s.loads_q);
        solve_opf(case, &y, &loads, &opts).ok().map(|sol| sol.objective)
    };
    if parallel {
        map_batch(samples, solve)
    } else {
        map_sequential(samples, solve)
    }
}

fn bench_labeling(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle_labeling");
    group.sample_size(10);
    for name in ["case14", "case30"] {
        let case = load_case(name);
        let n = 32;
        let samples = sample_uniform_loads(&case, (0.9, 1.1), n, 7);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("sequential", name), &samples, |b, s| {
            b.iter(|| black_box(label_all(&case, s, false)))
        });
        group.bench_with_input(BenchmarkId::new("parallel", name), &samples, |b, s| {
            b.iter(|| black_box(label_all(&case, s, true)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_labeling);
criterion_main!(benches);
