use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use steer_bench::abilene_bin;
use steer_core::assignment::{greedy_sort_flow, online_assign_bin, BaselinePolicy, GreedyConfig, Objective};
use steer_core::instances::{random_instance, two_bottleneck, RandomSpec};
use steer_core::lp::{build_lp, solve_lp};

fn greedy(c: &mut Criterion) {
    let (net, bin) = abilene_bin(7);
    let mut group = c.benchmark_group("greedy_sort_flow");
    for objective in Objective::ALL {
        let config = GreedyConfig::new(objective);
        group.bench_function(BenchmarkId::new("abilene_top10", objective.name()), |b| {
            b.iter(|| greedy_sort_flow(black_box(&bin), &net, &config).unwrap())
        });
    }
    group.finish();
}

fn online(c: &mut Criterion) {
    let (net, bin) = abilene_bin(7);
    let mut group = c.benchmark_group("online_greedy");
    for quanta in [1, 10, 100] {
        group.bench_with_input(BenchmarkId::new("abilene_top10", quanta), &quanta, |b, &q| {
            b.iter(|| {
                online_assign_bin(
                    black_box(&bin),
                    &net,
                    &BaselinePolicy::NearestByHops,
                    Objective::MaxLinkUtilization,
                    q,
                    None,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn lp(c: &mut Criterion) {
    let mut group = c.benchmark_group("lp_oracle");
    let small = two_bottleneck();
    group.bench_function("two_bottleneck", |b| {
        b.iter(|| {
            let inst = build_lp(black_box(&small.bin), &small.network, &BaselinePolicy::NearestByHops).unwrap();
            solve_lp(&inst, 1e-9).unwrap()
        })
    });
    let spec = RandomSpec { nodes: 10, chords: 5, providers: 5, max_locations: 4, background_pairs: 10 };
    let random = random_instance(3, spec);
    group.bench_function("random_10_nodes", |b| {
        b.iter(|| {
            let inst = build_lp(black_box(&random.bin), &random.network, &BaselinePolicy::NearestByHops).unwrap();
            solve_lp(&inst, 1e-9).unwrap()
        })
    });
    let (net, bin) = abilene_bin(7);
    group.sample_size(10);
    group.bench_function("abilene_top10", |b| {
        b.iter(|| {
            let inst = build_lp(black_box(&bin), &net, &BaselinePolicy::NearestByHops).unwrap();
            solve_lp(&inst, 1e-9).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, greedy, online, lp);
criterion_main!(benches);
