use bncard_core::data::{gen_synthetic, gen_workload, EncodedTable, JoinSchema, Query, SyntheticSpec, WorkloadSpec};
use bncard_core::ensemble::{build_ensemble, estimate_batch, EnsembleOptions};
use bncard_core::exec::Exec;
use bncard_core::infer::{evaluate, Backend, Evidence, PlanCache};
use bncard_core::params::{fit_cpts, DEFAULT_ALPHA};
use bncard_core::rdc::{table_pair_rdc, RdcParams};
use bncard_core::structure::{chow_liu, mi_matrix, StructureConstraints};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn table(scale: usize, domain: usize, rows: usize) -> EncodedTable {
    gen_synthetic(&SyntheticSpec { skew: 1.0, correlation: 0.6, domain, scale, rows, seed: 11 })
        .unwrap()
        .table
}

fn learning(c: &mut Criterion) {
    let t = table(12, 20, 50_000);
    let dag = chow_liu(&t, &StructureConstraints::default(), Exec::Parallel).unwrap();
    let mut g = c.benchmark_group("learning");
    g.sample_size(10);
    for (name, ex) in MODES {
        g.bench_with_input(BenchmarkId::new("mi_matrix", name), &ex, |b, &ex| b.iter(|| mi_matrix(black_box(&t), ex)));
        g.bench_with_input(BenchmarkId::new("fit_cpts", name), &ex, |b, &ex| {
            b.iter(|| fit_cpts(black_box(&t), &dag, DEFAULT_ALPHA, ex).unwrap())
        });
    }
    g.finish();
}

fn dependence(c: &mut Criterion) {
    let t = table(8, 20, 5_000);
    let params = RdcParams::default();
    let mut g = c.benchmark_group("rdc_pairs");
    g.sample_size(10);
    for (name, ex) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &ex, |b, &ex| {
            b.iter(|| table_pair_rdc(black_box(&t), &[0, 1, 2, 3], &[4, 5, 6, 7], &params, ex).unwrap())
        });
    }
    g.finish();
}

fn estimation(c: &mut Criterion) {
    let schema = JoinSchema::single(table(10, 50, 20_000));
    let ens = build_ensemble(&schema, &EnsembleOptions { budget: 1, ..Default::default() }, Exec::Parallel).unwrap();
    let raw = gen_workload(&schema, &WorkloadSpec { count: 500, seed: 5, ..Default::default() }).unwrap();
    let queries: Vec<Query> = raw.iter().map(|r| Query::resolve(r, &schema.meta).unwrap()).collect();
    let cache = PlanCache::default();
    let mut g = c.benchmark_group("estimate_batch");
    for (name, ex) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &ex, |b, &ex| {
            b.iter(|| estimate_batch(&ens, black_box(&queries), Backend::CompiledVe, &cache, ex))
        });
    }
    g.finish();
}

fn compiled_vs_interpreted(c: &mut Criterion) {
    let t = table(20, 100, 20_000);
    let dag = chow_liu(&t, &StructureConstraints::default(), Exec::Parallel).unwrap();
    let bn = fit_cpts(&t, &dag, DEFAULT_ALPHA, Exec::Parallel).unwrap();
    let card = bn.attrs()[3].domain_size() as u32;
    let ev = Evidence::new(bn.len()).with_region(3, bncard_core::data::Region::new((0..card / 2).collect()));
    let cache = PlanCache::default();
    let mut g = c.benchmark_group("single_query");
    g.bench_function("interpreted_ve", |b| b.iter(|| evaluate(&bn, black_box(&ev), Backend::Ve, &cache).unwrap()));
    g.bench_function("compiled_ve", |b| {
        b.iter(|| evaluate(&bn, black_box(&ev), Backend::CompiledVe, &cache).unwrap())
    });
    g.finish();
}

criterion_group!(benches, learning, dependence, estimation, compiled_vs_interpreted);
criterion_main!(benches);
