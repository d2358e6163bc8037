use std::time::{Duration, Instant};

use bncard_core::data::{
    gen_star_schema, gen_synthetic, gen_workload, load_schema, write_schema, JoinSchema, Query, StarSpec,
    SyntheticSpec, WorkloadSpec,
};
use bncard_core::ensemble::{build_ensemble, EnsembleModel, EnsembleOptions};
use bncard_core::eval::eval_workload;
use bncard_core::exec::Exec;
use bncard_core::infer::{Backend, PlanCache};

#[test]
fn star_schema_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let schema = gen_star_schema(&StarSpec { satellites: 3, center_rows: 600, seed: 3, ..StarSpec::default() }).unwrap();
    let path = write_schema(&schema, dir.path()).unwrap();
    let schema = load_schema(&path).unwrap();
    let ens = build_ensemble(&schema, &EnsembleOptions { budget: 2, seed: 1, ..Default::default() }, Exec::default())
        .unwrap();
    assert!(ens.groups.iter().all(|g| g.members.len() <= 2));

    let spec = WorkloadSpec { count: 60, tables: (1, 3), seed: 4, ..WorkloadSpec::default() };
    let queries: Vec<Query> = gen_workload(&schema, &spec)
        .unwrap()
        .iter()
        .map(|r| Query::resolve(r, &schema.meta).unwrap())
        .collect();
    let cache = PlanCache::default();
    let report = eval_workload(&ens, &queries, Backend::CompiledVe, &cache, Exec::default()).unwrap();
    assert_eq!(report.queries, 60);
    assert!(report.p50.is_finite() && report.p50 < 3.0, "median q-error {}", report.p50);

    let saved = dir.path().join("model.json");
    ens.save(&saved).unwrap();
    let back = EnsembleModel::load(&saved).unwrap();
    for q in &queries {
        let a = ens.estimate(q, Backend::CompiledVe, &cache).unwrap();
        let b = back.estimate(q, Backend::CompiledVe, &PlanCache::default()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn sampling_backend_tracks_exact_on_single_table() {
    let t = gen_synthetic(&SyntheticSpec { skew: 1.0, correlation: 0.6, domain: 10, scale: 6, rows: 20_000, seed: 8 })
        .unwrap()
        .table;
    let schema = JoinSchema::single(t);
    let ens = build_ensemble(&schema, &EnsembleOptions { budget: 1, ..Default::default() }, Exec::default()).unwrap();
    let raw = gen_workload(&schema, &WorkloadSpec { count: 50, seed: 2, ..WorkloadSpec::default() }).unwrap();
    let cache = PlanCache::default();
    for r in &raw {
        let q = Query::resolve(r, &schema.meta).unwrap();
        let exact = ens.estimate(&q, Backend::CompiledVe, &cache).unwrap();
        let ve = ens.estimate(&q, Backend::Ve, &cache).unwrap();
        assert!((exact - ve).abs() <= 1e-9 * exact.max(1.0));
        if exact > 200.0 {
            let ps = ens.estimate(&q, Backend::Sampling { k: 10_000, seed: 3 }, &cache).unwrap();
            assert!((ps / exact).max(exact / ps) < 1.5, "{ps} vs {exact}");
        }
    }
}

#[test]
fn thousand_row_insert_is_fast() {
    let t = gen_synthetic(&SyntheticSpec { skew: 1.0, correlation: 0.5, domain: 20, scale: 10, rows: 21_000, seed: 5 })
        .unwrap()
        .table;
    let n = t.row_count();
    let schema = JoinSchema::single(t.slice_rows(0, n - 1000));
    let ens = build_ensemble(&schema, &EnsembleOptions { budget: 1, ..Default::default() }, Exec::default()).unwrap();
    let batch = t.slice_rows(n - 1000, n);
    let start = Instant::now();
    let grown = ens.update_table("synthetic", &batch, true).unwrap();
    assert!(start.elapsed() < Duration::from_secs(1));
    assert_eq!(grown.groups[0].full_join_size, n as u128);
    let back = grown.update_table("synthetic", &batch, false).unwrap();
    assert_eq!(back.groups[0].full_join_size, (n - 1000) as u128);
}

#[test]
fn dependence_matrix_scales_to_many_tables() {
    // twelve satellites: 78 table pairs on one capped sample
    let schema = gen_star_schema(&StarSpec { satellites: 12, center_rows: 300, seed: 9, ..StarSpec::default() }).unwrap();
    let start = Instant::now();
    let ens = build_ensemble(&schema, &EnsembleOptions { budget: 3, ..Default::default() }, Exec::default()).unwrap();
    assert!(start.elapsed() < Duration::from_secs(60));
    let m = &ens.dependence;
    for i in 0..m.len() {
        for j in 0..m.len() {
            let v = m.get(i, j);
            assert!((0.0..=1.0).contains(&v));
            assert_eq!(v, m.get(j, i));
        }
    }
}

#[test]
fn execution_modes_build_identical_models() {
    let schema = gen_star_schema(&StarSpec { satellites: 4, center_rows: 300, seed: 6, ..StarSpec::default() }).unwrap();
    let opts = EnsembleOptions { budget: 2, sample_size: Some(2_000), seed: 7, ..Default::default() };
    let a = build_ensemble(&schema, &opts, Exec::Sequential).unwrap().to_json().unwrap();
    let b = build_ensemble(&schema, &opts, Exec::Parallel).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}
