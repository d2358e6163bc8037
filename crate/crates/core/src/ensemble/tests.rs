use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::join::GroupJoin;
use super::*;
use crate::data::{true_cardinality, AttributeMeta, EncodedTable, JoinEdge, JoinSchema, Query, Region, SchemaTable};
use crate::exec::Exec;
use crate::infer::{brute_force_prob, Backend, Evidence, PlanCache};
use crate::rdc::RdcParams;

fn keyed(name: &str, attrs: Vec<(&str, usize, Vec<u32>)>, keys: Vec<(&str, Vec<Option<u32>>)>) -> SchemaTable {
    let metas = attrs.iter().map(|(n, d, _)| AttributeMeta::integer_range(*n, *d)).collect();
    let cols: Vec<Vec<u32>> = attrs.into_iter().map(|(_, _, c)| c).collect();
    SchemaTable {
        table: EncodedTable::from_columns(name, metas, &cols).unwrap(),
        keys: keys.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    }
}

fn two_tables(a_keys: &[u32], b_keys: &[u32]) -> JoinSchema {
    let a = keyed("A", vec![("x", 4, (0..a_keys.len() as u32).map(|i| i % 4).collect())], vec![(
        "k",
        a_keys.iter().map(|&k| Some(k)).collect(),
    )]);
    let b = keyed("B", vec![("y", 4, (0..b_keys.len() as u32).map(|i| i % 4).collect())], vec![(
        "k",
        b_keys.iter().map(|&k| Some(k)).collect(),
    )]);
    JoinSchema::from_interned(vec![a, b], vec![JoinEdge::new("A", "k", "B", "k")], None).unwrap()
}

/// Random tree-shaped schema: table `t{i}` has attributes `a0..` over `0..domain` and one
/// key column per incident edge; keys are drawn from a small range so joins fan out and
/// some rows find no partner.
pub(crate) fn toy_schema(edges: &[(usize, usize)], attrs: usize, domain: usize, rows: usize, seed: u64) -> JoinSchema {
    let n = edges.len() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tables = Vec::new();
    for t in 0..n {
        let rows = rng.gen_range(rows / 2..=rows).max(1);
        let mut cols: Vec<Vec<u32>> = Vec::new();
        for j in 0..attrs {
            let col = (0..rows)
                .map(|r| {
                    if j > 0 && rng.gen::<f64>() < 0.7 {
                        cols[j - 1][r]
                    } else {
                        rng.gen_range(0..domain as u32)
                    }
                })
                .collect();
            cols.push(col);
        }
        let metas = (0..attrs).map(|j| AttributeMeta::integer_range(format!("a{j}"), domain)).collect();
        let table = EncodedTable::from_columns(format!("t{t}"), metas, &cols).unwrap();
        let mut keys = BTreeMap::new();
        for (e, &(p, c)) in edges.iter().enumerate() {
            if p == t || c == t {
                // key correlated with the first attribute so the join carries dependence
                let col = (0..rows)
                    .map(|r| {
                        if rng.gen::<f64>() < 0.1 {
                            None
                        } else if rng.gen::<f64>() < 0.5 {
                            Some(cols.first().map_or(0, |c| c[r]) % 4)
                        } else {
                            Some(rng.gen_range(0..5))
                        }
                    })
                    .collect();
                keys.insert(format!("k{e}"), col);
            }
        }
        tables.push(SchemaTable { table, keys });
    }
    let joins =
        edges.iter().enumerate().map(|(e, &(p, c))| JoinEdge::new(&format!("t{p}"), &format!("k{e}"), &format!("t{c}"), &format!("k{e}"))).collect();
    JoinSchema::from_interned(tables, joins, Some("t0".into())).unwrap()
}

/// Random connected query: a subtree grown from a random table plus random regions.
pub(crate) fn random_query(schema: &JoinSchema, rng: &mut impl Rng, max_tables: usize) -> Query {
    let n = schema.tables.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let target = rng.gen_range(1..=max_tables.min(n));
    while chosen.len() < target {
        let frontier: Vec<usize> = chosen
            .iter()
            .flat_map(|&t| schema.tree().neighbors(t).iter().map(|&(w, _)| w))
            .filter(|w| !chosen.contains(w))
            .collect();
        if frontier.is_empty() {
            break;
        }
        chosen.push(frontier[rng.gen_range(0..frontier.len())]);
    }
    let mut q = Query::new(chosen.iter().map(|&t| schema.tables[t].table.name.clone()));
    for &t in &chosen {
        let table = &schema.tables[t].table;
        for a in &table.attrs {
            if rng.gen::<f64>() < 0.5 {
                let d = a.domain_size() as u32;
                let codes: Vec<u32> = (0..d).filter(|_| rng.gen::<f64>() < 0.6).collect();
                q.add_region(&table.name, &a.name, Region::new(codes));
            }
        }
    }
    q
}

#[test]
fn outer_join_of_two_small_tables_has_five_rows() {
    let s = two_tables(&[1, 1], &[1, 1, 2]);
    let j = sample_full_join(&s, &[0, 1], None, 0).unwrap();
    assert!(j.exact);
    assert_eq!(j.full_size, 5);
    assert_eq!(j.rows.len(), 5);
    let mut rows = j.rows.clone();
    rows.sort();
    assert_eq!(rows, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1], vec![ABSENT, 2]]);
    let single = sample_full_join(&s, &[1], None, 0).unwrap();
    assert_eq!(single.rows, vec![vec![0], vec![1], vec![2]]);
    assert!(sample_full_join(&s, &[0, 1], Some(0), 0).is_err());
}

#[test]
fn sampled_rows_are_uniform() {
    let s = two_tables(&[1, 1], &[1, 1, 2]);
    let g = GroupJoin::new(&s, &[0, 1]).unwrap();
    let n = 10_000;
    let rows = g.sample(n, 11);
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for r in rows {
        *counts.entry(r).or_default() += 1;
    }
    assert_eq!(counts.len(), 5);
    let p = 0.2;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for (row, c) in counts {
        assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{row:?}: {c}");
    }
}

#[test]
fn sampled_join_is_deterministic_and_matches_exact_support() {
    let s = toy_schema(&[(0, 1), (1, 2), (1, 3)], 1, 3, 12, 5);
    let all = [0, 1, 2, 3];
    let exact = sample_full_join(&s, &all, None, 0).unwrap();
    let a = sample_full_join(&s, &all, Some(50), 9).unwrap();
    let b = sample_full_join(&s, &all, Some(50), 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.full_size, exact.full_size);
    assert_eq!(exact.rows.len() as u128, exact.full_size);
    for r in &a.rows {
        assert!(exact.rows.contains(r));
    }
}

fn fanout_column(s: &JoinSchema, members: &[usize], cross: &[CrossEdge], name: &str) -> Vec<f64> {
    let j = sample_full_join(s, members, None, 0).unwrap();
    let (t, _) = compute_fanout_columns(s, &j, cross).unwrap();
    let c = t.attr_index(name).unwrap();
    t.column(c).into_iter().map(|code| t.attrs[c].numeric_value(code).unwrap()).collect()
}

#[test]
fn fanout_examples() {
    // one-to-one: every inbound fanout is 1
    let s = two_tables(&[1, 2, 3], &[3, 2, 1]);
    assert!(fanout_column(&s, &[0, 1], &[], "__in.A").iter().all(|&v| v == 1.0));
    // A(1) vs B(1, 1): A's tuple appears in two join rows
    let s = two_tables(&[1], &[1, 1]);
    assert_eq!(fanout_column(&s, &[0, 1], &[], "__in.A"), vec![2.0, 2.0]);
    assert_eq!(fanout_column(&s, &[0, 1], &[], "__in.B"), vec![1.0, 1.0]);
    // unmatched tuple: outbound fanout 0
    let s = two_tables(&[1, 3], &[1, 1]);
    let cross = [CrossEdge { from: 0, to: 1, edge: 0, neighbor_group: 1, neighbor_members: vec![1] }];
    assert_eq!(fanout_column(&s, &[0], &cross, "__out.A.B"), vec![2.0, 0.0]);
}

#[test]
fn fanout_domain_caps_large_values() {
    let values = [0u128, 1, 5, 1000, 1001, 1500, 2500, 5000];
    let (attr, codes) = fanout_domain("f", &values);
    assert_eq!(attr.base_size(), 4 + 3);
    let decoded: Vec<f64> = codes.iter().map(|&c| attr.numeric_value(c).unwrap()).collect();
    assert_eq!(&decoded[..4], &[0.0, 1.0, 5.0, 1000.0]);
    // buckets [1000, 2000), [2000, 4000), [4000, 8000), each represented by its mean
    assert_eq!(decoded[4], (1001.0 + 1500.0) / 2.0);
    assert_eq!(decoded[5], (1001.0 + 1500.0) / 2.0);
    assert_eq!(decoded[6], 2500.0);
    assert_eq!(decoded[7], 5000.0);
    attr.validate().unwrap();
}

fn copies_schema(rows: usize, independent: bool, seed: u64) -> JoinSchema {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<u32> = (0..rows).map(|_| rng.gen_range(0..8)).collect();
    let y: Vec<u32> = x.iter().map(|&v| v / 2).collect();
    let ids: Vec<Option<u32>> = (0..rows as u32).map(Some).collect();
    let (x2, y2) = if independent {
        ((0..rows).map(|_| rng.gen_range(0..8)).collect(), (0..rows).map(|_| rng.gen_range(0..4)).collect())
    } else {
        (x.clone(), y.clone())
    };
    let a = keyed("A", vec![("x", 8, x), ("y", 4, y)], vec![("id", ids.clone())]);
    let b = keyed("B", vec![("x", 8, x2), ("y", 4, y2)], vec![("id", ids)]);
    JoinSchema::from_interned(vec![a, b], vec![JoinEdge::new("A", "id", "B", "id")], None).unwrap()
}

#[test]
fn dependence_of_copies_and_independent_tables() {
    let p = RdcParams::default();
    let copy = build_dependence_matrix(&copies_schema(2000, false, 1), None, 3, &p, Exec::default()).unwrap();
    let indep = build_dependence_matrix(&copies_schema(2000, true, 1), None, 3, &p, Exec::default()).unwrap();
    // the score averages all attribute pairs, so cross pairs (A.x, B.y) count as well
    assert!(copy.get(0, 1) >= 0.9, "{}", copy.get(0, 1));
    assert!(indep.get(0, 1) <= 0.2, "{}", indep.get(0, 1));
    for m in [&copy, &indep] {
        assert_eq!(m.get(0, 1), m.get(1, 0));
        m.validate().unwrap();
    }
}

fn exact_opts(budget: usize, structure: StructureMethod, alpha: f64) -> EnsembleOptions {
    EnsembleOptions { budget, sample_size: None, seed: 1, structure, alpha, ..EnsembleOptions::default() }
}

#[test]
fn budget_one_keeps_every_table_alone() {
    let s = toy_schema(&[(0, 1), (1, 2)], 1, 3, 10, 2);
    let ens = build_ensemble(&s, &exact_opts(1, StructureMethod::ChowLiu, 1.0), Exec::default()).unwrap();
    assert_eq!(ens.groups.iter().map(|g| g.members.clone()).collect::<Vec<_>>(), vec![vec![0], vec![1], vec![2]]);
    // every cross edge has one outbound attribute on each side, every member one inbound
    for g in &ens.groups {
        let outs = g.fanouts.iter().filter(|f| matches!(f.kind, FanoutKind::Outbound { .. })).count();
        let ins = g.fanouts.iter().filter(|f| matches!(f.kind, FanoutKind::Inbound { .. })).count();
        assert_eq!(ins, g.members.len());
        assert_eq!(outs, g.out_means.len());
    }
    assert_eq!(ens.groups[1].out_means.len(), 2);
}

#[test]
fn unconstrained_single_table_is_its_row_count() {
    let s = toy_schema(&[(0, 1)], 2, 3, 40, 3);
    let ens = build_ensemble(&s, &exact_opts(1, StructureMethod::ChowLiu, 1.0), Exec::default()).unwrap();
    let cache = PlanCache::default();
    for t in ["t0", "t1"] {
        let n = s.table(t).unwrap().table.row_count() as f64;
        for backend in [Backend::Ve, Backend::CompiledVe, Backend::Sampling { k: 100, seed: 0 }] {
            assert_eq!(ens.estimate(&Query::new([t]), backend, &cache).unwrap(), n);
        }
    }
}

fn rel_close(est: f64, truth: f64, tol: f64) -> bool {
    (est - truth).abs() <= tol * truth.max(1.0)
}

#[test]
fn saturated_groups_are_exact_on_every_query() {
    let cache = PlanCache::default();
    for seed in 0..3 {
        let s = toy_schema(&[(0, 1)], 2, 3, 30, 10 + seed);
        let ens = build_ensemble(&s, &exact_opts(2, StructureMethod::Saturated, 0.0), Exec::default()).unwrap();
        assert_eq!(ens.groups.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let q = random_query(&s, &mut rng, 2);
            let truth = true_cardinality(&s, &q).unwrap() as f64;
            let est = ens.estimate(&q, Backend::CompiledVe, &cache).unwrap();
            assert!(rel_close(est, truth, 1e-6), "{q:?}: {est} vs {truth}");
        }
    }
}

#[test]
fn saturated_three_table_group_is_exact() {
    let cache = PlanCache::default();
    // star and chain shapes exercise both inbound and per-edge reciprocal weights
    for edges in [vec![(0, 1), (1, 2)], vec![(0, 1), (0, 2)]] {
        let s = toy_schema(&edges, 1, 3, 12, 4);
        let ens = build_ensemble(&s, &exact_opts(3, StructureMethod::Saturated, 0.0), Exec::default()).unwrap();
        assert_eq!(ens.groups.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let q = random_query(&s, &mut rng, 3);
            let truth = true_cardinality(&s, &q).unwrap() as f64;
            let est = ens.estimate(&q, Backend::CompiledVe, &cache).unwrap();
            assert!(rel_close(est, truth, 1e-6), "{q:?}: {est} vs {truth}");
        }
    }
}

#[test]
fn one_group_without_outbound_fanouts_is_size_times_probability() {
    let s = toy_schema(&[(0, 1)], 2, 3, 30, 6);
    let ens = build_ensemble(&s, &exact_opts(2, StructureMethod::ChowLiu, 1.0), Exec::default()).unwrap();
    let g = &ens.groups[0];
    let bn = &g.bn;
    let q = Query::new(["t0", "t1"]).with_region("t0", "a0", Region::new(vec![0, 2])).with_region(
        "t1",
        "a1",
        Region::new(vec![1]),
    );
    let mut ev = Evidence::new(bn.len());
    ev.restrict(bn.attr_index("t0.a0").unwrap(), Region::new(vec![0, 2]));
    ev.restrict(bn.attr_index("t1.a1").unwrap(), Region::new(vec![1]));
    for t in ["t0", "t1"] {
        let v = bn.attr_index(&format!("__in.{t}")).unwrap();
        ev.restrict(v, Region::new(bn.attrs()[v].codes_in_range(1.0, f64::INFINITY)));
    }
    let p = brute_force_prob(bn, &ev, 1e7 as u128).unwrap();
    let est = ens.estimate(&q, Backend::CompiledVe, &PlanCache::default()).unwrap();
    assert!((est - g.full_join_size as f64 * p).abs() <= 1e-9 * est.max(1.0));
}

/// Independent evaluation of the multi-group estimate for singleton groups: per group,
/// enumerate the joint, keep assignments inside the query regions and weight them by
/// `max(v, 1)` for outbound fanouts toward other query tables; scale by the full join
/// size computed from raw key matches.
fn singleton_oracle(s: &JoinSchema, ens: &EnsembleModel, q: &Query) -> f64 {
    let qt: Vec<usize> = q.tables.iter().map(|t| s.table_index(t).unwrap()).collect();
    let mut d = 0;
    let mut product = 1.0;
    for &t in &qt {
        let g = &ens.groups[ens.group_of(t)];
        assert_eq!(g.members, vec![t]);
        let bn = &g.bn;
        let cards = bn.domain_sizes();
        let mut x = vec![0u32; cards.len()];
        let mut mass = 0.0;
        loop {
            let mut w = 1.0;
            for (v, a) in bn.attrs().iter().enumerate() {
                if let Some((tab, attr)) = a.name.split_once('.').filter(|(tab, _)| !tab.starts_with("__")) {
                    if let Some(r) = q.region(tab, attr) {
                        if !r.contains(x[v]) {
                            w = 0.0;
                        }
                    }
                } else if let Some(rest) = a.name.strip_prefix("__out.") {
                    let (_, to) = rest.split_once('.').unwrap();
                    if q.tables.contains(to) {
                        w *= a.numeric_value(x[v]).unwrap().max(1.0);
                    }
                }
            }
            if w > 0.0 {
                mass += w * bn.joint(&x);
            }
            let mut i = 0;
            while i < x.len() {
                x[i] += 1;
                if (x[i] as usize) < cards[i] {
                    break;
                }
                x[i] = 0;
                i += 1;
            }
            if i == x.len() {
                break;
            }
        }
        d += 1;
        product *= s.tables[t].table.row_count() as f64 * mass;
    }
    // |V|: root-side table size times mean max(matches, 1) along edges directed away
    let tree = s.tree();
    let (bfs, _) = tree.rooted(s.meta.root_index());
    let root = *bfs.iter().find(|t| qt.contains(t)).unwrap();
    let mut size = s.tables[root].table.row_count() as f64;
    let mut stack = vec![(root, usize::MAX)];
    while let Some((v, from)) = stack.pop() {
        for &(w, e) in tree.neighbors(v) {
            if w == from || !qt.contains(&w) {
                continue;
            }
            let (kv, kw) = s.edge_keys(e, v);
            let total: f64 = kv
                .iter()
                .map(|k| k.map_or(0, |k| kw.iter().filter(|&&x| x == Some(k)).count()).max(1) as f64)
                .sum();
            size *= total / kv.len() as f64;
            stack.push((w, v));
        }
    }
    size.powi(1 - d) * product
}

#[test]
fn multi_group_estimate_matches_enumeration_oracle() {
    let cache = PlanCache::default();
    for (i, edges) in [vec![(0, 1), (1, 2)], vec![(0, 1), (0, 2)], vec![(1, 0), (1, 2)]].into_iter().enumerate() {
        let s = toy_schema(&edges, 2, 3, 20, 30 + i as u64);
        let ens = build_ensemble(&s, &exact_opts(1, StructureMethod::ChowLiu, 1.0), Exec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        for _ in 0..60 {
            let q = random_query(&s, &mut rng, 3);
            let oracle = singleton_oracle(&s, &ens, &q);
            for backend in [Backend::Ve, Backend::CompiledVe] {
                let est = ens.estimate(&q, backend, &cache).unwrap();
                assert!((est - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{q:?}: {est} vs {oracle}");
            }
        }
    }
}

#[test]
fn query_errors() {
    let s = toy_schema(&[(0, 1), (1, 2)], 1, 3, 10, 2);
    let ens = build_ensemble(&s, &exact_opts(2, StructureMethod::ChowLiu, 1.0), Exec::default()).unwrap();
    let cache = PlanCache::default();
    let disconnected = Query::new(["t0", "t2"]);
    assert!(matches!(ens.estimate(&disconnected, Backend::Ve, &cache), Err(crate::Error::Disconnected(_))));
    let unknown = Query::new(["t0"]).with_region("t0", "zz", Region::new(vec![0]));
    assert!(matches!(ens.estimate(&unknown, Backend::Ve, &cache), Err(crate::Error::UnknownAttribute { .. })));
    assert!(ens.estimate(&Query::new(["nope"]), Backend::Ve, &cache).is_err());
    let empty = Query::new(["t0"]).with_region("t0", "a0", Region::new(vec![]));
    assert_eq!(ens.estimate(&empty, Backend::Ve, &cache).unwrap(), 0.0);
}

#[test]
fn persistence_round_trip_is_byte_identical() {
    let s = toy_schema(&[(0, 1), (1, 2), (1, 3)], 2, 3, 20, 7);
    let opts = EnsembleOptions { budget: 2, sample_size: Some(40), seed: 5, ..EnsembleOptions::default() };
    let ens = build_ensemble(&s, &opts, Exec::default()).unwrap();
    let a = ens.to_json().unwrap();
    let back = EnsembleModel::from_json(&a).unwrap();
    assert_eq!(a, back.to_json().unwrap());
    let cache = PlanCache::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let q = random_query(&s, &mut rng, 3);
        let x = ens.estimate(&q, Backend::CompiledVe, &cache).unwrap();
        let y = back.estimate(&q, Backend::CompiledVe, &cache).unwrap();
        assert_eq!(x.to_bits(), y.to_bits());
    }
    let mut bad: serde_json::Value = serde_json::from_str(&a).unwrap();
    bad["format_version"] = 99.into();
    assert!(EnsembleModel::from_json(&bad.to_string()).is_err());
}

#[test]
fn build_is_deterministic_across_exec_modes() {
    let s = toy_schema(&[(0, 1), (1, 2), (2, 3)], 2, 4, 30, 9);
    let opts = EnsembleOptions { budget: 3, sample_size: Some(60), seed: 2, ..EnsembleOptions::default() };
    let a = build_ensemble(&s, &opts, Exec::Sequential).unwrap().to_json().unwrap();
    let b = build_ensemble(&s, &opts, Exec::Parallel).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn update_matches_refit_for_single_tables() {
    let s = toy_schema(&[], 3, 4, 200, 12);
    let full = &s.tables[0].table;
    let n = full.row_count();
    let head = JoinSchema::single(full.slice_rows(0, n / 5));
    let opts = exact_opts(1, StructureMethod::ChowLiu, 0.0);
    let ens = build_ensemble(&head, &opts, Exec::default()).unwrap();
    let updated = ens.update_table("t0", &full.slice_rows(n / 5, n), true).unwrap();
    // refit on the full data with the same structure
    let dag = updated.groups[0].bn.dag().clone();
    let full_group = {
        let cols: Vec<Vec<u32>> = (0..full.n_attrs()).map(|j| full.column(j)).chain([vec![0; n]]).collect();
        EncodedTable::from_columns("t0", updated.groups[0].bn.attrs().to_vec(), &cols).unwrap()
    };
    let refit = crate::params::fit_cpts(&full_group, &dag, 0.0, Exec::default()).unwrap();
    for v in 0..refit.len() {
        for (a, b) in refit.cpt(v).probs().iter().zip(updated.groups[0].bn.cpt(v).probs()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
    assert_eq!(updated.groups[0].full_join_size, n as u128);
    let joined = toy_schema(&[(0, 1)], 1, 3, 10, 1);
    let ens = build_ensemble(&joined, &exact_opts(1, StructureMethod::ChowLiu, 1.0), Exec::default()).unwrap();
    let rows = joined.tables[0].table.slice_rows(0, 1);
    assert!(ens.update_table("t0", &rows, true).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn estimates_are_finite_and_non_negative(
        n in 1usize..=5,
        parents in prop::collection::vec(any::<u64>(), 5),
        budget in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let edges: Vec<(usize, usize)> = (1..n).map(|v| ((parents[v] % v as u64) as usize, v)).collect();
        let s = toy_schema(&edges, 2, 3, 15, seed);
        let opts = EnsembleOptions { budget, sample_size: Some(50), seed, ..EnsembleOptions::default() };
        let ens = build_ensemble(&s, &opts, Exec::Sequential).unwrap();
        let cache = PlanCache::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let q = random_query(&s, &mut rng, 3);
            for backend in [Backend::CompiledVe, Backend::Sampling { k: 200, seed: 1 }] {
                let est = ens.estimate(&q, backend, &cache).unwrap();
                prop_assert!(est.is_finite() && est >= 0.0);
            }
        }
    }
}
