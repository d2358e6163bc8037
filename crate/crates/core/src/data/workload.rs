use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attr::AttrKind;
use super::query::{Query, RawPredicate, RawQuery};
use super::schema::JoinSchema;
use super::truth::true_cardinality;
use crate::{Error, Result};

/// Workload generator parameters. All bounds are inclusive and sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub count: usize,
    /// Number of joined tables per query.
    pub tables: (usize, usize),
    /// Number of filter predicates per query.
    pub predicates: (usize, usize),
    /// Number of values in each IN-list.
    pub in_size: (usize, usize),
    pub seed: u64,
    /// Label every query with its exact cardinality.
    #[serde(default = "yes")]
    pub label: bool,
}

fn yes() -> bool {
    true
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec { count: 100, tables: (1, 1), predicates: (1, 3), in_size: (1, 3), seed: 0, label: true }
    }
}

fn uniform_in(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Random connected subtree of `size` tables, grown from a uniform start table by
/// repeatedly adding a uniform frontier neighbor.
fn random_subtree(schema: &JoinSchema, size: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = schema.tables.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    while chosen.len() < size {
        let frontier: BTreeSet<usize> = chosen
            .iter()
            .flat_map(|&t| schema.tree().neighbors(t).iter().map(|&(w, _)| w))
            .filter(|w| !chosen.contains(w))
            .collect();
        let frontier: Vec<usize> = frontier.into_iter().collect();
        match frontier.choose(rng) {
            Some(&w) => chosen.push(w),
            None => break,
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Generates `spec.count` queries. Each picks a connected set of tables, then a uniform
/// subset of their attributes: binned attributes get a range between two uniform values,
/// categorical ones an IN-list of distinct uniform domain values.
pub fn gen_workload(schema: &JoinSchema, spec: &WorkloadSpec) -> Result<Vec<RawQuery>> {
    if spec.count == 0 {
        return Err(Error::Invalid("workload count must be at least 1".into()));
    }
    let n_tables = schema.tables.len();
    if spec.tables.0 == 0 || spec.tables.0 > spec.tables.1 || spec.tables.0 > n_tables {
        return Err(Error::Invalid(format!(
            "table bounds {:?} do not fit a schema of {n_tables} tables",
            spec.tables
        )));
    }
    if spec.predicates.0 > spec.predicates.1 || spec.in_size.0 == 0 || spec.in_size.0 > spec.in_size.1 {
        return Err(Error::Invalid("predicate or IN-size bounds are inverted or empty".into()));
    }
    let total_attrs: usize = schema.tables.iter().map(|t| t.table.n_attrs()).sum();
    if spec.predicates.0 > total_attrs {
        return Err(Error::Invalid(format!(
            "predicate bounds {:?} exceed the {total_attrs} available attributes",
            spec.predicates
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let size = uniform_in(&mut rng, (spec.tables.0, spec.tables.1.min(n_tables)));
        let members = random_subtree(schema, size, &mut rng);
        let mut candidates: Vec<(usize, usize)> = members
            .iter()
            .flat_map(|&t| (0..schema.tables[t].table.n_attrs()).map(move |a| (t, a)))
            .collect();
        if spec.predicates.0 > candidates.len() {
            return Err(Error::Invalid(format!(
                "predicate bounds {:?} exceed the {} attributes of tables {:?}",
                spec.predicates,
                candidates.len(),
                members
            )));
        }
        let k = uniform_in(&mut rng, (spec.predicates.0, spec.predicates.1.min(candidates.len())));
        let (picked, _) = candidates.partial_shuffle(&mut rng, k);
        let mut picked = picked.to_vec();
        picked.sort_unstable();
        let mut predicates = Vec::with_capacity(k);
        for (t, a) in picked {
            let table = &schema.tables[t].table;
            let meta = &table.attrs[a];
            let attr = format!("{}.{}", table.name, meta.name);
            match &meta.kind {
                AttrKind::Binned { edges } => {
                    let (lo, hi) = (edges[0], edges[edges.len() - 1]);
                    let mut v1 = rng.gen_range(lo..=hi);
                    let mut v2 = rng.gen_range(lo..=hi);
                    if v1 > v2 {
                        std::mem::swap(&mut v1, &mut v2);
                    }
                    predicates.push(RawPredicate::Range { attr, lo: v1, hi: v2 });
                }
                AttrKind::Categorical { values } => {
                    let k = uniform_in(&mut rng, (spec.in_size.0.min(values.len()), spec.in_size.1.min(values.len())));
                    let mut vals: Vec<String> = values.choose_multiple(&mut rng, k).cloned().collect();
                    vals.sort_by_key(|v| meta.encode(v));
                    predicates.push(RawPredicate::In { attr, values: vals });
                }
            }
        }
        let mut raw = RawQuery {
            tables: members.iter().map(|&t| schema.tables[t].table.name.clone()).collect(),
            predicates,
            true_card: None,
        };
        if spec.label {
            let q = Query::resolve(&raw, &schema.meta)?;
            raw.true_card = Some(true_cardinality(schema, &q)?);
        }
        out.push(raw);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_star_schema, gen_synthetic, Catalog, StarSpec, SyntheticSpec};

    #[test]
    fn single_table_queries_are_valid() {
        let t = gen_synthetic(&SyntheticSpec { skew: 1.0, correlation: 0.5, domain: 10, scale: 4, rows: 500, seed: 1 })
            .unwrap();
        let schema = JoinSchema::single(t.table);
        let spec = WorkloadSpec { count: 300, predicates: (1, 4), in_size: (1, 4), ..Default::default() };
        let w = gen_workload(&schema, &spec).unwrap();
        assert_eq!(w.len(), 300);
        for q in &w {
            assert!((1..=4).contains(&q.predicates.len()));
            for p in &q.predicates {
                if let RawPredicate::In { attr, values } = p {
                    let meta = schema.meta.attr("synthetic", attr.strip_prefix("synthetic.").unwrap()).unwrap();
                    assert!(values.iter().all(|v| meta.encode(v).is_some()));
                }
            }
            assert!(q.true_card.is_some());
        }
        assert_eq!(w, gen_workload(&schema, &spec).unwrap());
    }

    #[test]
    fn star_queries_touch_bounded_tables() {
        let schema = gen_star_schema(&StarSpec::default()).unwrap();
        let spec = WorkloadSpec { count: 200, tables: (4, 6), predicates: (2, 7), ..Default::default() };
        for q in gen_workload(&schema, &spec).unwrap() {
            assert!((4..=6).contains(&q.tables.len()), "{:?}", q.tables);
            let names: BTreeSet<String> = q.tables.iter().cloned().collect();
            assert!(schema.meta.connected_indices(&names).is_ok());
        }
    }

    #[test]
    fn too_many_predicates_is_error() {
        let t = gen_synthetic(&SyntheticSpec { skew: 0.0, correlation: 0.0, domain: 4, scale: 2, rows: 10, seed: 1 })
            .unwrap();
        let schema = JoinSchema::single(t.table);
        let spec = WorkloadSpec { predicates: (3, 5), ..Default::default() };
        assert!(gen_workload(&schema, &spec).is_err());
    }
}
