//! Join-row attributes: member data columns plus fanout counts.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::join::{GroupJoin, JoinSample, ABSENT};
use crate::data::{AttrKind, AttributeMeta, EncodedTable, JoinSchema};
use crate::{Error, Result};

/// Fanout values up to this bound keep their own code; larger ones share geometric
/// buckets (ratio 2) represented by the bucket mean.
pub const FANOUT_EXACT_LIMIT: u128 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FanoutKind {
    /// Rows of the group join containing the member's tuple (0 when absent).
    Inbound { table: String },
    /// Rows on `to`'s side of an internal edge attached to `from`'s tuple.
    Edge { from: String, to: String },
    /// Rows of the neighbor group's join matching `from`'s key over a cross-group edge.
    Outbound { from: String, to: String, neighbor_group: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FanoutAttr {
    pub name: String,
    #[serde(flatten)]
    pub kind: FanoutKind,
}

pub fn inbound_name(t: &str) -> String {
    format!("__in.{t}")
}

pub fn edge_name(from: &str, to: &str) -> String {
    format!("__edge.{from}.{to}")
}

pub fn outbound_name(from: &str, to: &str) -> String {
    format!("__out.{from}.{to}")
}

pub fn data_name(t: &str, a: &str) -> String {
    format!("{t}.{a}")
}

fn bucket(v: u128) -> u32 {
    // bucket b covers [LIMIT * 2^b, LIMIT * 2^(b+1))
    let mut b = 0;
    let mut lo = FANOUT_EXACT_LIMIT;
    while v >= lo * 2 {
        lo *= 2;
        b += 1;
    }
    b
}

/// Categorical attribute over the observed fanout values, and each value's code.
pub fn fanout_domain(name: &str, values: &[u128]) -> (AttributeMeta, Vec<u32>) {
    let mut exact: BTreeMap<u128, ()> = BTreeMap::new();
    let mut buckets: BTreeMap<u32, (f64, u64)> = BTreeMap::new();
    for &v in values {
        if v <= FANOUT_EXACT_LIMIT {
            exact.insert(v, ());
        } else {
            let e = buckets.entry(bucket(v)).or_default();
            e.0 += v as f64;
            e.1 += 1;
        }
    }
    let mut labels: Vec<String> = exact.keys().map(|v| v.to_string()).collect();
    let mut exact_code: HashMap<u128, u32> = HashMap::new();
    for (i, v) in exact.keys().enumerate() {
        exact_code.insert(*v, i as u32);
    }
    let mut bucket_code: HashMap<u32, u32> = HashMap::new();
    for (b, (sum, n)) in &buckets {
        bucket_code.insert(*b, labels.len() as u32);
        labels.push(format!("{}", sum / *n as f64));
    }
    let codes = values
        .iter()
        .map(|&v| if v <= FANOUT_EXACT_LIMIT { exact_code[&v] } else { bucket_code[&bucket(v)] })
        .collect();
    let attr = AttributeMeta { name: name.to_string(), kind: AttrKind::Categorical { values: labels }, nullable: false };
    (attr, codes)
}

/// A cross-group join edge leaving the group: `from` is a member, `to` is in `neighbor_group`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossEdge {
    pub from: usize,
    pub to: usize,
    pub edge: usize,
    pub neighbor_group: usize,
    pub neighbor_members: Vec<usize>,
}

/// Per-key count of the neighbor group's join rows containing a matching `to` tuple.
pub(crate) fn outbound_counts(schema: &JoinSchema, c: &CrossEdge) -> Result<Vec<u128>> {
    let h = GroupJoin::new(schema, &c.neighbor_members)?;
    let (kf, kt) = schema.edge_keys(c.edge, c.from);
    let mut by_key: HashMap<u32, u128> = HashMap::new();
    for (bi, k) in kt.iter().enumerate() {
        if let Some(k) = k {
            *by_key.entry(*k).or_default() += h.inbound(c.to, bi);
        }
    }
    Ok(kf.iter().map(|k| k.and_then(|k| by_key.get(&k).copied()).unwrap_or(0)).collect())
}

/// Data attributes of the members, as `table.attr`; nullable when `nullable`.
pub(crate) fn member_attrs(schema: &JoinSchema, members: &[usize], nullable: bool) -> Vec<AttributeMeta> {
    let mut attrs = Vec::new();
    for &t in members {
        let tm = &schema.meta.tables[t];
        for a in &tm.attrs {
            let mut m = a.clone();
            m.name = data_name(&tm.name, &a.name);
            if nullable && !m.nullable {
                m = m.with_absent();
            }
            attrs.push(m);
        }
    }
    attrs
}

fn data_columns(schema: &JoinSchema, sample: &JoinSample, attrs: &[AttributeMeta]) -> Vec<Vec<u32>> {
    let mut cols = Vec::new();
    let mut a = 0;
    for (p, &t) in sample.members.iter().enumerate() {
        let table = &schema.tables[t].table;
        for j in 0..table.n_attrs() {
            let absent = attrs[a].absent_code().unwrap_or(0);
            cols.push(
                sample
                    .rows
                    .iter()
                    .map(|r| if r[p] == ABSENT { absent } else { table.code(r[p] as usize, j) })
                    .collect(),
            );
            a += 1;
        }
    }
    cols
}

/// Join rows with member data attributes only (absent sides coded as absent).
pub fn join_table(schema: &JoinSchema, sample: &JoinSample) -> Result<EncodedTable> {
    let nullable = sample.members.len() > 1;
    let attrs = member_attrs(schema, &sample.members, nullable);
    let cols = data_columns(schema, sample, &attrs);
    EncodedTable::from_columns("join", attrs, &cols)
}

/// Join rows with member data attributes, then `__in.T` for every member, `__edge.X.Y` for
/// every member with two or more internal edges, and `__out.A.B` per cross edge.
pub fn compute_fanout_columns(
    schema: &JoinSchema,
    sample: &JoinSample,
    cross: &[CrossEdge],
) -> Result<(EncodedTable, Vec<FanoutAttr>)> {
    let g = GroupJoin::new(schema, &sample.members)?;
    let name = |t: usize| schema.meta.tables[t].name.clone();
    let nullable = sample.members.len() > 1;
    let mut attrs = member_attrs(schema, &sample.members, nullable);
    let mut cols = data_columns(schema, sample, &attrs);
    let mut fanouts = Vec::new();
    let mut push = |attrs: &mut Vec<AttributeMeta>, cols: &mut Vec<Vec<u32>>, f: FanoutAttr, values: Vec<u128>| {
        let (attr, codes) = fanout_domain(&f.name, &values);
        attrs.push(attr);
        cols.push(codes);
        fanouts.push(f);
    };
    for (p, &t) in sample.members.iter().enumerate() {
        let values = sample.rows.iter().map(|r| if r[p] == ABSENT { 0 } else { g.inbound(t, r[p] as usize) }).collect();
        let f = FanoutAttr { name: inbound_name(&name(t)), kind: FanoutKind::Inbound { table: name(t) } };
        push(&mut attrs, &mut cols, f, values);
    }
    for (p, &t) in sample.members.iter().enumerate() {
        let nbrs = &g.nbrs[&t];
        if nbrs.len() < 2 {
            continue;
        }
        for &(y, _) in nbrs {
            let values =
                sample.rows.iter().map(|r| if r[p] == ABSENT { 0 } else { g.raw_fanout(t, y, r[p] as usize).max(1) }).collect();
            let f = FanoutAttr { name: edge_name(&name(t), &name(y)), kind: FanoutKind::Edge { from: name(t), to: name(y) } };
            push(&mut attrs, &mut cols, f, values);
        }
    }
    for c in cross {
        let p = g.position(c.from).ok_or_else(|| Error::Invalid(format!("cross edge starts outside the group at `{}`", name(c.from))))?;
        let counts = outbound_counts(schema, c)?;
        let values = sample.rows.iter().map(|r| if r[p] == ABSENT { 0 } else { counts[r[p] as usize] }).collect();
        let f = FanoutAttr {
            name: outbound_name(&name(c.from), &name(c.to)),
            kind: FanoutKind::Outbound { from: name(c.from), to: name(c.to), neighbor_group: c.neighbor_group },
        };
        push(&mut attrs, &mut cols, f, values);
    }
    let table = EncodedTable::from_columns("group", attrs, &cols)?;
    Ok((table, fanouts))
}
