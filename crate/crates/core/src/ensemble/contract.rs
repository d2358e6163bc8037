//! Budgeted contraction of the join tree into table groups.

use serde::{Deserialize, Serialize};

use crate::data::SchemaMeta;
use crate::rdc::{merged_group_rdc, DependenceMatrix};
use crate::{Error, Result};

/// One merge: the pass it happened in and the two groups joined (sorted member indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub pass: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    /// Sorted groups, ordered by smallest member.
    pub groups: Vec<Vec<usize>>,
    pub merges: Vec<Merge>,
}

struct GroupEdge {
    edge: usize,
    a: usize,
    b: usize,
    weight: f64,
    tie: (String, String),
}

/// Contracts the join tree so every group holds at most `budget` tables. Pass `k'` walks
/// the edges by descending weight and merges the endpoint groups whenever their union
/// has exactly `k'` tables; weights of edges touching a merged group are recomputed from
/// the table-level matrix.
pub fn contract_join_tree(meta: &SchemaMeta, m: &DependenceMatrix, budget: usize) -> Result<Contraction> {
    if budget == 0 {
        return Err(Error::Invalid("budget must be >= 1".into()));
    }
    let n = meta.tables.len();
    if m.len() != n {
        return Err(Error::Invalid(format!("dependence matrix has {} tables, schema has {n}", m.len())));
    }
    let tree = meta.tree()?;
    let mut group_of: Vec<usize> = (0..n).collect();
    let mut groups: Vec<Vec<usize>> = (0..n).map(|t| vec![t]).collect();
    let mut edges: Vec<GroupEdge> = tree
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| {
            let (x, y) = (&meta.tables[a].name, &meta.tables[b].name);
            let tie = if x <= y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
            GroupEdge { edge: e, a, b, weight: m.get(a, b), tie }
        })
        .collect();
    let mut merges = Vec::new();
    for pass in 2..=budget {
        edges.sort_by(|x, y| y.weight.total_cmp(&x.weight).then_with(|| x.tie.cmp(&y.tie)));
        let order: Vec<usize> = edges.iter().map(|e| e.edge).collect();
        for e in order {
            let ge = edges.iter().find(|g| g.edge == e).unwrap();
            let (ga, gb) = (group_of[ge.a], group_of[ge.b]);
            if ga == gb || groups[ga].len() + groups[gb].len() != pass {
                continue;
            }
            let (keep, gone) = (ga.min(gb), ga.max(gb));
            merges.push(Merge { pass, left: groups[ga].clone(), right: groups[gb].clone(), weight: ge.weight });
            let moved = std::mem::take(&mut groups[gone]);
            for &t in &moved {
                group_of[t] = keep;
            }
            groups[keep].extend(moved);
            groups[keep].sort_unstable();
            for g in edges.iter_mut() {
                let (x, y) = (group_of[g.a], group_of[g.b]);
                if x != y && (x == keep || y == keep) {
                    g.weight = merged_group_rdc(m, &groups[x], &groups[y])?;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    groups.sort();
    Ok(Contraction { groups, merges })
}
