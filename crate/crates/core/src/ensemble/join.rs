//! Full outer joins over a connected set of tables.
//!
//! A row of the outer join picks one tuple from each table of a connected subset `S` of the
//! members such that adjacent tuples match on their join keys, and every tuple on the
//! boundary of `S` has no partner in the missing neighbor. Sizes and per-tuple
//! multiplicities come from dynamic programming over the member tree; sampling draws rows
//! uniformly without materializing the join.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::JoinSchema;
use crate::{Error, Result};

/// Marker for a table that does not take part in a join row.
pub const ABSENT: u32 = u32::MAX;

/// Per-key index of the tuples of `Y` reached over a directed edge, with cumulative
/// subtree weights for proportional sampling.
struct KeyIndex {
    by_key: HashMap<u32, (Vec<u32>, Vec<u128>)>,
}

pub(crate) struct GroupJoin<'a> {
    schema: &'a JoinSchema,
    pub members: Vec<usize>,
    pos: HashMap<usize, usize>,
    /// Member tree rooted at `order[0]`: parent `(table, edge)` per member position.
    pub order: Vec<usize>,
    pub parent: HashMap<usize, (usize, usize)>,
    pub children: HashMap<usize, Vec<(usize, usize)>>,
    /// `sums[(X, Y)][x]`: number of outer-join rows of Y's side (away from X) attached to
    /// x, 0 when x has no partner in Y.
    sums: HashMap<(usize, usize), Vec<u128>>,
    /// Neighbors of each member inside the group, with edge ids.
    pub nbrs: HashMap<usize, Vec<(usize, usize)>>,
}

impl<'a> GroupJoin<'a> {
    /// `members` must be a connected set of table indices. The member closest to the schema
    /// root becomes the DP root.
    pub fn new(schema: &'a JoinSchema, members: &[usize]) -> Result<Self> {
        let mut members = members.to_vec();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() || !schema.tree().is_connected(&members) {
            let names = members.iter().map(|&t| schema.meta.tables[t].name.clone()).collect();
            return Err(Error::Disconnected(names));
        }
        let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let (bfs, _) = schema.tree().rooted(schema.meta.root_index());
        let root = *bfs.iter().find(|t| pos.contains_key(t)).unwrap();
        let mut nbrs: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
        for &t in &members {
            let ns = schema.tree().neighbors(t).iter().copied().filter(|(w, _)| pos.contains_key(w)).collect();
            nbrs.insert(t, ns);
        }
        let mut order = vec![root];
        let mut parent = HashMap::new();
        let mut children: HashMap<usize, Vec<(usize, usize)>> = members.iter().map(|&t| (t, Vec::new())).collect();
        let mut seen = std::collections::HashSet::from([root]);
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            i += 1;
            for &(w, e) in &nbrs[&v] {
                if seen.insert(w) {
                    parent.insert(w, (v, e));
                    children.get_mut(&v).unwrap().push((w, e));
                    order.push(w);
                }
            }
        }
        let mut g = GroupJoin { schema, members, pos, order, parent, children, sums: HashMap::new(), nbrs };
        let directed: Vec<(usize, usize, usize)> =
            g.members.iter().flat_map(|&x| g.nbrs[&x].iter().map(move |&(y, e)| (x, y, e))).collect();
        for (x, y, e) in directed {
            g.compute_sum(x, y, e);
        }
        Ok(g)
    }

    pub fn position(&self, t: usize) -> Option<usize> {
        self.pos.get(&t).copied()
    }

    fn compute_sum(&mut self, x: usize, y: usize, e: usize) {
        if self.sums.contains_key(&(x, y)) {
            return;
        }
        let onward: Vec<(usize, usize)> = self.nbrs[&y].iter().copied().filter(|&(z, _)| z != x).collect();
        for &(z, ez) in &onward {
            self.compute_sum(y, z, ez);
        }
        let (kx, ky) = self.schema.edge_keys(e, x);
        let mut by_key: HashMap<u32, u128> = HashMap::new();
        for (yi, k) in ky.iter().enumerate() {
            if let Some(k) = k {
                let away: u128 = onward.iter().map(|&(z, _)| self.sums[&(y, z)][yi].max(1)).product();
                *by_key.entry(*k).or_default() += away;
            }
        }
        let sums = kx.iter().map(|k| k.and_then(|k| by_key.get(&k).copied()).unwrap_or(0)).collect();
        self.sums.insert((x, y), sums);
    }

    /// Outer-join rows attached to `x` on Y's side, or 0 if x has no partner there.
    pub fn raw_fanout(&self, x: usize, y: usize, xi: usize) -> u128 {
        self.sums[&(x, y)][xi]
    }

    /// Number of outer-join rows containing tuple `xi` of table `t`.
    pub fn inbound(&self, t: usize, xi: usize) -> u128 {
        self.nbrs[&t].iter().map(|&(y, _)| self.sums[&(t, y)][xi].max(1)).product()
    }

    fn down(&self, t: usize, xi: usize) -> u128 {
        self.children[&t].iter().map(|&(c, _)| self.sums[&(t, c)][xi].max(1)).product()
    }

    /// Tuples that start a row at `t` (no partner toward the root) with their row counts.
    fn tops(&self, t: usize) -> Vec<(u32, u128)> {
        let rows = self.schema.tables[t].table.row_count();
        match self.parent.get(&t) {
            None => (0..rows).map(|i| (i as u32, self.down(t, i))).collect(),
            Some(&(p, _)) => (0..rows)
                .filter(|&i| self.sums[&(t, p)][i] == 0)
                .map(|i| (i as u32, self.down(t, i)))
                .collect(),
        }
    }

    /// Exact size of the full outer join.
    pub fn size(&self) -> u128 {
        self.members.iter().map(|&t| self.tops(t).iter().map(|&(_, w)| w).sum::<u128>()).sum()
    }

    fn key_index(&self, t: usize, c: usize, e: usize) -> KeyIndex {
        let (_, kc) = self.schema.edge_keys(e, t);
        let mut by_key: HashMap<u32, (Vec<u32>, Vec<u128>)> = HashMap::new();
        for (ci, k) in kc.iter().enumerate() {
            if let Some(k) = k {
                let w = self.down(c, ci);
                let entry = by_key.entry(*k).or_default();
                let cum = entry.1.last().copied().unwrap_or(0) + w;
                entry.0.push(ci as u32);
                entry.1.push(cum);
            }
        }
        KeyIndex { by_key }
    }

    fn indexes(&self) -> HashMap<usize, KeyIndex> {
        self.members
            .iter()
            .filter_map(|&c| self.parent.get(&c).map(|&(p, e)| (c, self.key_index(p, c, e))))
            .collect()
    }

    fn key_of(&self, t: usize, e: usize, xi: usize) -> Option<u32> {
        self.schema.edge_keys(e, t).0[xi]
    }

    /// Every row, in a deterministic order. Rows hold one tuple index per member (in
    /// `members` order) or [`ABSENT`].
    pub fn materialize(&self) -> Vec<Vec<u32>> {
        let idx = self.indexes();
        let mut out = Vec::new();
        for &t in &self.order {
            for (xi, _) in self.tops(t) {
                for part in self.expand(t, xi as usize, &idx) {
                    let mut row = vec![ABSENT; self.members.len()];
                    for (p, i) in part {
                        row[p] = i;
                    }
                    out.push(row);
                }
            }
        }
        out
    }

    fn expand(&self, t: usize, xi: usize, idx: &HashMap<usize, KeyIndex>) -> Vec<Vec<(usize, u32)>> {
        let mut acc = vec![vec![(self.pos[&t], xi as u32)]];
        for &(c, e) in &self.children[&t] {
            let matches = self.key_of(t, e, xi).and_then(|k| idx[&c].by_key.get(&k));
            let Some((list, _)) = matches else { continue };
            let options: Vec<Vec<(usize, u32)>> =
                list.iter().flat_map(|&ci| self.expand(c, ci as usize, idx)).collect();
            acc = acc
                .iter()
                .flat_map(|a| {
                    options.iter().map(move |o| {
                        let mut r = a.clone();
                        r.extend_from_slice(o);
                        r
                    })
                })
                .collect();
        }
        acc
    }

    /// `n` rows drawn uniformly with replacement.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<u32>> {
        let idx = self.indexes();
        let mut tops: Vec<(usize, u32)> = Vec::new();
        let mut cum: Vec<u128> = Vec::new();
        let mut total = 0u128;
        for &t in &self.order {
            for (xi, w) in self.tops(t) {
                total += w;
                tops.push((t, xi));
                cum.push(total);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u = rng.gen_range(0..total);
            let (t, xi) = tops[cum.partition_point(|&c| c <= u)];
            let mut row = vec![ABSENT; self.members.len()];
            let mut stack = vec![(t, xi as usize)];
            while let Some((v, vi)) = stack.pop() {
                row[self.pos[&v]] = vi as u32;
                for &(c, e) in &self.children[&v] {
                    let Some((list, cw)) = self.key_of(v, e, vi).and_then(|k| idx[&c].by_key.get(&k)) else {
                        continue;
                    };
                    let u = rng.gen_range(0..*cw.last().unwrap());
                    stack.push((c, list[cw.partition_point(|&x| x <= u)] as usize));
                }
            }
            out.push(row);
        }
        out
    }
}

/// Rows of a (possibly sampled) full outer join.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinSample {
    /// Member table indices, ascending.
    pub members: Vec<usize>,
    /// One entry per member per row (tuple index or [`ABSENT`]).
    pub rows: Vec<Vec<u32>>,
    /// Exact size of the full outer join.
    pub full_size: u128,
    pub exact: bool,
}

/// Materializes the full outer join of `members` when `sample_size` is `None` or at least
/// the join size, otherwise draws `sample_size` uniform rows.
pub fn sample_full_join(
    schema: &JoinSchema,
    members: &[usize],
    sample_size: Option<usize>,
    seed: u64,
) -> Result<JoinSample> {
    if sample_size == Some(0) {
        return Err(Error::Invalid("sample size must be >= 1".into()));
    }
    let g = GroupJoin::new(schema, members)?;
    let full_size = g.size();
    if full_size == 0 {
        let names: Vec<String> = g.members.iter().map(|&t| schema.meta.tables[t].name.clone()).collect();
        return Err(Error::ZeroUsableRows(names.join(", ")));
    }
    let exact = sample_size.is_none_or(|n| n as u128 >= full_size);
    let rows = if exact { g.materialize() } else { g.sample(sample_size.unwrap(), seed) };
    Ok(JoinSample { members: g.members.clone(), rows, full_size, exact })
}
