use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::Dag;
use crate::data::EncodedTable;
use crate::exec::Exec;
use crate::params::{cpt_size, family_counts, DEFAULT_ALPHA, DEFAULT_CPT_BUDGET};
use crate::{Error, Result};

pub const DEFAULT_MAX_PARENTS: usize = 3;
const MAX_ITERATIONS: usize = 10_000;

/// Expert knowledge over node indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructureConstraints {
    pub forced: Vec<(usize, usize)>,
    pub forbidden: Vec<(usize, usize)>,
    pub roots: Vec<usize>,
}

/// Constraints file: `{forced: [[p, c]...], forbidden: [[p, c]...], roots: [...]}` by name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintsFile {
    #[serde(default)]
    pub forced: Vec<(String, String)>,
    #[serde(default)]
    pub forbidden: Vec<(String, String)>,
    #[serde(default)]
    pub roots: Vec<String>,
}

impl ConstraintsFile {
    /// Maps names to indices via `lookup`. With `strict`, unknown names are an error;
    /// otherwise any entry naming an unknown attribute is dropped.
    pub fn resolve(&self, lookup: impl Fn(&str) -> Option<usize>, strict: bool) -> Result<StructureConstraints> {
        let get = |name: &str| -> Result<Option<usize>> {
            match lookup(name) {
                Some(i) => Ok(Some(i)),
                None if strict => Err(Error::UnknownAttribute { attr: name.into(), context: "constraints".into() }),
                None => Ok(None),
            }
        };
        let pairs = |list: &[(String, String)]| -> Result<Vec<(usize, usize)>> {
            let mut out = Vec::new();
            for (p, c) in list {
                if let (Some(p), Some(c)) = (get(p)?, get(c)?) {
                    out.push((p, c));
                }
            }
            Ok(out)
        };
        let mut roots = Vec::new();
        for r in &self.roots {
            if let Some(i) = get(r)? {
                roots.push(i);
            }
        }
        Ok(StructureConstraints { forced: pairs(&self.forced)?, forbidden: pairs(&self.forbidden)?, roots })
    }
}

impl StructureConstraints {
    pub fn validate(&self, n: usize) -> Result<()> {
        let all = self.forced.iter().chain(&self.forbidden).flat_map(|&(a, b)| [a, b]);
        if let Some(bad) = all.chain(self.roots.iter().copied()).find(|&v| v >= n) {
            return Err(Error::Constraints(format!("node {bad} is out of range")));
        }
        if let Some(e) = self.forced.iter().find(|e| self.forbidden.contains(e)) {
            return Err(Error::Constraints(format!("edge {} -> {} is both forced and forbidden", e.0, e.1)));
        }
        if let Some(e) = self.forced.iter().find(|(_, c)| self.roots.contains(c)) {
            return Err(Error::Constraints(format!("forced edge {} -> {} enters a forced root", e.0, e.1)));
        }
        Dag::from_edges(n, &self.forced).map_err(|_| Error::Constraints("forced edges contain a cycle".into()))?;
        Ok(())
    }

    fn forbids(&self, p: usize, c: usize) -> bool {
        self.forbidden.contains(&(p, c))
    }
}

/// Empirical mutual information in nats between two code columns.
pub fn mutual_information(table: &EncodedTable, i: usize, j: usize) -> f64 {
    let n = table.row_count();
    if n == 0 || i == j {
        return 0.0;
    }
    let (di, dj) = (table.attrs[i].domain_size(), table.attrs[j].domain_size());
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let (mut mi_, mut mj) = (vec![0u64; di], vec![0u64; dj]);
    for row in table.rows() {
        *joint.entry((row[i], row[j])).or_default() += 1;
        mi_[row[i] as usize] += 1;
        mj[row[j] as usize] += 1;
    }
    let nf = n as f64;
    let mut entries: Vec<_> = joint.into_iter().collect();
    entries.sort_unstable();
    let mi: f64 = entries
        .iter()
        .map(|&((a, b), c)| {
            let c = c as f64;
            c / nf * (c * nf / (mi_[a as usize] as f64 * mj[b as usize] as f64)).ln()
        })
        .sum();
    mi.max(0.0)
}

/// Symmetric `n x n` MI matrix (row-major), pairs computed under `exec`.
pub fn mi_matrix(table: &EncodedTable, exec: Exec) -> Vec<f64> {
    let n = table.n_attrs();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals = exec.map(&pairs, |&(i, j)| mutual_information(table, i, j));
    let mut m = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        m[i * n + j] = v;
        m[j * n + i] = v;
    }
    m
}

/// Chooses the tree root: a forced root, else node 0, else the smallest node without a
/// forced parent.
fn choose_root(n: usize, c: &StructureConstraints) -> Result<usize> {
    let has_forced_parent = |v: usize| c.forced.iter().any(|&(_, ch)| ch == v);
    let roots: BTreeSet<usize> = c.roots.iter().copied().collect();
    match roots.len() {
        0 => (0..n)
            .find(|&v| !has_forced_parent(v))
            .ok_or_else(|| Error::Constraints("every node has a forced parent".into())),
        1 => Ok(*roots.iter().next().unwrap()),
        _ => Err(Error::Constraints(format!("a tree has one root but {} were forced", roots.len()))),
    }
}

/// Maximum-weight spanning tree over pairwise MI, grown from the root so every edge is
/// directed away from it. Forced edges are taken as soon as their parent is in the tree,
/// forbidden directions are never used, ties go to the smallest `(parent, child)` pair.
pub fn chow_liu(table: &EncodedTable, constraints: &StructureConstraints, exec: Exec) -> Result<Dag> {
    let n = table.n_attrs();
    if n < 2 {
        return Err(Error::Invalid("structure learning needs at least 2 attributes".into()));
    }
    constraints.validate(n)?;
    let mut forced_parent = vec![None; n];
    for &(p, c) in &constraints.forced {
        if forced_parent[c].replace(p).is_some() {
            return Err(Error::Constraints(format!("node {c} has two forced parents; not a tree")));
        }
    }
    let root = choose_root(n, constraints)?;
    if forced_parent[root].is_some() {
        return Err(Error::Constraints(format!("root {root} has a forced parent")));
    }
    let w = mi_matrix(table, exec);
    let mut in_tree = vec![false; n];
    in_tree[root] = true;
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for p in (0..n).filter(|&p| in_tree[p]) {
            for c in (0..n).filter(|&c| !in_tree[c]) {
                let score = match forced_parent[c] {
                    Some(fp) if fp == p => f64::INFINITY,
                    Some(_) => continue,
                    None if constraints.forbids(p, c) => continue,
                    None => w[p * n + c],
                };
                if best.is_none_or(|(b, bp, bc)| score > b || (score == b && (p, c) < (bp, bc))) {
                    best = Some((score, p, c));
                }
            }
        }
        let (_, p, c) = best.ok_or_else(|| Error::Constraints("forbidden edges disconnect the tree".into()))?;
        in_tree[c] = true;
        edges.push((p, c));
    }
    Dag::from_edges(n, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    #[default]
    Bic,
}

/// BIC family score with smoothed log-likelihood:
/// `sum c(x,pa) ln((c + a) / (n_pa + a r)) - ln(N)/2 (r - 1) q`.
fn family_bic(table: &EncodedTable, child: usize, parents: &[usize], alpha: f64) -> f64 {
    let r = table.attrs[child].domain_size();
    let counts = family_counts(table, child, parents);
    let q = counts.len() / r;
    let mut ll = 0.0;
    for col in counts.chunks(r) {
        let npa: u64 = col.iter().sum();
        if npa == 0 {
            continue;
        }
        let denom = npa as f64 + alpha * r as f64;
        for &c in col.iter().filter(|&&c| c > 0) {
            ll += c as f64 * ((c as f64 + alpha) / denom).ln();
        }
    }
    let n = table.row_count().max(1) as f64;
    ll - 0.5 * n.ln() * ((r - 1) * q) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Add,
    Remove,
    Reverse,
}

/// Greedy search over DAGs from the forced edges: each step applies the single edge
/// addition, removal or reversal that most improves the score.
pub fn greedy_hill_climb(
    table: &EncodedTable,
    constraints: &StructureConstraints,
    max_parents: usize,
    score: Score,
) -> Result<Dag> {
    let Score::Bic = score;
    let n = table.n_attrs();
    if max_parents == 0 {
        return Err(Error::Invalid("max_parents must be >= 1".into()));
    }
    constraints.validate(n)?;
    let mut dag = Dag::from_edges(n, &constraints.forced)?;
    if dag.max_in_degree() > max_parents {
        return Err(Error::Constraints("forced edges exceed max_parents".into()));
    }
    let mut cache: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
    let mut local = |v: usize, ps: &[usize]| -> f64 {
        *cache.entry((v, ps.to_vec())).or_insert_with(|| family_bic(table, v, ps, DEFAULT_ALPHA))
    };
    let fits_budget = |v: usize, ps: &[usize]| {
        let cards: Vec<usize> = ps.iter().map(|&p| table.attrs[p].domain_size()).collect();
        cpt_size(table.attrs[v].domain_size(), &cards).is_some_and(|s| s <= DEFAULT_CPT_BUDGET)
    };
    let with = |ps: &[usize], x: usize| {
        let mut v = ps.to_vec();
        v.push(x);
        v.sort_unstable();
        v
    };
    let without = |ps: &[usize], x: usize| ps.iter().copied().filter(|&p| p != x).collect::<Vec<_>>();
    let is_forced = |p: usize, c: usize| constraints.forced.contains(&(p, c));
    let can_enter = |c: usize| !constraints.roots.contains(&c);

    for _ in 0..MAX_ITERATIONS {
        let mut best: Option<(f64, usize, usize, Move)> = None;
        let mut consider = |delta: f64, u: usize, v: usize, m: Move| {
            if delta > 1e-9 && best.is_none_or(|(b, ..)| delta > b) {
                best = Some((delta, u, v, m));
            }
        };
        for u in 0..n {
            for v in 0..n {
                if u == v {
                    continue;
                }
                let pv = dag.parents(v).to_vec();
                if dag.has_edge(u, v) {
                    if is_forced(u, v) {
                        continue;
                    }
                    let removed = without(&pv, u);
                    let d_remove = local(v, &removed) - local(v, &pv);
                    consider(d_remove, u, v, Move::Remove);
                    let pu = dag.parents(u).to_vec();
                    if !constraints.forbids(v, u) && can_enter(u) && pu.len() < max_parents {
                        let mut trial = dag.clone();
                        trial.remove_edge(u, v);
                        let added = with(&pu, v);
                        if !trial.reaches(u, v) && fits_budget(u, &added) {
                            let d = d_remove + local(u, &added) - local(u, &pu);
                            consider(d, u, v, Move::Reverse);
                        }
                    }
                } else if !constraints.forbids(u, v)
                    && can_enter(v)
                    && pv.len() < max_parents
                    && !dag.reaches(v, u)
                {
                    let added = with(&pv, u);
                    if fits_budget(v, &added) {
                        consider(local(v, &added) - local(v, &pv), u, v, Move::Add);
                    }
                }
            }
        }
        match best {
            None => break,
            Some((_, u, v, Move::Add)) => dag.add_edge(u, v)?,
            Some((_, u, v, Move::Remove)) => {
                dag.remove_edge(u, v);
            }
            Some((_, u, v, Move::Reverse)) => {
                dag.remove_edge(u, v);
                dag.add_edge(v, u)?;
            }
        }
    }
    Ok(dag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeMeta;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(cols: Vec<Vec<u32>>, d: usize) -> EncodedTable {
        let attrs = (0..cols.len()).map(|i| AttributeMeta::integer_range(format!("c{i}"), d)).collect();
        EncodedTable::from_columns("t", attrs, &cols).unwrap()
    }

    fn chain(n: usize, seed: u64) -> EncodedTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let a = rng.gen_range(0..4u32);
            let b = if rng.gen_bool(0.9) { a } else { rng.gen_range(0..4) };
            let c = if rng.gen_bool(0.9) { b } else { rng.gen_range(0..4) };
            x.push(a);
            y.push(b);
            z.push(c);
        }
        // column order z, x, y so the path is not the declaration order
        table(vec![z, x, y], 4)
    }

    #[test]
    fn mi_of_fair_copy_is_ln2() {
        let t = table(vec![vec![0, 1, 0, 1], vec![0, 1, 0, 1]], 2);
        assert!((mutual_information(&t, 0, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        let ind = table(vec![vec![0, 0, 1, 1], vec![0, 1, 0, 1]], 2);
        assert!(mutual_information(&ind, 0, 1).abs() < 1e-15);
    }

    #[test]
    fn two_nodes_give_single_edge() {
        let t = table(vec![vec![0, 1, 1], vec![1, 0, 1]], 2);
        let d = chow_liu(&t, &StructureConstraints::default(), Exec::Sequential).unwrap();
        assert_eq!(d.edges(), vec![(0, 1)]);
    }

    #[test]
    fn chain_recovered() {
        let t = chain(100_000, 1);
        let d = chow_liu(&t, &StructureConstraints::default(), Exec::Parallel).unwrap();
        // z=0, x=1, y=2; rooted at z: z -> y -> x
        assert_eq!(d.edges(), vec![(0, 2), (2, 1)]);
    }

    #[test]
    fn forced_and_forbidden_respected() {
        let t = chain(5_000, 2);
        let c = StructureConstraints { forced: vec![(1, 0)], forbidden: vec![], roots: vec![] };
        let d = chow_liu(&t, &c, Exec::Sequential).unwrap();
        assert!(d.has_edge(1, 0));
        assert_eq!(d.edge_count(), 2);
        let c = StructureConstraints { forced: vec![], forbidden: vec![(0, 2), (2, 1)], roots: vec![] };
        let d = chow_liu(&t, &c, Exec::Sequential).unwrap();
        assert!(!d.has_edge(0, 2) && !d.has_edge(2, 1));
        let c = StructureConstraints { forced: vec![], forbidden: vec![], roots: vec![1] };
        let d = chow_liu(&t, &c, Exec::Sequential).unwrap();
        assert!(d.parents(1).is_empty());
    }

    #[test]
    fn unsatisfiable_constraints() {
        let t = chain(100, 3);
        let two_parents = StructureConstraints { forced: vec![(0, 2), (1, 2)], ..Default::default() };
        assert!(matches!(chow_liu(&t, &two_parents, Exec::Sequential), Err(Error::Constraints(_))));
        let clash = StructureConstraints { forced: vec![(0, 1)], forbidden: vec![(0, 1)], ..Default::default() };
        assert!(chow_liu(&t, &clash, Exec::Sequential).is_err());
        let cyc = StructureConstraints { forced: vec![(0, 1), (1, 0)], ..Default::default() };
        assert!(greedy_hill_climb(&t, &cyc, 3, Score::Bic).is_err());
    }

    #[test]
    fn greedy_independent_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cols = (0..4).map(|_| (0..100_000).map(|_| rng.gen_range(0..3)).collect()).collect();
        let d = greedy_hill_climb(&table(cols, 3), &StructureConstraints::default(), 3, Score::Bic).unwrap();
        assert_eq!(d.edge_count(), 0);
    }

    #[test]
    fn greedy_finds_chain_skeleton() {
        let t = chain(20_000, 5);
        let d = greedy_hill_climb(&t, &StructureConstraints::default(), 3, Score::Bic).unwrap();
        let skeleton: BTreeSet<(usize, usize)> = d.edges().into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        assert!(skeleton.contains(&(1, 2)) && skeleton.contains(&(0, 2)));
        let no = StructureConstraints { forbidden: vec![(1, 2), (2, 1)], ..Default::default() };
        let d = greedy_hill_climb(&t, &no, 3, Score::Bic).unwrap();
        assert!(!d.has_edge(1, 2) && !d.has_edge(2, 1));
    }

    #[test]
    fn constraints_file_resolution() {
        let f: ConstraintsFile = serde_json::from_str(r#"{"forced":[["a","b"]],"roots":["a","zz"]}"#).unwrap();
        let names = ["a", "b"];
        let look = |s: &str| names.iter().position(|n| *n == s);
        assert!(f.resolve(look, true).is_err());
        let c = f.resolve(look, false).unwrap();
        assert_eq!(c.forced, vec![(0, 1)]);
        assert_eq!(c.roots, vec![0]);
    }

    fn random_table(seed: u64, n_attrs: usize, rows: usize) -> EncodedTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols: Vec<Vec<u32>> = Vec::new();
        for i in 0..n_attrs {
            let col = (0..rows)
                .map(|r| {
                    if i > 0 && rng.gen_bool(0.5) {
                        cols[rng.gen_range(0..i)][r]
                    } else {
                        rng.gen_range(0..3)
                    }
                })
                .collect();
            cols.push(col);
        }
        table(cols, 3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn learned_structures_are_acyclic(seed in any::<u64>(), n_attrs in 2usize..6, rows in 1usize..60) {
            let t = random_table(seed, n_attrs, rows);
            let c = StructureConstraints::default();
            let cl = chow_liu(&t, &c, Exec::Sequential).unwrap();
            cl.validate().unwrap();
            prop_assert_eq!(cl.edge_count(), n_attrs - 1);
            prop_assert!(cl.max_in_degree() <= 1);
            let g = greedy_hill_climb(&t, &c, 2, Score::Bic).unwrap();
            g.validate().unwrap();
            prop_assert!(g.max_in_degree() <= 2);
            prop_assert_eq!(g, greedy_hill_climb(&t, &c, 2, Score::Bic).unwrap());
            for i in 0..n_attrs {
                for j in 0..n_attrs {
                    let m = mutual_information(&t, i, j);
                    prop_assert!(m >= -1e-12);
                    prop_assert!((m - mutual_information(&t, j, i)).abs() < 1e-12);
                }
            }
        }
    }
}
