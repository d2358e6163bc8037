use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Directed acyclic graph over nodes `0..n`. Parent lists are kept sorted and the
/// topological order is smallest-index-first among ready nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct Dag {
    parents: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<DagRepr> for Dag {
    type Error = Error;
    fn try_from(r: DagRepr) -> Result<Self> {
        Dag::from_edges(r.nodes, &r.edges)
    }
}

impl From<Dag> for DagRepr {
    fn from(d: Dag) -> Self {
        DagRepr { nodes: d.len(), edges: d.edges() }
    }
}

impl Dag {
    pub fn empty(n: usize) -> Self {
        Dag { parents: vec![Vec::new(); n], topo: (0..n).collect() }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); n];
        for &(p, c) in edges {
            if p >= n || c >= n {
                return Err(Error::Invalid(format!("edge {p} -> {c} references a node outside 0..{n}")));
            }
            if p == c {
                return Err(Error::Cycle { parent: p.to_string(), child: c.to_string() });
            }
            let ps: &mut Vec<usize> = &mut parents[c];
            if let Err(pos) = ps.binary_search(&p) {
                ps.insert(pos, p);
            }
        }
        let topo = topo_sort(&parents).ok_or_else(|| {
            let (p, c) = edges[0];
            Error::Invalid(format!("edge set is cyclic (first edge {p} -> {c})"))
        })?;
        Ok(Dag { parents, topo })
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parents[c].binary_search(&v).is_ok()).collect()
    }

    /// All edges as `(parent, child)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, p: usize, c: usize) -> bool {
        self.parents[c].binary_search(&p).is_ok()
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn max_in_degree(&self) -> usize {
        self.parents.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True when a directed path `from ->* to` exists (a node reaches itself).
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        // walk parents backwards from `to`
        let mut seen = vec![false; self.len()];
        let mut stack = vec![to];
        while let Some(v) = stack.pop() {
            if v == from {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(self.parents[v].iter().copied());
        }
        false
    }

    pub fn add_edge(&mut self, p: usize, c: usize) -> Result<()> {
        if p >= self.len() || c >= self.len() {
            return Err(Error::Invalid(format!("edge {p} -> {c} references an unknown node")));
        }
        if self.has_edge(p, c) {
            return Ok(());
        }
        if self.reaches(c, p) {
            return Err(Error::Cycle { parent: p.to_string(), child: c.to_string() });
        }
        let ps = &mut self.parents[c];
        let pos = ps.binary_search(&p).unwrap_err();
        ps.insert(pos, p);
        self.topo = topo_sort(&self.parents).expect("acyclic by construction");
        Ok(())
    }

    pub fn remove_edge(&mut self, p: usize, c: usize) -> bool {
        match self.parents[c].binary_search(&p) {
            Ok(pos) => {
                self.parents[c].remove(pos);
                self.topo = topo_sort(&self.parents).expect("removing an edge keeps a DAG acyclic");
                true
            }
            Err(_) => false,
        }
    }

    /// Closure of `seeds` under the parent relation (seeds included).
    pub fn ancestors(&self, seeds: &[usize]) -> Vec<bool> {
        let mut keep = vec![false; self.len()];
        let mut stack: Vec<usize> = seeds.to_vec();
        while let Some(v) = stack.pop() {
            if !std::mem::replace(&mut keep[v], true) {
                stack.extend(self.parents[v].iter().copied());
            }
        }
        keep
    }

    /// Checks that the stored order is a permutation and every edge points forward.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let mut pos = vec![usize::MAX; n];
        for (i, &v) in self.topo.iter().enumerate() {
            if v >= n || pos[v] != usize::MAX {
                return Err(Error::Invalid("topological order is not a permutation".into()));
            }
            pos[v] = i;
        }
        if self.topo.len() != n {
            return Err(Error::Invalid("topological order is not a permutation".into()));
        }
        for (p, c) in self.edges() {
            if pos[p] >= pos[c] {
                return Err(Error::Invalid(format!("edge {p} -> {c} violates topological order")));
            }
        }
        Ok(())
    }
}

fn topo_sort(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        out.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    (out.len() == n).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topo_and_edges() {
        let d = Dag::from_edges(4, &[(2, 0), (0, 1), (3, 1)]).unwrap();
        assert_eq!(d.topo_order(), &[2, 0, 3, 1]);
        assert_eq!(d.edges(), vec![(0, 1), (2, 0), (3, 1)]);
        assert_eq!(d.parents(1), &[0, 3]);
        assert_eq!(d.children(2), vec![0]);
        d.validate().unwrap();
    }

    #[test]
    fn rejects_cycles() {
        assert!(Dag::from_edges(2, &[(0, 1), (1, 0)]).is_err());
        assert!(Dag::from_edges(2, &[(0, 0)]).is_err());
        let mut d = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(matches!(d.add_edge(2, 0), Err(Error::Cycle { .. })));
        d.add_edge(0, 2).unwrap();
        assert!(d.remove_edge(0, 2));
        assert!(!d.remove_edge(0, 2));
    }

    #[test]
    fn ancestors_closure() {
        let d = Dag::from_edges(5, &[(0, 1), (1, 2), (3, 2), (4, 3)]).unwrap();
        assert_eq!(d.ancestors(&[1]), vec![true, true, false, false, false]);
        assert_eq!(d.ancestors(&[2]), vec![true; 5]);
    }

    #[test]
    fn json_round_trip() {
        let d = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"nodes":3,"edges":[[0,2],[1,2]]}"#);
        let back: Dag = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<Dag>(r#"{"nodes":2,"edges":[[0,1],[1,0]]}"#).is_err());
    }
}
