use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

use crate::params::BayesNet;
use crate::{Error, Result};

use super::Evidence;

/// Ancestor closure of the nodes a query touches. Every parent of a kept node is kept, so
/// the CPTs of `kept` form a closed sub-model with the same query answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedGraph {
    pub kept: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    /// Nodes carrying a region.
    pub constrained: Vec<usize>,
    /// Nodes carrying a weight vector.
    pub weighted: Vec<usize>,
    /// Node left for last: the largest weighted node, else the latest constrained node in
    /// topological order.
    pub held: Option<usize>,
    pub signature: String,
}

fn held_node(bn: &BayesNet, constrained: &[usize], weighted: &[usize]) -> Option<usize> {
    if let Some(&w) = weighted.last() {
        return Some(w);
    }
    let topo = bn.dag().topo_order();
    topo.iter().rev().copied().find(|v| constrained.contains(v))
}

fn build(bn: &BayesNet, kept: Vec<usize>, constrained: Vec<usize>, weighted: Vec<usize>) -> ReducedGraph {
    let edges = bn
        .dag()
        .edges()
        .into_iter()
        .filter(|(p, c)| kept.binary_search(p).is_ok() && kept.binary_search(c).is_ok())
        .collect();
    let held = held_node(bn, &constrained, &weighted);
    let mut h = Sha256::new();
    h.update(bn.model_id().as_bytes());
    for part in [&kept, &constrained, &weighted] {
        h.update(b"|");
        for v in part.iter() {
            h.update((*v as u64).to_le_bytes());
        }
    }
    let signature = hex::encode(&h.finalize()[..12]);
    ReducedGraph { kept, edges, constrained, weighted, held, signature }
}

/// Reduces to `Ancestor(involved)` where involved = constrained and weighted nodes.
pub fn reduce_graph(bn: &BayesNet, ev: &Evidence) -> ReducedGraph {
    let involved = ev.involved();
    let mask = bn.dag().ancestors(&involved);
    let kept = (0..bn.len()).filter(|&v| mask[v]).collect();
    build(bn, kept, ev.constrained(), ev.weighted())
}

/// The unreduced graph: every node kept.
pub fn full_graph(bn: &BayesNet, ev: &Evidence) -> ReducedGraph {
    build(bn, (0..bn.len()).collect(), ev.constrained(), ev.weighted())
}

/// An order is valid when it lists distinct kept nodes and leaves at most one out.
pub fn validate_order(g: &ReducedGraph, order: &[usize]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &v in order {
        if g.kept.binary_search(&v).is_err() {
            return Err(Error::ElimOrder(format!("node {v} is not in the graph")));
        }
        if !seen.insert(v) {
            return Err(Error::ElimOrder(format!("node {v} appears twice")));
        }
    }
    let missing = g.kept.len() - seen.len();
    if missing > 1 {
        return Err(Error::ElimOrder(format!("{missing} nodes are missing from the order")));
    }
    Ok(())
}

pub(crate) fn is_forest(g: &ReducedGraph, bn: &BayesNet) -> bool {
    g.kept.iter().all(|&v| bn.dag().parents(v).len() <= 1)
}

fn undirected(g: &ReducedGraph, n: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(p, c) in &g.edges {
        adj[p].push(c);
        adj[c].push(p);
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    adj
}

/// Leaves-first order. Forests use a post-order rooted at the held node (other components
/// are rooted at their smallest node and fully eliminated); other graphs use min-degree on
/// the moral graph with index tie-breaks. The held node is always excluded.
pub fn choose_elim_order(bn: &BayesNet, g: &ReducedGraph) -> Vec<usize> {
    let n = bn.len();
    if is_forest(g, bn) {
        let adj = undirected(g, n);
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(g.kept.len());
        let post = |root: usize, visited: &mut Vec<bool>, order: &mut Vec<usize>| {
            // iterative post-order, children ascending
            let mut stack = vec![(root, 0usize)];
            visited[root] = true;
            while let Some(&mut (v, ref mut i)) = stack.last_mut() {
                if let Some(&c) = adj[v].get(*i) {
                    *i += 1;
                    if !visited[c] {
                        visited[c] = true;
                        stack.push((c, 0));
                    }
                } else {
                    order.push(v);
                    stack.pop();
                }
            }
        };
        let held_comp_root = g.held;
        if let Some(h) = held_comp_root {
            // mark the held component so the sweep below skips it
            let mut tmp = Vec::new();
            let mut vis = visited.clone();
            post(h, &mut vis, &mut tmp);
            for v in tmp {
                visited[v] = true;
            }
        }
        for &v in &g.kept {
            if !visited[v] {
                post(v, &mut visited, &mut order);
            }
        }
        if let Some(h) = held_comp_root {
            let mut vis = vec![false; n];
            post(h, &mut vis, &mut order);
            order.pop();
        }
        return order;
    }
    // moral graph
    let mut nb: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &v in &g.kept {
        let ps = bn.dag().parents(v);
        for &p in ps {
            nb[p].insert(v);
            nb[v].insert(p);
        }
        for &a in ps {
            for &b in ps {
                if a != b {
                    nb[a].insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<usize> = g.kept.iter().copied().filter(|&v| Some(v) != g.held).collect();
    let mut order = Vec::with_capacity(remaining.len());
    while let Some(&v) = remaining.iter().min_by_key(|&&v| (nb[v].len(), v)) {
        remaining.remove(&v);
        order.push(v);
        let ns: Vec<usize> = nb[v].iter().copied().collect();
        for &a in &ns {
            nb[a].remove(&v);
            for &b in &ns {
                if a != b {
                    nb[a].insert(b);
                }
            }
        }
        nb[v].clear();
    }
    order
}
