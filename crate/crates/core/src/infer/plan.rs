use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::params::BayesNet;
use crate::{Error, Result};

use super::factor::{cpt_factor, renorm, scaled, Factor};
use super::reduce::{is_forest, validate_order, ReducedGraph};
use super::Evidence;

/// One tensor operation. Code sets are bound at execution time: `SLICE` reads the query's
/// region for each constrained node, every other node uses its whole domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    /// `acc[node] = 1` over the node's codes, times its sliced prior when it is a root and
    /// times its sliced weights unless it is the held node.
    Init { node: usize, prior: bool, weight: bool },
    /// `acc[parent] *= M[child]^T acc[child]` where `M[child]` is the child's CPT sliced to
    /// child rows and parent columns.
    Up { child: usize, parent: usize },
    /// `acc[child] *= M[child] acc[parent]`.
    Down { parent: usize, child: usize },
    /// `result *= sum(acc[node])`, or `acc[node] . w[node]` when `dot`.
    Finish { node: usize, dot: bool },
    /// Slices the node's CPT into a dense factor (non-tree graphs).
    SliceFactor { node: usize, slot: usize },
    /// Multiplies the input factors and sums out `var`.
    ProductSum { inputs: Vec<usize>, var: Option<usize>, out: usize },
    /// `result *= sum(factor[slot])`.
    FinishFactor { slot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    /// Chain of sliced matrix-vector products (every kept node has at most one parent and
    /// the order is leaves-first).
    Tree,
    /// Dense factor products for everything else.
    Generic,
}

#[derive(Debug, Clone)]
pub struct CompiledPlan {
    pub model_id: String,
    pub graph: ReducedGraph,
    pub order: Vec<usize>,
    pub kind: PlanKind,
    pub steps: Vec<Step>,
    /// Pass-through nodes folded away at compile time.
    pub folded: Vec<usize>,
    slots: usize,
    max_card: usize,
    /// Composed conditional `P(child | new parent)` replacing a folded chain, laid out
    /// like a CPT (`[parent code * card(child) + child code]`).
    links: BTreeMap<usize, Vec<f64>>,
    /// Marginal of a node whose folded ancestors were all pass-through.
    priors: BTreeMap<usize, Vec<f64>>,
}

/// Largest `d_p * d_u * d_c` product composed when folding an inner chain node.
const FOLD_BUDGET: usize = 1 << 22;

#[derive(Default)]
struct Fold {
    parent: Vec<Option<usize>>,
    removed: Vec<bool>,
    links: BTreeMap<usize, Vec<f64>>,
    priors: BTreeMap<usize, Vec<f64>>,
}

/// Folds kept nodes that carry no evidence and have exactly one kept child: their factors
/// do not depend on the code sets, so the chain through them collapses into a prior or a
/// composed conditional once per template.
fn fold_chains(bn: &BayesNet, g: &ReducedGraph) -> Fold {
    let n = bn.len();
    let cards = bn.domain_sizes();
    let mut f = Fold { parent: vec![None; n], removed: vec![false; n], ..Fold::default() };
    let mut kids = vec![Vec::new(); n];
    for &(p, c) in &g.edges {
        f.parent[c] = Some(p);
        kids[p].push(c);
    }
    let kept: Vec<bool> = (0..n).map(|v| g.kept.contains(&v)).collect();
    for &u in bn.dag().topo_order() {
        if !kept[u] || g.constrained.contains(&u) || g.weighted.contains(&u) || kids[u].len() != 1 {
            continue;
        }
        let c = kids[u][0];
        let (du, dc) = (cards[u], cards[c]);
        let mc = bn.cpt(c).probs();
        match f.parent[u] {
            None => {
                let pu = f.priors.remove(&u).unwrap_or_else(|| bn.cpt(u).column(0).to_vec());
                let mut pc = vec![0.0; dc];
                for (xu, &a) in pu.iter().enumerate() {
                    for (m, &b) in pc.iter_mut().zip(&mc[xu * dc..(xu + 1) * dc]) {
                        *m += a * b;
                    }
                }
                f.priors.insert(c, pc);
                f.parent[c] = None;
            }
            Some(p) => {
                let dp = cards[p];
                if dp * du * dc > FOLD_BUDGET {
                    continue;
                }
                let mu = f.links.remove(&u);
                let mu = mu.as_deref().unwrap_or_else(|| bn.cpt(u).probs());
                let mut m = vec![0.0; dp * dc];
                for xp in 0..dp {
                    let row = &mut m[xp * dc..(xp + 1) * dc];
                    for (xu, &a) in mu[xp * du..(xp + 1) * du].iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        for (r, &b) in row.iter_mut().zip(&mc[xu * dc..(xu + 1) * dc]) {
                            *r += a * b;
                        }
                    }
                }
                f.links.insert(c, m);
                f.parent[c] = Some(p);
                kids[p].retain(|&k| k != u);
                kids[p].push(c);
            }
        }
        f.removed[u] = true;
        kids[u].clear();
    }
    f
}

fn tree_steps(bn: &BayesNet, g: &ReducedGraph, order: &[usize], fold: &Fold) -> Option<Vec<Step>> {
    let n = bn.len();
    let kept: Vec<usize> = g.kept.iter().copied().filter(|&v| !fold.removed[v]).collect();
    let order: Vec<usize> = order.iter().copied().filter(|&v| !fold.removed[v]).collect();
    let mut alive = vec![false; n];
    for &v in &kept {
        alive[v] = true;
    }
    let mut adj = vec![Vec::new(); n];
    for &c in &kept {
        if let Some(p) = fold.parent[c] {
            adj[p].push(c);
            adj[c].push(p);
        }
    }
    let weighted = |v: usize| g.weighted.contains(&v);
    let held_last = g.held.filter(|h| !order.contains(h));
    let mut steps: Vec<Step> = kept
        .iter()
        .map(|&v| Step::Init {
            node: v,
            prior: fold.parent[v].is_none(),
            weight: weighted(v) && Some(v) != held_last,
        })
        .collect();
    for &u in &order {
        alive[u] = false;
        let live: Vec<usize> = adj[u].iter().copied().filter(|&t| alive[t]).collect();
        match live.as_slice() {
            [] => steps.push(Step::Finish { node: u, dot: false }),
            [t] if fold.parent[u] == Some(*t) => steps.push(Step::Up { child: u, parent: *t }),
            [t] => steps.push(Step::Down { parent: u, child: *t }),
            _ => return None,
        }
    }
    for &v in &kept {
        if alive[v] {
            steps.push(Step::Finish { node: v, dot: weighted(v) && Some(v) == held_last });
        }
    }
    Some(steps)
}

fn generic_steps(bn: &BayesNet, g: &ReducedGraph, order: &[usize]) -> (Vec<Step>, usize) {
    let mut steps = Vec::new();
    let mut active: Vec<(usize, Vec<usize>)> = Vec::new();
    for (slot, &v) in g.kept.iter().enumerate() {
        steps.push(Step::SliceFactor { node: v, slot });
        let mut scope = bn.dag().parents(v).to_vec();
        scope.push(v);
        active.push((slot, scope));
    }
    let mut next = g.kept.len();
    for &var in order {
        let (with, without): (Vec<_>, Vec<_>) = active.into_iter().partition(|(_, s)| s.contains(&var));
        active = without;
        if with.is_empty() {
            continue;
        }
        let mut scope: Vec<usize> = with.iter().flat_map(|(_, s)| s.iter().copied()).filter(|&x| x != var).collect();
        scope.sort_unstable();
        scope.dedup();
        steps.push(Step::ProductSum { inputs: with.iter().map(|(s, _)| *s).collect(), var: Some(var), out: next });
        active.push((next, scope));
        next += 1;
    }
    if !active.is_empty() {
        steps.push(Step::ProductSum { inputs: active.iter().map(|(s, _)| *s).collect(), var: None, out: next });
        steps.push(Step::FinishFactor { slot: next });
        next += 1;
    }
    (steps, next)
}

/// Compiles the query template `g` into a static step list realizing `order`.
pub fn compile_plan(bn: &BayesNet, g: &ReducedGraph, order: &[usize]) -> Result<CompiledPlan> {
    validate_order(g, order)?;
    let max_card = bn.domain_sizes().into_iter().max().unwrap_or(0);
    let tree = if is_forest(g, bn) {
        let fold = fold_chains(bn, g);
        tree_steps(bn, g, order, &fold).map(|steps| (steps, fold))
    } else {
        None
    };
    let (kind, steps, slots, fold) = match tree {
        Some((steps, fold)) => (PlanKind::Tree, steps, 0, fold),
        None => {
            let (steps, slots) = generic_steps(bn, g, order);
            (PlanKind::Generic, steps, slots, Fold::default())
        }
    };
    let folded = g.kept.iter().copied().filter(|&v| fold.removed.get(v) == Some(&true)).collect();
    Ok(CompiledPlan {
        model_id: bn.model_id().to_string(),
        graph: g.clone(),
        order: order.to_vec(),
        kind,
        steps,
        folded,
        slots,
        max_card,
        links: fold.links,
        priors: fold.priors,
    })
}

struct Acc {
    vals: Vec<f64>,
    exp: i32,
}

impl CompiledPlan {
    fn check(&self, bn: &BayesNet, ev: &Evidence) -> Result<()> {
        if bn.model_id() != self.model_id {
            return Err(Error::Invalid("plan was compiled for a different model".into()));
        }
        ev.check(bn)?;
        if ev.constrained() != self.graph.constrained || ev.weighted() != self.graph.weighted {
            return Err(Error::Invalid("evidence does not match the plan template".into()));
        }
        Ok(())
    }

    /// Runs the plan with the evidence's code sets bound to its slots.
    pub fn execute(&self, bn: &BayesNet, ev: &Evidence) -> Result<f64> {
        self.check(bn, ev)?;
        if ev.has_empty_region() {
            return Ok(0.0);
        }
        let v = match self.kind {
            PlanKind::Tree => self.run_tree(bn, ev),
            PlanKind::Generic => self.run_generic(bn, ev),
        };
        Ok(v.clamp(0.0, f64::MAX))
    }

    fn run_tree(&self, bn: &BayesNet, ev: &Evidence) -> f64 {
        let identity: Vec<u32> = (0..self.max_card as u32).collect();
        let cards = bn.domain_sizes();
        let codes = |v: usize| -> &[u32] {
            match ev.region(v) {
                Some(r) => r.codes(),
                None => &identity[..cards[v]],
            }
        };
        let mut accs: Vec<Option<Acc>> = (0..bn.len()).map(|_| None).collect();
        let (mut result, mut exp) = (1.0f64, 0i32);
        let mut msg = Vec::new();
        for step in &self.steps {
            match *step {
                Step::Init { node, prior, weight } => {
                    let cs = codes(node);
                    let mut vals = vec![1.0; cs.len()];
                    if prior {
                        let p = self.priors.get(&node).map_or_else(|| bn.cpt(node).column(0), Vec::as_slice);
                        for (a, &c) in vals.iter_mut().zip(cs) {
                            *a *= p[c as usize];
                        }
                    }
                    if weight {
                        let w = ev.weight(node).unwrap();
                        for (a, &c) in vals.iter_mut().zip(cs) {
                            *a *= w[c as usize];
                        }
                    }
                    let mut acc = Acc { vals, exp: 0 };
                    renorm(&mut acc.vals, &mut acc.exp);
                    accs[node] = Some(acc);
                }
                Step::Up { child, parent } => {
                    let src = accs[child].take().unwrap();
                    let (rc, rp) = (codes(child), codes(parent));
                    let probs = self.links.get(&child).map_or_else(|| bn.cpt(child).probs(), Vec::as_slice);
                    let r = cards[child];
                    msg.clear();
                    for &xp in rp {
                        let row = &probs[xp as usize * r..(xp as usize + 1) * r];
                        let s: f64 = if rc.len() == r {
                            row.iter().zip(&src.vals).map(|(a, b)| a * b).sum()
                        } else {
                            rc.iter().zip(&src.vals).map(|(&x, b)| row[x as usize] * b).sum()
                        };
                        msg.push(s);
                    }
                    let dst = accs[parent].as_mut().unwrap();
                    for (a, m) in dst.vals.iter_mut().zip(&msg) {
                        *a *= m;
                    }
                    dst.exp += src.exp;
                    renorm(&mut dst.vals, &mut dst.exp);
                }
                Step::Down { parent, child } => {
                    let src = accs[parent].take().unwrap();
                    let (rc, rp) = (codes(child), codes(parent));
                    let probs = self.links.get(&child).map_or_else(|| bn.cpt(child).probs(), Vec::as_slice);
                    let r = cards[child];
                    msg.clear();
                    msg.resize(rc.len(), 0.0);
                    let dense = rc.len() == r;
                    for (&xp, &a) in rp.iter().zip(&src.vals) {
                        if a == 0.0 {
                            continue;
                        }
                        let row = &probs[xp as usize * r..(xp as usize + 1) * r];
                        if dense {
                            for (m, p) in msg.iter_mut().zip(row) {
                                *m += p * a;
                            }
                        } else {
                            for (m, &x) in msg.iter_mut().zip(rc) {
                                *m += row[x as usize] * a;
                            }
                        }
                    }
                    let dst = accs[child].as_mut().unwrap();
                    for (a, m) in dst.vals.iter_mut().zip(&msg) {
                        *a *= m;
                    }
                    dst.exp += src.exp;
                    renorm(&mut dst.vals, &mut dst.exp);
                }
                Step::Finish { node, dot } => {
                    let acc = accs[node].take().unwrap();
                    let s: f64 = if dot {
                        let w = ev.weight(node).unwrap();
                        acc.vals.iter().zip(codes(node)).map(|(a, &c)| a * w[c as usize]).sum()
                    } else {
                        acc.vals.iter().sum()
                    };
                    result *= s;
                    exp += acc.exp;
                    let mut one = [result];
                    renorm(&mut one, &mut exp);
                    result = one[0];
                }
                _ => unreachable!("generic step in a tree plan"),
            }
        }
        scaled(result, exp)
    }

    fn run_generic(&self, bn: &BayesNet, ev: &Evidence) -> f64 {
        let cards = bn.domain_sizes();
        let codes = |u: usize| ev.codes(u, cards[u]).into_owned();
        let mut slots: Vec<Option<Factor>> = (0..self.slots).map(|_| None).collect();
        let (mut result, mut exp) = (1.0f64, 0i32);
        for step in &self.steps {
            match step {
                Step::SliceFactor { node, slot } => slots[*slot] = Some(cpt_factor(bn, *node, &codes, ev, false)),
                Step::ProductSum { inputs, var, out } => {
                    let taken: Vec<Factor> = inputs.iter().map(|&i| slots[i].take().unwrap()).collect();
                    let refs: Vec<&Factor> = taken.iter().collect();
                    slots[*out] = Some(Factor::product_sum(&refs, *var));
                }
                Step::FinishFactor { slot } => {
                    let f = slots[*slot].take().unwrap();
                    result *= f.vals.iter().sum::<f64>();
                    exp += f.exp;
                    let mut one = [result];
                    renorm(&mut one, &mut exp);
                    result = one[0];
                }
                _ => unreachable!("tree step in a generic plan"),
            }
        }
        scaled(result, exp)
    }

    /// Human-readable step listing; shapes use the code sets of `ev` when given.
    pub fn dump(&self, bn: &BayesNet, ev: Option<&Evidence>) -> String {
        let name = |v: usize| bn.attrs()[v].name.as_str();
        let size = |v: usize| match ev.and_then(|e| e.region(v)) {
            Some(r) => r.len(),
            None => bn.attrs()[v].domain_size(),
        };
        let list = |vs: &[usize]| vs.iter().map(|&v| name(v)).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "plan {} ({:?}) model {}", self.graph.signature, self.kind, self.model_id);
        let _ = writeln!(s, "reduced graph: [{}]", list(&self.graph.kept));
        let _ = writeln!(s, "constrained: [{}]", list(&self.graph.constrained));
        if !self.graph.weighted.is_empty() {
            let _ = writeln!(s, "weighted: [{}]", list(&self.graph.weighted));
        }
        let _ = writeln!(s, "elimination order: [{}]", list(&self.order));
        if !self.folded.is_empty() {
            let _ = writeln!(s, "folded: [{}]", list(&self.folded));
        }
        if let Some(h) = self.graph.held {
            let _ = writeln!(s, "held: {}", name(h));
        }
        for (i, step) in self.steps.iter().enumerate() {
            let line = match step {
                Step::Init { node, prior, weight } => {
                    let mut t = format!("SLICE acc[{}] <- ones({})", name(*node), size(*node));
                    if *prior {
                        t += &format!("; ELEMWISE-MUL prior[{}]", name(*node));
                    }
                    if *weight {
                        t += &format!("; ELEMWISE-MUL w[{}]", name(*node));
                    }
                    t
                }
                Step::Up { child, parent } => format!(
                    "SLICE M[{c}] ({}x{}); TRANSPOSE+MATMUL M[{c}]^T acc[{c}]; ELEMWISE-MUL into acc[{p}]",
                    size(*child),
                    size(*parent),
                    c = name(*child),
                    p = name(*parent)
                ),
                Step::Down { parent, child } => format!(
                    "SLICE M[{c}] ({}x{}); MATMUL M[{c}] acc[{p}]; ELEMWISE-MUL into acc[{c}]",
                    size(*child),
                    size(*parent),
                    c = name(*child),
                    p = name(*parent)
                ),
                Step::Finish { node, dot } => {
                    if *dot {
                        format!("DOT acc[{n}] . w[{n}]; SCALAR-MUL", n = name(*node))
                    } else {
                        format!("COLSUM acc[{}]; SCALAR-MUL", name(*node))
                    }
                }
                Step::SliceFactor { node, slot } => {
                    let mut scope = bn.dag().parents(*node).to_vec();
                    scope.push(*node);
                    let shape: Vec<String> = scope.iter().map(|&v| size(v).to_string()).collect();
                    format!("SLICE f{slot} <- cpt[{}] ({})", name(*node), shape.join("x"))
                }
                Step::ProductSum { inputs, var, out } => {
                    let ins: Vec<String> = inputs.iter().map(|i| format!("f{i}")).collect();
                    match var {
                        Some(v) => format!("PRODUCT-SUM f{out} <- sum_{} {}", name(*v), ins.join(" * ")),
                        None => format!("PRODUCT f{out} <- {}", ins.join(" * ")),
                    }
                }
                Step::FinishFactor { slot } => format!("COLSUM f{slot}; SCALAR-MUL"),
            };
            let _ = writeln!(s, "{i:>3}  {line}");
        }
        s
    }
}
