use serde::{Deserialize, Serialize};

use crate::data::EncodedTable;
use crate::{Error, Result};

/// Largest CPT (entries = child domain x parent configurations) a fit will allocate.
pub const DEFAULT_CPT_BUDGET: usize = 1 << 24;

/// Conditional probability table for one node.
///
/// Entries are laid out as `config * card + x` where `config` enumerates parent
/// assignments lexicographically, first parent most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    node: usize,
    parents: Vec<usize>,
    card: usize,
    parent_cards: Vec<usize>,
    alpha: f64,
    counts: Vec<u64>,
    probs: Vec<f64>,
}

/// Serialized form: probabilities are always rederived from counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CptRecord {
    pub node: usize,
    pub parents: Vec<usize>,
    pub card: usize,
    pub parent_cards: Vec<usize>,
    pub alpha: f64,
    pub counts: Vec<u64>,
}

pub fn cpt_size(card: usize, parent_cards: &[usize]) -> Option<usize> {
    parent_cards.iter().try_fold(card, |acc, &c| acc.checked_mul(c))
}

/// Raw family counts of `child` given `parents` in the CPT layout.
pub fn family_counts(table: &EncodedTable, child: usize, parents: &[usize]) -> Vec<u64> {
    let card = table.attrs[child].domain_size();
    let pcards: Vec<usize> = parents.iter().map(|&p| table.attrs[p].domain_size()).collect();
    let size = cpt_size(card, &pcards).expect("caller checks the CPT budget");
    let mut counts = vec![0u64; size];
    for row in table.rows() {
        let mut cfg = 0usize;
        for (&p, &pc) in parents.iter().zip(&pcards) {
            cfg = cfg * pc + row[p] as usize;
        }
        counts[cfg * card + row[child] as usize] += 1;
    }
    counts
}

impl Cpt {
    pub fn from_counts(
        node: usize,
        parents: Vec<usize>,
        card: usize,
        parent_cards: Vec<usize>,
        counts: Vec<u64>,
        alpha: f64,
    ) -> Result<Self> {
        if parents.len() != parent_cards.len() {
            return Err(Error::Format(format!("node {node}: parent list and parent domains differ in length")));
        }
        if card == 0 || parent_cards.contains(&0) {
            return Err(Error::Format(format!("node {node}: empty domain")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Invalid(format!("smoothing alpha must be finite and >= 0, got {alpha}")));
        }
        if cpt_size(card, &parent_cards) != Some(counts.len()) {
            return Err(Error::Format(format!("node {node}: count table has {} entries", counts.len())));
        }
        let mut cpt = Cpt { node, parents, card, parent_cards, alpha, counts, probs: Vec::new() };
        cpt.renormalize();
        Ok(cpt)
    }

    pub fn fit(table: &EncodedTable, node: usize, parents: &[usize], alpha: f64, budget: usize) -> Result<Self> {
        let card = table.attrs[node].domain_size();
        let pcards: Vec<usize> = parents.iter().map(|&p| table.attrs[p].domain_size()).collect();
        let size = cpt_size(card, &pcards).unwrap_or(usize::MAX);
        if size > budget {
            return Err(Error::CptBudget { node: table.attrs[node].name.clone(), size, budget });
        }
        let counts = family_counts(table, node, parents);
        Cpt::from_counts(node, parents.to_vec(), card, pcards, counts, alpha)
    }

    pub fn from_record(r: CptRecord) -> Result<Self> {
        Cpt::from_counts(r.node, r.parents, r.card, r.parent_cards, r.counts, r.alpha)
    }

    pub fn to_record(&self) -> CptRecord {
        CptRecord {
            node: self.node,
            parents: self.parents.clone(),
            card: self.card,
            parent_cards: self.parent_cards.clone(),
            alpha: self.alpha,
            counts: self.counts.clone(),
        }
    }

    pub(crate) fn renormalize(&mut self) {
        let r = self.card;
        let mut probs = vec![0.0; self.counts.len()];
        for (cfg, col) in self.counts.chunks(r).enumerate() {
            let n: u64 = col.iter().sum();
            let denom = n as f64 + self.alpha * r as f64;
            let out = &mut probs[cfg * r..(cfg + 1) * r];
            if denom == 0.0 {
                out.fill(1.0 / r as f64);
            } else {
                for (o, &c) in out.iter_mut().zip(col) {
                    *o = (c as f64 + self.alpha) / denom;
                }
            }
        }
        self.probs = probs;
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn card(&self) -> usize {
        self.card
    }

    pub fn parent_cards(&self) -> &[usize] {
        &self.parent_cards
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_configs(&self) -> usize {
        self.counts.len() / self.card
    }

    /// Parent configuration index for a full assignment indexed by node id.
    pub fn config_of(&self, assignment: &[u32]) -> usize {
        self.parents
            .iter()
            .zip(&self.parent_cards)
            .fold(0, |acc, (&p, &pc)| acc * pc + assignment[p] as usize)
    }

    /// `P(x | config)` column.
    pub fn column(&self, config: usize) -> &[f64] {
        &self.probs[config * self.card..(config + 1) * self.card]
    }

    pub fn prob(&self, x: u32, config: usize) -> f64 {
        self.probs[config * self.card + x as usize]
    }

    /// Adds (`sign = 1`) or removes (`sign = -1`) one observation per row. Rows must be full
    /// assignments indexed by node id.
    pub(crate) fn apply(&mut self, rows: &[&[u32]], remove: bool) -> std::result::Result<(), ()> {
        for row in rows {
            let idx = self.config_of(row) * self.card + row[self.node] as usize;
            let c = &mut self.counts[idx];
            if remove {
                *c = c.checked_sub(1).ok_or(())?;
            } else {
                *c += 1;
            }
        }
        self.renormalize();
        Ok(())
    }

    /// Checks every column sums to one and matches what the counts imply.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        let mut fresh = self.clone();
        fresh.renormalize();
        for (cfg, col) in self.probs.chunks(self.card).enumerate() {
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > tol || col.iter().any(|p| *p < 0.0) {
                return Err(Error::Format(format!("node {} column {cfg} sums to {s}", self.node)));
            }
        }
        if fresh.probs.iter().zip(&self.probs).any(|(a, b)| (a - b).abs() > tol) {
            return Err(Error::Format(format!("node {}: probabilities disagree with counts", self.node)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeMeta;

    fn two_col(rows: &[(u32, u32)]) -> EncodedTable {
        let attrs = vec![AttributeMeta::integer_range("p", 2), AttributeMeta::integer_range("x", 2)];
        let codes = rows.iter().flat_map(|&(p, x)| [p, x]).collect();
        EncodedTable::new("t", attrs, codes).unwrap()
    }

    #[test]
    fn hand_counted_example() {
        let t = two_col(&[(0, 0), (0, 0), (0, 1), (1, 1)]);
        let cpt = Cpt::fit(&t, 1, &[0], 0.0, DEFAULT_CPT_BUDGET).unwrap();
        assert!((cpt.prob(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cpt.prob(1, 1), 1.0);
        assert_eq!(cpt.counts(), &[2, 1, 0, 1]);
        let root = Cpt::fit(&t, 0, &[], 0.0, DEFAULT_CPT_BUDGET).unwrap();
        assert_eq!(root.probs(), &[0.75, 0.25]);
    }

    #[test]
    fn empty_config_is_uniform() {
        let t = two_col(&[(0, 0), (0, 1)]);
        let cpt = Cpt::fit(&t, 1, &[0], 0.0, DEFAULT_CPT_BUDGET).unwrap();
        assert_eq!(cpt.column(1), &[0.5, 0.5]);
        let smoothed = Cpt::fit(&t, 1, &[0], 1.0, DEFAULT_CPT_BUDGET).unwrap();
        assert_eq!(smoothed.column(1), &[0.5, 0.5]);
        assert_eq!(smoothed.column(0), &[0.5, 0.5]);
        smoothed.check_consistency(1e-12).unwrap();
    }

    #[test]
    fn lexicographic_configs() {
        let attrs = vec![
            AttributeMeta::integer_range("a", 2),
            AttributeMeta::integer_range("b", 3),
            AttributeMeta::integer_range("x", 2),
        ];
        let t = EncodedTable::new("t", attrs, vec![1, 2, 1]).unwrap();
        let cpt = Cpt::fit(&t, 2, &[0, 1], 0.0, DEFAULT_CPT_BUDGET).unwrap();
        assert_eq!(cpt.n_configs(), 6);
        assert_eq!(cpt.config_of(&[1, 2, 1]), 5);
        assert_eq!(cpt.counts()[5 * 2 + 1], 1);
    }

    #[test]
    fn budget_enforced() {
        let t = two_col(&[(0, 0)]);
        assert!(matches!(Cpt::fit(&t, 1, &[0], 1.0, 3), Err(Error::CptBudget { .. })));
    }

    #[test]
    fn record_round_trip_and_validation() {
        let t = two_col(&[(0, 0), (1, 1), (1, 0)]);
        let cpt = Cpt::fit(&t, 1, &[0], 1.0, DEFAULT_CPT_BUDGET).unwrap();
        assert_eq!(Cpt::from_record(cpt.to_record()).unwrap(), cpt);
        let mut bad = cpt.to_record();
        bad.counts.pop();
        assert!(Cpt::from_record(bad).is_err());
    }
}
