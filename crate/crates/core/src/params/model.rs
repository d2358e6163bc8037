use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cpt::{Cpt, CptRecord, DEFAULT_CPT_BUDGET};
use crate::data::{AttributeMeta, EncodedTable};
use crate::exec::Exec;
use crate::structure::Dag;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Bayesian network over the attributes of one (possibly joined) relation. Immutable once
/// built; updates return a new model sharing unchanged CPTs.
#[derive(Debug, Clone)]
pub struct BayesNet {
    attrs: Vec<AttributeMeta>,
    dag: Dag,
    cpts: Vec<Arc<Cpt>>,
    row_count: u64,
    alpha: f64,
    model_id: String,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
pub struct BayesNetFile {
    pub format_version: u32,
    pub model_id: String,
    pub attrs: Vec<AttributeMeta>,
    pub dag: Dag,
    pub alpha: f64,
    pub cpts: Vec<CptRecord>,
    pub row_count: u64,
}

/// Fits one CPT per node by maximum likelihood with additive smoothing `alpha`.
pub fn fit_cpts(table: &EncodedTable, dag: &Dag, alpha: f64, exec: Exec) -> Result<BayesNet> {
    if dag.len() != table.n_attrs() {
        return Err(Error::Invalid(format!(
            "DAG has {} nodes but table `{}` has {} attributes",
            dag.len(),
            table.name,
            table.n_attrs()
        )));
    }
    let nodes: Vec<usize> = (0..dag.len()).collect();
    let cpts = exec
        .map(&nodes, |&v| Cpt::fit(table, v, dag.parents(v), alpha, DEFAULT_CPT_BUDGET).map(Arc::new))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    BayesNet::assemble(table.attrs.clone(), dag.clone(), cpts, table.row_count() as u64, alpha)
}

/// Model over `dag` with integer-range attributes `x0..` of the given cardinalities and
/// random CPT counts in `0..max_count` (smoothed by `alpha`). Used for fuzzing and benches.
pub fn random_bayes_net(dag: &Dag, cards: &[usize], max_count: u64, alpha: f64, seed: u64) -> Result<BayesNet> {
    use rand::{Rng, SeedableRng};
    if cards.len() != dag.len() {
        return Err(Error::Invalid("one cardinality per node required".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let attrs: Vec<AttributeMeta> =
        cards.iter().enumerate().map(|(i, &c)| AttributeMeta::integer_range(format!("x{i}"), c)).collect();
    let mut cpts = Vec::with_capacity(dag.len());
    for v in 0..dag.len() {
        let pcards: Vec<usize> = dag.parents(v).iter().map(|&p| cards[p]).collect();
        let size = super::cpt::cpt_size(cards[v], &pcards).unwrap_or(usize::MAX);
        if size > DEFAULT_CPT_BUDGET {
            return Err(Error::CptBudget { node: attrs[v].name.clone(), size, budget: DEFAULT_CPT_BUDGET });
        }
        let counts = (0..size).map(|_| rng.gen_range(0..max_count.max(1))).collect();
        cpts.push(Arc::new(Cpt::from_counts(v, dag.parents(v).to_vec(), cards[v], pcards, counts, alpha)?));
    }
    let rows: u64 = cpts.iter().map(|c| c.counts().iter().sum::<u64>()).max().unwrap_or(0);
    BayesNet::assemble(attrs, dag.clone(), cpts, rows, alpha)
}

impl BayesNet {
    pub(crate) fn assemble(
        attrs: Vec<AttributeMeta>,
        dag: Dag,
        cpts: Vec<Arc<Cpt>>,
        row_count: u64,
        alpha: f64,
    ) -> Result<Self> {
        if attrs.len() != dag.len() || cpts.len() != dag.len() {
            return Err(Error::Format("attribute, DAG and CPT counts differ".into()));
        }
        for (v, cpt) in cpts.iter().enumerate() {
            if cpt.node() != v || cpt.parents() != dag.parents(v) {
                return Err(Error::Format(format!("CPT of `{}` does not match the DAG parents", attrs[v].name)));
            }
            if cpt.card() != attrs[v].domain_size()
                || cpt.parents().iter().zip(cpt.parent_cards()).any(|(&p, &c)| attrs[p].domain_size() != c)
            {
                return Err(Error::Format(format!("CPT of `{}` has the wrong shape", attrs[v].name)));
            }
        }
        let index = attrs.iter().enumerate().map(|(i, a)| (a.name.clone(), i)).collect();
        let mut bn = BayesNet { attrs, dag, cpts, row_count, alpha, model_id: String::new(), index };
        bn.model_id = bn.compute_id();
        Ok(bn)
    }

    fn compute_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.attrs).expect("attrs serialize"));
        h.update(serde_json::to_vec(&self.dag).expect("dag serialize"));
        h.update(self.alpha.to_bits().to_le_bytes());
        h.update(self.row_count.to_le_bytes());
        for cpt in &self.cpts {
            for c in cpt.counts() {
                h.update(c.to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn attrs(&self) -> &[AttributeMeta] {
        &self.attrs
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn cpt(&self, v: usize) -> &Cpt {
        &self.cpts[v]
    }

    pub fn cpt_arc(&self, v: usize) -> &Arc<Cpt> {
        &self.cpts[v]
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn row_count(&self) -> u64 {
        self.row_count
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        self.attrs.iter().map(AttributeMeta::domain_size).collect()
    }

    /// Number of stored probability entries.
    pub fn parameter_count(&self) -> usize {
        self.cpts.iter().map(|c| c.probs().len()).sum()
    }

    /// Joint probability of a full assignment.
    pub fn joint(&self, assignment: &[u32]) -> f64 {
        self.cpts.iter().map(|c| c.prob(assignment[c.node()], c.config_of(assignment))).product()
    }

    /// Returns a copy whose CPT at `child` is replaced; all other CPTs stay shared.
    pub(crate) fn with_family(&self, dag: Dag, child: usize, cpt: Cpt) -> Result<Self> {
        let mut cpts = self.cpts.clone();
        cpts[child] = Arc::new(cpt);
        BayesNet::assemble(self.attrs.clone(), dag, cpts, self.row_count, self.alpha)
    }

    fn check_rows(&self, rows: &EncodedTable) -> Result<()> {
        if rows.n_attrs() != self.len() {
            return Err(Error::Invalid(format!(
                "update rows have {} attributes, model has {}",
                rows.n_attrs(),
                self.len()
            )));
        }
        for row in rows.rows() {
            for (a, &c) in self.attrs.iter().zip(row) {
                if c as usize >= a.domain_size() {
                    return Err(Error::UnseenValue { attr: a.name.clone(), value: c.to_string() });
                }
            }
        }
        Ok(())
    }

    fn update(&self, rows: &EncodedTable, remove: bool) -> Result<Self> {
        self.check_rows(rows)?;
        if rows.row_count() == 0 {
            return Ok(self.clone());
        }
        let n = rows.row_count() as u64;
        if remove && n > self.row_count {
            return Err(Error::NegativeCount("row_count".into()));
        }
        let rs: Vec<&[u32]> = rows.rows().collect();
        let mut cpts = Vec::with_capacity(self.len());
        for (v, cpt) in self.cpts.iter().enumerate() {
            let mut c = Cpt::clone(cpt);
            c.apply(&rs, remove).map_err(|_| Error::NegativeCount(self.attrs[v].name.clone()))?;
            cpts.push(Arc::new(c));
        }
        let row_count = if remove { self.row_count - n } else { self.row_count + n };
        BayesNet::assemble(self.attrs.clone(), self.dag.clone(), cpts, row_count, self.alpha)
    }

    /// Adds the rows' counts and renormalizes; the DAG is unchanged.
    pub fn update_insert(&self, rows: &EncodedTable) -> Result<Self> {
        self.update(rows, false)
    }

    /// Removes the rows' counts; fails if any count would go negative.
    pub fn update_delete(&self, rows: &EncodedTable) -> Result<Self> {
        self.update(rows, true)
    }

    pub fn to_file(&self) -> BayesNetFile {
        BayesNetFile {
            format_version: FORMAT_VERSION,
            model_id: self.model_id.clone(),
            attrs: self.attrs.clone(),
            dag: self.dag.clone(),
            alpha: self.alpha,
            cpts: self.cpts.iter().map(|c| c.to_record()).collect(),
            row_count: self.row_count,
        }
    }

    pub fn from_file(f: BayesNetFile) -> Result<Self> {
        if f.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format_version {}", f.format_version)));
        }
        for a in &f.attrs {
            a.validate().map_err(Error::Format)?;
        }
        let cpts = f
            .cpts
            .into_iter()
            .map(|r| Cpt::from_record(r).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        for c in &cpts {
            c.check_consistency(1e-9)?;
            if (c.alpha() - f.alpha).abs() > 0.0 {
                return Err(Error::Format("per-CPT alpha differs from the model alpha".into()));
            }
        }
        let bn = BayesNet::assemble(f.attrs, f.dag, cpts, f.row_count, f.alpha)?;
        if bn.model_id != f.model_id {
            return Err(Error::Format(format!(
                "model_id {} does not match content ({})",
                f.model_id, bn.model_id
            )));
        }
        Ok(bn)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let s = serde_json::to_string(&self.to_file())?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        BayesNet::from_file(serde_json::from_str(&s)?)
    }
}
