use crate::data::EncodedTable;
use crate::params::{BayesNet, Cpt, DEFAULT_CPT_BUDGET};
use crate::{Error, Result};

fn named(bn: &BayesNet, e: Error) -> Error {
    match e {
        Error::Cycle { parent, child } => {
            let name = |s: &str| s.parse::<usize>().map(|i| bn.attrs()[i].name.clone()).unwrap_or_else(|_| s.into());
            Error::Cycle { parent: name(&parent), child: name(&child) }
        }
        other => other,
    }
}

fn refit_child(bn: &BayesNet, table: &EncodedTable, dag: crate::structure::Dag, child: usize, budget: usize) -> Result<BayesNet> {
    if table.n_attrs() != bn.len() {
        return Err(Error::Invalid("refit table does not match the model attributes".into()));
    }
    let cpt = Cpt::fit(table, child, dag.parents(child), bn.alpha(), budget)?;
    bn.with_family(dag, child, cpt)
}

/// Adds `parent -> child` and refits only the child's CPT from `table`; every other CPT is
/// shared with the input model.
pub fn add_expert_edge(bn: &BayesNet, table: &EncodedTable, parent: usize, child: usize) -> Result<BayesNet> {
    add_expert_edge_with_budget(bn, table, parent, child, DEFAULT_CPT_BUDGET)
}

pub fn add_expert_edge_with_budget(
    bn: &BayesNet,
    table: &EncodedTable,
    parent: usize,
    child: usize,
    budget: usize,
) -> Result<BayesNet> {
    let mut dag = bn.dag().clone();
    dag.add_edge(parent, child).map_err(|e| named(bn, e))?;
    refit_child(bn, table, dag, child, budget)
}

/// Inverse of [`add_expert_edge`].
pub fn remove_edge(bn: &BayesNet, table: &EncodedTable, parent: usize, child: usize) -> Result<BayesNet> {
    let mut dag = bn.dag().clone();
    if !dag.remove_edge(parent, child) {
        return Err(Error::Invalid(format!("edge {parent} -> {child} is not in the model")));
    }
    refit_child(bn, table, dag, child, DEFAULT_CPT_BUDGET)
}
