//! Ensembles of networks over a join schema.
//!
//! Tables are contracted into groups of bounded size along strongly dependent join
//! edges. Each group gets one network over its full outer join, extended with fanout
//! attributes that count how many join rows a tuple expands into; join queries spanning
//! several groups combine the per-group fanout-weighted masses.

mod contract;
mod fanout;
mod join;
mod model;
#[cfg(test)]
mod tests;

pub use contract::{contract_join_tree, Contraction, Merge};
pub use fanout::{
    compute_fanout_columns, data_name, edge_name, fanout_domain, inbound_name, join_table, outbound_name, CrossEdge,
    FanoutAttr, FanoutKind, FANOUT_EXACT_LIMIT,
};
pub use join::{sample_full_join, JoinSample, ABSENT};
pub use model::{
    build_dependence_matrix, build_ensemble, combine, estimate_batch, estimate_cardinality, EnsembleFile,
    EnsembleModel, EnsembleOptions, GroupFile, GroupTerm, QueryPlan, StructureMethod, TableGroup,
    DEFAULT_JOIN_SAMPLE, DEPENDENCE_ROWS, ENSEMBLE_FORMAT_VERSION,
};
