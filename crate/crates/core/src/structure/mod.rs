//! DAG learning: Chow-Liu trees, greedy BIC search and expert-edge edits.

mod dag;
mod expert;
mod learn;

pub use dag::Dag;
pub use expert::{add_expert_edge, add_expert_edge_with_budget, remove_edge};
pub use learn::{
    chow_liu, greedy_hill_climb, mi_matrix, mutual_information, ConstraintsFile, Score, StructureConstraints,
    DEFAULT_MAX_PARENTS,
};
