//! Categorical CPT fitting with additive smoothing and exact incremental updates.

mod cpt;
mod model;

pub use cpt::{cpt_size, family_counts, Cpt, CptRecord, DEFAULT_CPT_BUDGET};
pub use model::{fit_cpts, random_bayes_net, BayesNet, BayesNetFile, DEFAULT_ALPHA, FORMAT_VERSION};
