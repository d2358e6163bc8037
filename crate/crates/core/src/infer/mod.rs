//! Probability and fanout-expectation inference on a single Bayesian network.
//!
//! All estimators answer the same quantity over [`Evidence`]: the mass of the region,
//! optionally weighted per code. Exact paths are brute-force enumeration, interpreted
//! variable elimination and compiled plans; progressive sampling is the approximate one.

mod cache;
mod evidence;
mod factor;
mod plan;
mod reduce;
mod sampling;

use serde::{Deserialize, Serialize};

pub use cache::{PlanCache, DEFAULT_PLAN_CAPACITY};
pub use evidence::{Evidence, WeightFn};
pub use factor::{brute_force_prob, variable_elimination, BRUTE_FORCE_CAP};
pub use plan::{compile_plan, CompiledPlan, PlanKind, Step};
pub use reduce::{choose_elim_order, full_graph, reduce_graph, validate_order, ReducedGraph};
pub use sampling::{progressive_sample, progressive_sample_prob, SampleMatrix, DEFAULT_SAMPLES};

use crate::params::BayesNet;
use crate::{Error, Result};

/// Estimator used to evaluate evidence mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum Backend {
    /// Interpreted variable elimination on the reduced graph.
    Ve,
    /// Cached compiled plans.
    #[default]
    CompiledVe,
    /// Progressive sampling with `k` rows.
    Sampling { k: usize, seed: u64 },
}


/// Evaluates the evidence mass with the chosen backend.
pub fn evaluate(bn: &BayesNet, ev: &Evidence, backend: Backend, cache: &PlanCache) -> Result<f64> {
    match backend {
        Backend::Ve => {
            let g = reduce_graph(bn, ev);
            let order = choose_elim_order(bn, &g);
            variable_elimination(bn, ev, &g, &order)
        }
        Backend::CompiledVe => cache.get_or_compile(bn, ev)?.execute(bn, ev),
        Backend::Sampling { k, seed } => progressive_sample_prob(bn, ev, k, seed),
    }
}

/// `P(Q) * E[prod_j weight(F_j) | Q]` for fanout nodes `fanout` that the query leaves
/// unconstrained. Weights factorize over the fanout nodes, so each becomes a per-code
/// weight vector and the held (last) fanout node is dotted with its weights at the end.
pub fn fanout_expectation(
    bn: &BayesNet,
    query: &Evidence,
    fanout: &[(usize, WeightFn)],
    backend: Backend,
    cache: &PlanCache,
) -> Result<f64> {
    let mut ev = query.clone();
    for &(f, wf) in fanout {
        if f >= bn.len() {
            return Err(Error::Invalid(format!("fanout node {f} out of range")));
        }
        if query.region(f).is_some() {
            return Err(Error::FanoutConstrained(bn.attrs()[f].name.clone()));
        }
        ev.weight_by(f, &wf.vector(&bn.attrs()[f]));
    }
    evaluate(bn, &ev, backend, cache)
}
