//! Cardinality estimation with ensembles of discrete Bayesian networks.
//!
//! The crate is organized bottom-up:
//!
//! * [`data`] ingests CSV tables, encodes attributes to dense codes, and
//!   generates synthetic tables and query workloads with exact labels.
//! * [`rdc`] scores nonlinear dependence between attributes and tables.
//! * [`structure`] learns network DAGs (Chow-Liu trees, greedy BIC search).
//! * [`params`] fits and incrementally updates conditional probability tables.
//! * [`infer`] answers region queries on one network: brute force, variable
//!   elimination, compiled and cached elimination plans, progressive sampling.
//! * [`ensemble`] partitions a join schema into table groups, learns one network
//!   per group over the group's full outer join, and combines them for joins.
//! * [`eval`] computes q-errors and workload reports.
//!
//! Data-parallel loops go through [`exec::Exec`]; with the `parallel` feature
//! disabled everything runs sequentially with identical results.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod exec;
pub mod infer;
pub mod params;
pub mod rdc;
pub mod structure;

pub use error::{Error, Result};
