use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("attribute `{attr}` not found in {context}")]
    UnknownAttribute { attr: String, context: String },

    #[error("table `{0}` not found")]
    UnknownTable(String),

    #[error("zero usable rows in {0}")]
    ZeroUsableRows(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unsatisfiable structure constraints: {0}")]
    Constraints(String),

    #[error("adding edge {parent} -> {child} would create a cycle")]
    Cycle { parent: String, child: String },

    #[error("CPT budget exceeded for `{node}`: {size} entries > {budget}")]
    CptBudget {
        node: String,
        size: usize,
        budget: usize,
    },

    #[error("value `{value}` is not in the domain of `{attr}`")]
    UnseenValue { attr: String, value: String },

    #[error("deleting rows drives a count of `{0}` negative")]
    NegativeCount(String),

    #[error("state space of {states} assignments exceeds the cap of {cap}")]
    StateSpace { states: u128, cap: u128 },

    #[error("elimination order is invalid: {0}")]
    ElimOrder(String),

    #[error("fanout attribute `{0}` is constrained by the query")]
    FanoutConstrained(String),

    #[error("tables {0:?} are not connected in the join tree")]
    Disconnected(Vec<String>),

    #[error("join key `{key}` missing from table `{table}`")]
    MissingJoinKey { table: String, key: String },

    #[error("model format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
