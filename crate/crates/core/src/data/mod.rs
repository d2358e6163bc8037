//! Table ingestion, attribute encoding, query regions, synthetic data and workloads.

mod attr;
mod query;
mod schema;
mod synthetic;
mod table;
mod truth;
mod workload;

pub use attr::{equal_frequency_edges, AttrDecl, AttrKind, AttributeMeta, DeclKind, DEFAULT_BINS};
pub use query::{encode_region, Catalog, Predicate, Query, QueryRegion, RawPredicate, RawQuery, Region};
pub use schema::{
    load_schema, write_schema, JoinEdge, JoinSchema, JoinTree, SchemaFile, SchemaMeta, SchemaTable, TableMeta,
};
pub use synthetic::{gen_star_schema, gen_synthetic, StarSpec, SyntheticSpec, SyntheticTable};
pub use table::{encode_rows, load_table, load_table_with_keys, write_csv, EncodedTable, LoadReport};
pub use truth::true_cardinality;
pub use workload::{gen_workload, WorkloadSpec};
