use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize};

use super::attr::AttributeMeta;
use crate::{Error, Result};

/// A set of codes, kept sorted and unique. Empty is a legal, explicitly empty region.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Region(Vec<u32>);

impl Region {
    pub fn new(mut codes: Vec<u32>) -> Self {
        codes.sort_unstable();
        codes.dedup();
        Region(codes)
    }

    pub fn full(domain_size: usize) -> Self {
        Region((0..domain_size as u32).collect())
    }

    pub fn codes(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, code: u32) -> bool {
        self.0.binary_search(&code).is_ok()
    }

    pub fn is_full(&self, domain_size: usize) -> bool {
        self.0.len() == domain_size && self.0.last().map_or(domain_size == 0, |&c| c as usize + 1 == domain_size)
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Region(self.0.iter().copied().filter(|c| other.contains(*c)).collect())
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.0.iter().all(|c| other.contains(*c))
    }

    pub fn mask(&self, domain_size: usize) -> Vec<bool> {
        let mut m = vec![false; domain_size];
        for &c in &self.0 {
            if (c as usize) < domain_size {
                m[c as usize] = true;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    In(Vec<String>),
    Range { lo: f64, hi: f64 },
}

/// Resolves a raw predicate to codes. IN values outside the domain are dropped; range
/// predicates keep every value or bin overlapping `[lo, hi]`. The absent code never
/// belongs to a user region.
pub fn encode_region(meta: &AttributeMeta, pred: &Predicate) -> Region {
    match pred {
        Predicate::In(values) => Region::new(values.iter().filter_map(|v| meta.encode(v)).collect()),
        Predicate::Range { lo, hi } => Region::new(meta.codes_in_range(*lo, *hi)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryRegion {
    pub table: String,
    pub attr: String,
    pub region: Region,
}

/// Conjunctive query in canonical form: one region per constrained attribute; absent
/// attributes are unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub tables: BTreeSet<String>,
    /// Sorted by `(table, attr)`, at most one entry per attribute.
    pub regions: Vec<QueryRegion>,
    pub true_cardinality: Option<u64>,
}

/// Attribute metadata lookup used to resolve raw predicates.
pub trait Catalog {
    fn attr(&self, table: &str, attr: &str) -> Option<&AttributeMeta>;
    fn has_table(&self, table: &str) -> bool;
}

impl Query {
    pub fn new(tables: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Query {
            tables: tables.into_iter().map(Into::into).collect(),
            regions: Vec::new(),
            true_cardinality: None,
        }
    }

    /// Adds a region, intersecting with an existing one on the same attribute.
    pub fn with_region(mut self, table: &str, attr: &str, region: Region) -> Self {
        self.add_region(table, attr, region);
        self
    }

    pub fn add_region(&mut self, table: &str, attr: &str, region: Region) {
        match self
            .regions
            .binary_search_by(|r| (r.table.as_str(), r.attr.as_str()).cmp(&(table, attr)))
        {
            Ok(i) => self.regions[i].region = self.regions[i].region.intersect(&region),
            Err(i) => self.regions.insert(
                i,
                QueryRegion { table: table.to_string(), attr: attr.to_string(), region },
            ),
        }
    }

    pub fn region(&self, table: &str, attr: &str) -> Option<&Region> {
        self.regions
            .iter()
            .find(|r| r.table == table && r.attr == attr)
            .map(|r| &r.region)
    }

    pub fn regions_of<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a QueryRegion> + 'a {
        self.regions.iter().filter(move |r| r.table == table)
    }

    pub fn has_empty_region(&self) -> bool {
        self.regions.iter().any(|r| r.region.is_empty())
    }

    /// Resolves a raw query against attribute metadata.
    pub fn resolve(raw: &RawQuery, catalog: &dyn Catalog) -> Result<Query> {
        if raw.tables.is_empty() {
            return Err(Error::Invalid("query names no tables".into()));
        }
        for t in &raw.tables {
            if !catalog.has_table(t) {
                return Err(Error::UnknownTable(t.clone()));
            }
        }
        let mut q = Query::new(raw.tables.iter().cloned());
        q.true_cardinality = raw.true_card;
        for p in &raw.predicates {
            let (table, attr) = split_attr(p.attr(), &raw.tables)?;
            let meta = catalog.attr(table, attr).ok_or_else(|| Error::UnknownAttribute {
                attr: p.attr().to_string(),
                context: format!("table `{table}`"),
            })?;
            let region = encode_region(meta, &p.predicate());
            q.add_region(table, attr, region);
        }
        Ok(q)
    }
}

fn split_attr<'a>(qualified: &'a str, tables: &'a [String]) -> Result<(&'a str, &'a str)> {
    for t in tables {
        if let Some(rest) = qualified.strip_prefix(t.as_str()).and_then(|r| r.strip_prefix('.')) {
            return Ok((t.as_str(), rest));
        }
    }
    if tables.len() == 1 {
        return Ok((tables[0].as_str(), qualified));
    }
    Err(Error::UnknownAttribute {
        attr: qualified.to_string(),
        context: format!("tables {tables:?} (qualify as table.attr)"),
    })
}

/// Workload line / query file: `{tables, predicates: [{attr, op, values | lo, hi}], true_card?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawQuery {
    pub tables: Vec<String>,
    #[serde(default)]
    pub predicates: Vec<RawPredicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_card: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum RawPredicate {
    In {
        attr: String,
        #[serde(deserialize_with = "strings_or_numbers")]
        values: Vec<String>,
    },
    Range { attr: String, lo: f64, hi: f64 },
}

impl RawPredicate {
    pub fn attr(&self) -> &str {
        match self {
            RawPredicate::In { attr, .. } | RawPredicate::Range { attr, .. } => attr,
        }
    }

    pub fn predicate(&self) -> Predicate {
        match self {
            RawPredicate::In { values, .. } => Predicate::In(values.clone()),
            RawPredicate::Range { lo, hi, .. } => Predicate::Range { lo: *lo, hi: *hi },
        }
    }
}

fn strings_or_numbers<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    let values = Vec::<serde_json::Value>::deserialize(d)?;
    values
        .into_iter()
        .map(|v| match v {
            serde_json::Value::String(s) => Ok(s),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            serde_json::Value::Bool(b) => Ok(b.to_string()),
            other => Err(serde::de::Error::custom(format!("unsupported IN value {other}"))),
        })
        .collect()
}
