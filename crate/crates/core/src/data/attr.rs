use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const DEFAULT_BINS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttrKind {
    /// Sorted distinct raw values; numeric order when every value parses as a number.
    Categorical { values: Vec<String> },
    /// Strictly increasing bin edges; bin `i` is `[edges[i], edges[i+1])`, the last bin closed.
    Binned { edges: Vec<f64> },
}

/// One encoded attribute. Codes are `0..domain_size()`; when `nullable` is set the
/// last code is the reserved "absent" value produced by outer joins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMeta {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttrKind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub nullable: bool,
}

/// Column declaration in a schema file or for [`super::load_table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrDecl {
    pub name: String,
    pub kind: DeclKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclKind {
    Categorical,
    Continuous,
}

impl AttrDecl {
    pub fn categorical(name: impl Into<String>) -> Self {
        AttrDecl {
            name: name.into(),
            kind: DeclKind::Categorical,
            bins: None,
        }
    }

    pub fn continuous(name: impl Into<String>, bins: usize) -> Self {
        AttrDecl {
            name: name.into(),
            kind: DeclKind::Continuous,
            bins: Some(bins),
        }
    }
}

fn all_numeric<S: AsRef<str>>(values: &[S]) -> bool {
    values
        .iter()
        .all(|v| v.as_ref().trim().parse::<f64>().map(|x| x.is_finite()).unwrap_or(false))
}

fn cmp_raw(a: &str, b: &str, numeric: bool) -> Ordering {
    if numeric {
        let x: f64 = a.trim().parse().unwrap_or(f64::NAN);
        let y: f64 = b.trim().parse().unwrap_or(f64::NAN);
        x.total_cmp(&y).then_with(|| a.cmp(b))
    } else {
        a.cmp(b)
    }
}

impl AttributeMeta {
    /// Categorical attribute over the distinct values of `raw`.
    pub fn categorical_from<S: AsRef<str>>(name: impl Into<String>, raw: &[S]) -> Self {
        let mut values: Vec<String> = raw.iter().map(|s| s.as_ref().to_string()).collect();
        let numeric = all_numeric(&values);
        values.sort_by(|a, b| cmp_raw(a, b, numeric));
        values.dedup();
        AttributeMeta {
            name: name.into(),
            kind: AttrKind::Categorical { values },
            nullable: false,
        }
    }

    /// Categorical attribute whose values are the integers `0..n`.
    pub fn integer_range(name: impl Into<String>, n: usize) -> Self {
        AttributeMeta {
            name: name.into(),
            kind: AttrKind::Categorical {
                values: (0..n).map(|v| v.to_string()).collect(),
            },
            nullable: false,
        }
    }

    pub fn binned(name: impl Into<String>, edges: Vec<f64>) -> Self {
        AttributeMeta {
            name: name.into(),
            kind: AttrKind::Binned { edges },
            nullable: false,
        }
    }

    /// Number of real (non-absent) codes.
    pub fn base_size(&self) -> usize {
        match &self.kind {
            AttrKind::Categorical { values } => values.len(),
            AttrKind::Binned { edges } => edges.len().saturating_sub(1),
        }
    }

    pub fn domain_size(&self) -> usize {
        self.base_size() + usize::from(self.nullable)
    }

    pub fn absent_code(&self) -> Option<u32> {
        self.nullable.then(|| self.base_size() as u32)
    }

    pub fn is_numeric(&self) -> bool {
        match &self.kind {
            AttrKind::Categorical { values } => all_numeric(values),
            AttrKind::Binned { .. } => true,
        }
    }

    pub fn with_absent(mut self) -> Self {
        self.nullable = true;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        match &self.kind {
            AttrKind::Categorical { values } => {
                if values.is_empty() {
                    return Err(format!("`{}` has an empty domain", self.name));
                }
                let numeric = all_numeric(values);
                if values
                    .windows(2)
                    .any(|w| cmp_raw(&w[0], &w[1], numeric) != Ordering::Less)
                {
                    return Err(format!("`{}` domain is not sorted and unique", self.name));
                }
            }
            AttrKind::Binned { edges } => {
                if edges.len() < 2 {
                    return Err(format!("`{}` needs at least two bin edges", self.name));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(format!("`{}` bin edges are not strictly increasing", self.name));
                }
            }
        }
        Ok(())
    }

    /// Code of a raw value, or `None` when it falls outside the domain.
    pub fn encode(&self, raw: &str) -> Option<u32> {
        match &self.kind {
            AttrKind::Categorical { values } => values
                .iter()
                .position(|v| v == raw)
                .or_else(|| {
                    // numeric domains also match by value ("1.0" == "1")
                    let x: f64 = raw.trim().parse().ok()?;
                    values
                        .iter()
                        .position(|v| v.trim().parse::<f64>().map(|y| y == x).unwrap_or(false))
                })
                .map(|i| i as u32),
            AttrKind::Binned { edges } => raw.trim().parse::<f64>().ok().and_then(|x| bin_of(edges, x)),
        }
    }

    /// Encoder for bulk ingestion: one hash lookup per value for categorical domains.
    pub(crate) fn encoder(&self) -> Encoder<'_> {
        match &self.kind {
            AttrKind::Categorical { values } => Encoder::Map(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v.as_str(), i as u32))
                    .collect(),
            ),
            AttrKind::Binned { edges } => Encoder::Bins(edges),
        }
    }

    /// Raw label of a code (bin codes render as `[lo,hi)`).
    pub fn decode(&self, code: u32) -> Option<String> {
        if Some(code) == self.absent_code() {
            return Some(String::new());
        }
        match &self.kind {
            AttrKind::Categorical { values } => values.get(code as usize).cloned(),
            AttrKind::Binned { edges } => {
                let i = code as usize;
                (i + 1 < edges.len()).then(|| format!("[{},{})", edges[i], edges[i + 1]))
            }
        }
    }

    /// Numeric value represented by a code: the parsed value for numeric categorical
    /// domains, the bin midpoint for binned domains.
    pub fn numeric_value(&self, code: u32) -> Option<f64> {
        if Some(code) == self.absent_code() {
            return None;
        }
        match &self.kind {
            AttrKind::Categorical { values } => values.get(code as usize)?.trim().parse().ok(),
            AttrKind::Binned { edges } => {
                let i = code as usize;
                (i + 1 < edges.len()).then(|| 0.5 * (edges[i] + edges[i + 1]))
            }
        }
    }

    /// Codes whose value (or bin) overlaps the closed interval `[lo, hi]`.
    pub fn codes_in_range(&self, lo: f64, hi: f64) -> Vec<u32> {
        if !(lo <= hi) {
            return Vec::new();
        }
        match &self.kind {
            AttrKind::Categorical { values } => values
                .iter()
                .enumerate()
                .filter_map(|(i, v)| {
                    let x: f64 = v.trim().parse().ok()?;
                    (lo <= x && x <= hi).then_some(i as u32)
                })
                .collect(),
            AttrKind::Binned { edges } => {
                let last = edges.len() - 2;
                (0..=last)
                    .filter(|&i| {
                        let (a, b) = (edges[i], edges[i + 1]);
                        a <= hi && (lo < b || (i == last && lo <= b))
                    })
                    .map(|i| i as u32)
                    .collect()
            }
        }
    }
}

pub(crate) enum Encoder<'a> {
    Map(HashMap<&'a str, u32>),
    Bins(&'a [f64]),
}

impl Encoder<'_> {
    pub(crate) fn encode(&self, raw: &str) -> Option<u32> {
        match self {
            Encoder::Map(m) => m.get(raw).copied(),
            Encoder::Bins(edges) => raw.trim().parse::<f64>().ok().and_then(|x| bin_of(edges, x)),
        }
    }
}

fn bin_of(edges: &[f64], x: f64) -> Option<u32> {
    let (first, last) = (edges[0], edges[edges.len() - 1]);
    if !(x >= first && x <= last) {
        return None;
    }
    if x == last {
        return Some((edges.len() - 2) as u32);
    }
    // index of the last edge <= x
    let i = edges.partition_point(|&e| e <= x) - 1;
    Some(i as u32)
}

/// Equal-frequency bin edges over `values`: cut points are midpoints between
/// neighbouring order statistics at multiples of `n / bins`. Duplicate cut points
/// collapse, so heavy ties can yield fewer bins.
pub fn equal_frequency_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return vec![0.0, 1.0];
    }
    let (min, max) = (sorted[0], sorted[n - 1]);
    if min == max {
        return vec![min - 0.5, min + 0.5];
    }
    let bins = bins.max(1);
    let mut edges = vec![min];
    for b in 1..bins {
        let q = b * n / bins;
        if q == 0 || q >= n {
            continue;
        }
        let cut = 0.5 * (sorted[q - 1] + sorted[q]);
        if cut > *edges.last().unwrap() && cut < max {
            edges.push(cut);
        }
    }
    edges.push(max);
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_sorted_numeric_order() {
        let a = AttributeMeta::categorical_from("x", &["10", "2", "2", "1"]);
        assert_eq!(
            a.kind,
            AttrKind::Categorical {
                values: vec!["1".into(), "2".into(), "10".into()]
            }
        );
        assert_eq!(a.encode("10"), Some(2));
        assert_eq!(a.encode("3"), None);
        assert!(a.validate().is_ok());
    }

    #[test]
    fn equal_frequency_two_bins() {
        let edges = equal_frequency_edges(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(edges, vec![1.0, 2.5, 4.0]);
        let a = AttributeMeta::binned("y", edges);
        let codes: Vec<_> = ["1.0", "2.0", "3.0", "4.0"].iter().map(|v| a.encode(v).unwrap()).collect();
        assert_eq!(codes, vec![0, 0, 1, 1]);
    }

    #[test]
    fn constant_column_gets_one_bin() {
        let edges = equal_frequency_edges(&[5.0; 10], 8);
        let a = AttributeMeta::binned("c", edges);
        assert_eq!(a.domain_size(), 1);
        assert!(a.validate().is_ok());
    }

    #[test]
    fn range_overlap_on_bins() {
        let a = AttributeMeta::binned("y", vec![1.0, 2.5, 4.0]);
        assert_eq!(a.codes_in_range(1.5, 3.5), vec![0, 1]);
        assert_eq!(a.codes_in_range(2.6, 3.0), vec![1]);
        assert_eq!(a.codes_in_range(4.0, 9.0), vec![1]);
        assert_eq!(a.codes_in_range(5.0, 9.0), Vec::<u32>::new());
    }

    #[test]
    fn absent_code_is_last() {
        let a = AttributeMeta::integer_range("x", 3).with_absent();
        assert_eq!(a.domain_size(), 4);
        assert_eq!(a.absent_code(), Some(3));
        assert_eq!(a.numeric_value(3), None);
    }
}
