use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attr::AttributeMeta;
use super::schema::{JoinEdge, JoinSchema, SchemaTable};
use super::table::EncodedTable;
use crate::{Error, Result};

/// Knobs of the synthetic single-table generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Pareto shape; 0 means uniform, larger is more skewed.
    pub skew: f64,
    /// Probability that a cell copies its source column.
    pub correlation: f64,
    pub domain: usize,
    /// Number of attributes.
    pub scale: usize,
    pub rows: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.skew >= 0.0 && self.skew.is_finite()) {
            return Err(Error::Invalid(format!("skew must be >= 0, got {}", self.skew)));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::Invalid(format!("correlation must lie in [0,1], got {}", self.correlation)));
        }
        if self.domain == 0 || self.scale == 0 || self.rows == 0 {
            return Err(Error::Invalid("domain, scale and rows must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTable {
    pub table: EncodedTable,
    /// `sources[i]` is the earlier column that column `i` copies from (`None` for column 0).
    pub sources: Vec<Option<usize>>,
}

/// Draws one code in `[0, d)` from a Pareto(`skew`) law truncated to `[1, d + 1)` and
/// floored; `skew == 0` gives the uniform law.
fn pareto_code(rng: &mut impl Rng, skew: f64, d: usize) -> u32 {
    if skew == 0.0 {
        return rng.gen_range(0..d as u32);
    }
    let tail = ((d + 1) as f64).powf(-skew);
    let u: f64 = rng.gen();
    let x = (1.0 - u * (1.0 - tail)).powf(-1.0 / skew);
    ((x.floor() as i64 - 1).clamp(0, d as i64 - 1)) as u32
}

/// Generates a table whose first column is Pareto-distributed and whose column `i > 0`
/// copies a uniformly chosen earlier column with probability `correlation`, drawing a
/// fresh Pareto value otherwise. Deterministic in `spec.seed`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticTable> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.scale;
    let sources: Vec<Option<usize>> = (0..n).map(|i| (i > 0).then(|| rng.gen_range(0..i))).collect();
    let mut codes = Vec::with_capacity(spec.rows * n);
    let mut row = vec![0u32; n];
    for _ in 0..spec.rows {
        for i in 0..n {
            row[i] = match sources[i] {
                Some(j) if rng.gen::<f64>() < spec.correlation => row[j],
                _ => pareto_code(&mut rng, spec.skew, spec.domain),
            };
        }
        codes.extend_from_slice(&row);
    }
    let attrs = (0..n).map(|i| AttributeMeta::integer_range(format!("c{i}"), spec.domain)).collect();
    Ok(SyntheticTable {
        table: EncodedTable::new("synthetic", attrs, codes)?,
        sources,
    })
}

/// Star schema: a center table joined by foreign key to `satellites` tables, in the
/// shape of the JOB-light benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarSpec {
    pub satellites: usize,
    pub center_rows: usize,
    /// Per-center-row fanout into each satellite is drawn from `0..=max_fanout`.
    pub max_fanout: usize,
    pub domain: usize,
    pub correlation: f64,
    pub seed: u64,
}

impl Default for StarSpec {
    fn default() -> Self {
        StarSpec { satellites: 5, center_rows: 200, max_fanout: 3, domain: 6, correlation: 0.6, seed: 7 }
    }
}

/// Generates the star schema. The center table is `title` with attributes `kind` and
/// `year`; satellite `s{i}` has attribute `v` correlated with the center's `kind`, and
/// the number of satellite rows per center row depends on `year`.
pub fn gen_star_schema(spec: &StarSpec) -> Result<JoinSchema> {
    if spec.domain == 0 || spec.center_rows == 0 {
        return Err(Error::Invalid("star schema needs a positive domain and row count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.domain as u32;
    let mut kind = Vec::with_capacity(spec.center_rows);
    let mut year = Vec::with_capacity(spec.center_rows);
    for _ in 0..spec.center_rows {
        let k = pareto_code(&mut rng, 1.0, spec.domain);
        kind.push(k);
        year.push(if rng.gen::<f64>() < spec.correlation { k } else { rng.gen_range(0..d) });
    }
    let center = EncodedTable::from_columns(
        "title",
        vec![
            AttributeMeta::integer_range("kind", spec.domain),
            AttributeMeta::integer_range("year", spec.domain),
        ],
        &[kind.clone(), year.clone()],
    )?;
    let ids: Vec<Option<u32>> = (0..spec.center_rows as u32).map(Some).collect();
    let mut tables = vec![SchemaTable { table: center, keys: BTreeMap::from([("id".to_string(), ids)]) }];
    let mut joins = Vec::new();
    for s in 0..spec.satellites {
        let name = format!("s{s}");
        let mut v = Vec::new();
        let mut fk = Vec::new();
        for r in 0..spec.center_rows {
            let hi = (year[r] as usize * (spec.max_fanout + 1)) / spec.domain.max(1);
            let fanout = rng.gen_range(0..=hi.min(spec.max_fanout).max(usize::from(s % 2 == 0)));
            for _ in 0..fanout {
                fk.push(Some(r as u32));
                v.push(if rng.gen::<f64>() < spec.correlation {
                    (kind[r] + s as u32) % d
                } else {
                    rng.gen_range(0..d)
                });
            }
        }
        if v.is_empty() {
            fk.push(Some(0));
            v.push(0);
        }
        let table = EncodedTable::from_columns(
            name.clone(),
            vec![AttributeMeta::integer_range("v", spec.domain)],
            &[v],
        )?;
        tables.push(SchemaTable { table, keys: BTreeMap::from([("title_id".to_string(), fk)]) });
        joins.push(JoinEdge::new("title", "id", &name, "title_id"));
    }
    JoinSchema::from_interned(tables, joins, Some("title".into()))
}
