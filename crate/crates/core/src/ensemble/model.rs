use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::contract::{contract_join_tree, Merge};
use super::fanout::{
    compute_fanout_columns, data_name, edge_name, inbound_name, join_table, outbound_counts, outbound_name, CrossEdge,
    FanoutAttr, FanoutKind,
};
use super::join::{sample_full_join, GroupJoin};
use crate::data::{EncodedTable, JoinSchema, Query, Region, SchemaMeta};
use crate::exec::Exec;
use crate::infer::{evaluate, Backend, Evidence, PlanCache, WeightFn};
use crate::params::{fit_cpts, BayesNet, BayesNetFile, DEFAULT_ALPHA};
use crate::rdc::{table_pair_rdc, DependenceMatrix, RdcParams};
use crate::structure::{chow_liu, greedy_hill_climb, ConstraintsFile, Dag, Score, DEFAULT_MAX_PARENTS};
use crate::{Error, Result};

pub const DEFAULT_JOIN_SAMPLE: usize = 100_000;
/// Row cap of the global join sample used for dependence scores.
pub const DEPENDENCE_ROWS: usize = 10_000;
pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureMethod {
    #[default]
    ChowLiu,
    Greedy,
    /// Complete DAG in attribute order: lossless given enough data, exponential CPTs.
    Saturated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub budget: usize,
    /// Rows sampled per group join; `None` materializes every join exactly.
    pub sample_size: Option<usize>,
    pub seed: u64,
    pub structure: StructureMethod,
    pub max_parents: usize,
    pub alpha: f64,
    #[serde(default)]
    pub constraints: ConstraintsFile,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            budget: 2,
            sample_size: Some(DEFAULT_JOIN_SAMPLE),
            seed: 0,
            structure: StructureMethod::ChowLiu,
            max_parents: DEFAULT_MAX_PARENTS,
            alpha: DEFAULT_ALPHA,
            constraints: ConstraintsFile::default(),
        }
    }
}

/// One network over a group's full outer join plus fanout attributes.
#[derive(Debug, Clone)]
pub struct TableGroup {
    pub members: Vec<usize>,
    pub bn: BayesNet,
    pub fanouts: Vec<FanoutAttr>,
    /// Exact size of the group's full outer join.
    pub full_join_size: u128,
    /// Per outbound attribute: mean over join rows of `max(out, 1)` (1 for rows missing the source table).
    pub out_means: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub schema: SchemaMeta,
    pub options: EnsembleOptions,
    pub dependence: DependenceMatrix,
    pub merges: Vec<Merge>,
    pub groups: Vec<TableGroup>,
    group_of: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
pub struct GroupFile {
    pub members: Vec<String>,
    pub fanouts: Vec<FanoutAttr>,
    pub full_join_size: u128,
    pub out_means: BTreeMap<String, f64>,
    pub model: BayesNetFile,
}

#[derive(Serialize, Deserialize)]
pub struct EnsembleFile {
    pub format_version: u32,
    pub schema: SchemaMeta,
    pub options: EnsembleOptions,
    pub dependence: DependenceMatrix,
    pub merges: Vec<Merge>,
    pub groups: Vec<GroupFile>,
}

fn mix(seed: u64, i: u64) -> u64 {
    seed ^ i.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Table-pair dependence over one global full-join sample of at most [`DEPENDENCE_ROWS`]
/// rows. Each entry is the mean attribute-pair RDC, with absent sides excluded per pair.
pub fn build_dependence_matrix(
    schema: &JoinSchema,
    sample_size: Option<usize>,
    seed: u64,
    params: &RdcParams,
    exec: Exec,
) -> Result<DependenceMatrix> {
    let n = schema.tables.len();
    let names = schema.meta.tables.iter().map(|t| t.name.clone()).collect();
    let counts: Vec<usize> = schema.meta.tables.iter().map(|t| t.attrs.len()).collect();
    let mut m = DependenceMatrix::new(names, counts.clone());
    if n < 2 {
        return Ok(m);
    }
    let cap = sample_size.unwrap_or(DEPENDENCE_ROWS).clamp(1, DEPENDENCE_ROWS);
    let all: Vec<usize> = (0..n).collect();
    let sample = sample_full_join(schema, &all, Some(cap), seed)?;
    let joined = join_table(schema, &sample)?;
    let mut offset = vec![0; n + 1];
    for t in 0..n {
        offset[t + 1] = offset[t] + counts[t];
    }
    let cols = |t: usize| (offset[t]..offset[t + 1]).collect::<Vec<_>>();
    for i in 0..n {
        for j in i + 1..n {
            if counts[i] == 0 || counts[j] == 0 {
                continue;
            }
            let p = RdcParams { seed: mix(params.seed, (i * n + j) as u64), ..*params };
            m.set(i, j, table_pair_rdc(&joined, &cols(i), &cols(j), &p, exec)?);
        }
    }
    Ok(m)
}

fn cross_edges(schema: &JoinSchema, groups: &[Vec<usize>], group_of: &[usize], gi: usize) -> Vec<CrossEdge> {
    let mut out = Vec::new();
    for (e, &(a, b)) in schema.tree().edges().iter().enumerate() {
        for (from, to) in [(a, b), (b, a)] {
            if group_of[from] == gi && group_of[to] != gi {
                out.push(CrossEdge {
                    from,
                    to,
                    edge: e,
                    neighbor_group: group_of[to],
                    neighbor_members: groups[group_of[to]].clone(),
                });
            }
        }
    }
    out
}

fn saturated_dag(n: usize) -> Result<Dag> {
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
    Dag::from_edges(n, &edges)
}

fn learn_dag(table: &EncodedTable, opts: &EnsembleOptions, exec: Exec) -> Result<Dag> {
    let c = opts.constraints.resolve(|name| table.attr_index(name), false)?;
    match opts.structure {
        StructureMethod::ChowLiu => chow_liu(table, &c, exec),
        StructureMethod::Greedy => greedy_hill_climb(table, &c, opts.max_parents, Score::Bic),
        StructureMethod::Saturated => saturated_dag(table.n_attrs()),
    }
}

fn build_group(
    schema: &JoinSchema,
    groups: &[Vec<usize>],
    group_of: &[usize],
    gi: usize,
    opts: &EnsembleOptions,
    exec: Exec,
) -> Result<TableGroup> {
    let members = &groups[gi];
    let cross = cross_edges(schema, groups, group_of, gi);
    let sample = sample_full_join(schema, members, opts.sample_size, mix(opts.seed, gi as u64))?;
    let (table, fanouts) = compute_fanout_columns(schema, &sample, &cross)?;
    let dag = learn_dag(&table, opts, exec)?;
    let bn = fit_cpts(&table, &dag, opts.alpha, exec)?;
    let g = GroupJoin::new(schema, members)?;
    let size = sample.full_size;
    let mut out_means = BTreeMap::new();
    for c in &cross {
        let counts = outbound_counts(schema, c)?;
        let (mut with, mut rows) = (0u128, 0u128);
        for (ai, &out) in counts.iter().enumerate() {
            let inb = g.inbound(c.from, ai);
            rows += inb;
            with += inb * out.max(1);
        }
        let mean = (with + (size - rows)) as f64 / size as f64;
        let name = |t: usize| &schema.meta.tables[t].name;
        out_means.insert(outbound_name(name(c.from), name(c.to)), mean);
    }
    Ok(TableGroup { members: members.clone(), bn, fanouts, full_join_size: size, out_means })
}

/// Partitions the schema into groups of at most `options.budget` tables and fits one
/// network per group over its full outer join with fanout attributes.
pub fn build_ensemble(schema: &JoinSchema, options: &EnsembleOptions, exec: Exec) -> Result<EnsembleModel> {
    if options.budget == 0 {
        return Err(Error::Invalid("budget must be >= 1".into()));
    }
    if options.sample_size == Some(0) {
        return Err(Error::Invalid("sample size must be >= 1".into()));
    }
    if !(options.alpha >= 0.0 && options.alpha.is_finite()) {
        return Err(Error::Invalid(format!("alpha must be finite and >= 0, got {}", options.alpha)));
    }
    let n = schema.tables.len();
    let dependence = if options.budget == 1 || n == 1 {
        let names = schema.meta.tables.iter().map(|t| t.name.clone()).collect();
        DependenceMatrix::new(names, schema.meta.tables.iter().map(|t| t.attrs.len()).collect())
    } else {
        let params = RdcParams { seed: options.seed, ..RdcParams::default() };
        build_dependence_matrix(schema, options.sample_size, options.seed, &params, exec)?
    };
    let contraction = contract_join_tree(&schema.meta, &dependence, options.budget)?;
    let groups = contraction.groups;
    let mut group_of = vec![0; n];
    for (gi, g) in groups.iter().enumerate() {
        for &t in g {
            group_of[t] = gi;
        }
    }
    let idx: Vec<usize> = (0..groups.len()).collect();
    let built = exec
        .map(&idx, |&gi| build_group(schema, &groups, &group_of, gi, options, exec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        schema: schema.meta.clone(),
        options: options.clone(),
        dependence,
        merges: contraction.merges,
        groups: built,
        group_of,
    })
}

/// Evidence on one group's network for the part of a query inside the group.
#[derive(Debug, Clone)]
pub struct GroupTerm {
    pub group: usize,
    pub evidence: Evidence,
}

/// Decomposition of a query over the ensemble: per touched group its evidence, and the
/// estimated full-join size over the touched groups.
#[derive(Debug, Clone)]
pub struct QueryPlan {
    pub terms: Vec<GroupTerm>,
    pub full_join_size: f64,
    pub root_group: usize,
}

impl EnsembleModel {
    pub fn budget(&self) -> usize {
        self.options.budget
    }

    pub fn group_of(&self, table: usize) -> usize {
        self.group_of[table]
    }

    pub fn group_of_table(&self, name: &str) -> Result<usize> {
        let t = self.schema.table_index(name).ok_or_else(|| Error::UnknownTable(name.to_string()))?;
        Ok(self.group_of[t])
    }

    fn table_name(&self, t: usize) -> &str {
        &self.schema.tables[t].name
    }

    fn node(&self, gi: usize, name: &str) -> Result<usize> {
        self.groups[gi].bn.attr_index(name).ok_or_else(|| Error::UnknownAttribute {
            attr: name.to_string(),
            context: format!("group {gi}"),
        })
    }

    /// Splits `q` over the touched groups. Each group's evidence carries the query
    /// regions, presence of every query table (multi-table groups), reciprocal weights
    /// for join edges leaving the query inside the group, and identity weights on the
    /// outbound fanouts of query edges that cross into other touched groups.
    pub fn plan_query(&self, q: &Query) -> Result<QueryPlan> {
        if q.tables.is_empty() {
            return Err(Error::Invalid("query names no tables".into()));
        }
        let qt = self.schema.connected_indices(&q.tables)?;
        for r in &q.regions {
            if !q.tables.contains(&r.table) {
                return Err(Error::Invalid(format!("predicate on `{}` which is not a query table", r.table)));
            }
            let meta = self.schema.table(&r.table)?;
            if !meta.attrs.iter().any(|a| a.name == r.attr) {
                return Err(Error::UnknownAttribute { attr: r.attr.clone(), context: format!("table `{}`", r.table) });
            }
        }
        let in_q = |t: usize| qt.contains(&t);
        let tree = self.schema.tree()?;
        let (bfs, _) = tree.rooted(self.schema.root_index());
        let root_table = *bfs.iter().find(|&&t| in_q(t)).unwrap();
        let root_group = self.group_of[root_table];

        // query edges between touched groups, directed away from the root group
        let mut touched = vec![root_group];
        let mut away: Vec<(usize, usize)> = Vec::new();
        let mut queue = VecDeque::from([root_table]);
        let mut seen = vec![false; self.schema.tables.len()];
        seen[root_table] = true;
        while let Some(v) = queue.pop_front() {
            for &(w, _) in tree.neighbors(v) {
                if in_q(w) && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                    if self.group_of[w] != self.group_of[v] {
                        away.push((v, w));
                        if !touched.contains(&self.group_of[w]) {
                            touched.push(self.group_of[w]);
                        }
                    }
                }
            }
        }

        let mut terms = Vec::with_capacity(touched.len());
        for &gi in &touched {
            let group = &self.groups[gi];
            let bn = &group.bn;
            let mut ev = Evidence::new(bn.len());
            for r in &q.regions {
                let t = self.schema.table_index(&r.table).unwrap();
                if self.group_of[t] == gi {
                    ev.restrict(self.node(gi, &data_name(&r.table, &r.attr))?, r.region.clone());
                }
            }
            let members = &group.members;
            for &x in qt.iter().filter(|&&t| self.group_of[t] == gi) {
                let xn = self.table_name(x);
                if members.len() > 1 {
                    let v = self.node(gi, &inbound_name(xn))?;
                    ev.restrict(v, Region::new(bn.attrs()[v].codes_in_range(1.0, f64::INFINITY)));
                }
                let internal: Vec<usize> =
                    tree.neighbors(x).iter().map(|&(y, _)| y).filter(|&y| self.group_of[y] == gi).collect();
                let boundary: Vec<usize> = internal.iter().copied().filter(|&y| !in_q(y)).collect();
                if !boundary.is_empty() {
                    if boundary.len() == internal.len() {
                        let v = self.node(gi, &inbound_name(xn))?;
                        ev.weight_by(v, &WeightFn::Reciprocal.vector(&bn.attrs()[v]));
                    } else {
                        for &y in &boundary {
                            let v = self.node(gi, &edge_name(xn, self.table_name(y)))?;
                            ev.weight_by(v, &WeightFn::Reciprocal.vector(&bn.attrs()[v]));
                        }
                    }
                }
                for &(y, _) in tree.neighbors(x) {
                    if in_q(y) && self.group_of[y] != gi {
                        let v = self.node(gi, &outbound_name(xn, self.table_name(y)))?;
                        ev.weight_by(v, &WeightFn::Identity.vector(&bn.attrs()[v]));
                    }
                }
            }
            terms.push(GroupTerm { group: gi, evidence: ev });
        }

        let mut size = self.groups[root_group].full_join_size as f64;
        for &(a, b) in &away {
            let g = &self.groups[self.group_of[a]];
            let name = outbound_name(self.table_name(a), self.table_name(b));
            size *= g.out_means.get(&name).copied().ok_or_else(|| Error::Format(format!("missing mean for `{name}`")))?;
        }
        Ok(QueryPlan { terms, full_join_size: size, root_group })
    }

    /// Estimated result size of `q` (inner-join semantics over the query tables).
    pub fn estimate(&self, q: &Query, backend: Backend, cache: &PlanCache) -> Result<f64> {
        let plan = self.plan_query(q)?;
        if q.has_empty_region() {
            return Ok(0.0);
        }
        let masses = plan
            .terms
            .iter()
            .map(|t| evaluate(&self.groups[t.group].bn, &t.evidence, backend, cache))
            .collect::<Result<Vec<_>>>()?;
        Ok(combine(&self.groups, &plan, &masses))
    }

    /// Returns a model with `rows` inserted into (or deleted from) `table`. Only tables
    /// that form a group on their own with no joins to other groups can be updated in
    /// place; everything else needs a refit.
    pub fn update_table(&self, table: &str, rows: &EncodedTable, insert: bool) -> Result<EnsembleModel> {
        let t = self.schema.table_index(table).ok_or_else(|| Error::UnknownTable(table.to_string()))?;
        let gi = self.group_of[t];
        let group = &self.groups[gi];
        if group.members.len() != 1 || !group.out_means.is_empty() {
            return Err(Error::Invalid(format!(
                "`{table}` shares its network with joined tables; incremental updates need a refit"
            )));
        }
        let meta = &self.schema.tables[t];
        if rows.attrs.len() != meta.attrs.len()
            || rows.attrs.iter().zip(&meta.attrs).any(|(a, b)| a.kind != b.kind || a.name != b.name)
        {
            return Err(Error::Invalid(format!("rows do not match the attributes of `{table}`")));
        }
        let bn = &group.bn;
        let inb = bn.attrs().len() - 1;
        let one = bn.attrs()[inb].encode("1").ok_or_else(|| Error::UnseenValue {
            attr: bn.attrs()[inb].name.clone(),
            value: "1".into(),
        })?;
        let mut cols: Vec<Vec<u32>> = (0..rows.n_attrs()).map(|j| rows.column(j)).collect();
        cols.push(vec![one; rows.row_count()]);
        let encoded = EncodedTable::from_columns(table, bn.attrs().to_vec(), &cols)?;
        let next = if insert { bn.update_insert(&encoded)? } else { bn.update_delete(&encoded)? };
        let mut out = self.clone();
        let n = rows.row_count() as u128;
        let g = &mut out.groups[gi];
        g.full_join_size = if insert { g.full_join_size + n } else { g.full_join_size.saturating_sub(n) };
        g.bn = next;
        let tm = &mut out.schema.tables[t];
        tm.row_count = if insert { tm.row_count + rows.row_count() } else { tm.row_count.saturating_sub(rows.row_count()) };
        Ok(out)
    }

    pub fn to_file(&self) -> EnsembleFile {
        EnsembleFile {
            format_version: ENSEMBLE_FORMAT_VERSION,
            schema: self.schema.clone(),
            options: self.options.clone(),
            dependence: self.dependence.clone(),
            merges: self.merges.clone(),
            groups: self
                .groups
                .iter()
                .map(|g| GroupFile {
                    members: g.members.iter().map(|&t| self.table_name(t).to_string()).collect(),
                    fanouts: g.fanouts.clone(),
                    full_join_size: g.full_join_size,
                    out_means: g.out_means.clone(),
                    model: g.bn.to_file(),
                })
                .collect(),
        }
    }

    pub fn from_file(f: EnsembleFile) -> Result<Self> {
        if f.format_version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported ensemble format version {}", f.format_version)));
        }
        f.dependence.validate()?;
        let tree = f.schema.tree()?;
        let n = f.schema.tables.len();
        if f.dependence.len() != n {
            return Err(Error::Format("dependence matrix does not match the schema".into()));
        }
        let mut group_of = vec![usize::MAX; n];
        let mut groups = Vec::with_capacity(f.groups.len());
        for (gi, g) in f.groups.into_iter().enumerate() {
            let mut members = Vec::with_capacity(g.members.len());
            for name in &g.members {
                let t = f.schema.table_index(name).ok_or_else(|| Error::UnknownTable(name.clone()))?;
                if group_of[t] != usize::MAX {
                    return Err(Error::Format(format!("table `{name}` belongs to two groups")));
                }
                group_of[t] = gi;
                members.push(t);
            }
            if members.is_empty() || !tree.is_connected(&members) {
                return Err(Error::Format(format!("group {gi} is empty or not connected")));
            }
            let bn = BayesNet::from_file(g.model)?;
            for fa in &g.fanouts {
                if bn.attr_index(&fa.name).is_none() {
                    return Err(Error::Format(format!("fanout attribute `{}` missing from group {gi}", fa.name)));
                }
            }
            groups.push(TableGroup {
                members,
                bn,
                fanouts: g.fanouts,
                full_join_size: g.full_join_size,
                out_means: g.out_means,
            });
        }
        if group_of.contains(&usize::MAX) {
            return Err(Error::Format("groups do not cover every table".into()));
        }
        Ok(EnsembleModel {
            schema: f.schema,
            options: f.options,
            dependence: f.dependence,
            merges: f.merges,
            groups,
            group_of,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_file())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Serialized size in bytes.
    pub fn size_bytes(&self) -> Result<usize> {
        Ok(self.to_json()?.len())
    }

    /// Fanout attributes of every group, by kind, for reports.
    pub fn fanout_summary(&self) -> Vec<(usize, String, &'static str)> {
        let mut out = Vec::new();
        for (gi, g) in self.groups.iter().enumerate() {
            for f in &g.fanouts {
                let kind = match f.kind {
                    FanoutKind::Inbound { .. } => "inbound",
                    FanoutKind::Edge { .. } => "edge",
                    FanoutKind::Outbound { .. } => "outbound",
                };
                out.push((gi, f.name.clone(), kind));
            }
        }
        out
    }
}

/// `|V|^(1-d) * prod_i |Omega_i| * E_i` for per-group evidence masses `E_i`.
pub fn combine(groups: &[TableGroup], plan: &QueryPlan, masses: &[f64]) -> f64 {
    let d = plan.terms.len() as i32;
    let mut card = plan.full_join_size.powi(1 - d);
    for (t, &m) in plan.terms.iter().zip(masses) {
        card *= groups[t.group].full_join_size as f64 * m;
    }
    if card.is_finite() {
        card.max(0.0)
    } else {
        0.0
    }
}

/// Estimates a batch of queries, in input order.
pub fn estimate_batch(
    ens: &EnsembleModel,
    queries: &[Query],
    backend: Backend,
    cache: &PlanCache,
    exec: Exec,
) -> Vec<Result<f64>> {
    exec.map(queries, |q| ens.estimate(q, backend, cache))
}

/// Convenience wrapper around [`EnsembleModel::estimate`].
pub fn estimate_cardinality(ens: &EnsembleModel, q: &Query, backend: Backend, cache: &PlanCache) -> Result<f64> {
    ens.estimate(q, backend, cache)
}
