use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::attr::{AttrDecl, AttributeMeta};
use super::query::Catalog;
use super::table::{load_table_with_keys, EncodedTable};
use crate::{Error, Result};

/// Undirected tree over `n` nodes with indexed edges.
#[derive(Debug, Clone)]
pub struct JoinTree {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl JoinTree {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("join tree has no nodes".into()));
        }
        if edges.len() + 1 != n {
            return Err(Error::Invalid(format!(
                "joins must form a tree: {} tables need {} joins, got {}",
                n,
                n - 1,
                edges.len()
            )));
        }
        let mut adj = vec![Vec::new(); n];
        for (i, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n || a == b {
                return Err(Error::Invalid(format!("invalid join edge ({a}, {b})")));
            }
            adj[a].push((b, i));
            adj[b].push((a, i));
        }
        let tree = JoinTree { n, edges, adj };
        if tree.bfs(0).len() != n {
            return Err(Error::Invalid("joins must form a tree: schema is disconnected".into()));
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `(neighbor, edge index)` pairs.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    fn bfs(&self, root: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        let mut order = vec![root];
        seen[root] = true;
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            i += 1;
            for &(w, _) in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    order.push(w);
                }
            }
        }
        order
    }

    /// BFS order from `root` and each node's `(parent, edge)` link.
    pub fn rooted(&self, root: usize) -> (Vec<usize>, Vec<Option<(usize, usize)>>) {
        let order = self.bfs(root);
        let mut parent = vec![None; self.n];
        let mut seen = vec![false; self.n];
        seen[root] = true;
        for &v in &order {
            for &(w, e) in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some((v, e));
                }
            }
        }
        (order, parent)
    }

    /// Whether `members` induce a connected subtree.
    pub fn is_connected(&self, members: &[usize]) -> bool {
        let Some(&start) = members.first() else { return false };
        let inside: BTreeSet<usize> = members.iter().copied().collect();
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &self.adj[v] {
                if inside.contains(&w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.len() == inside.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinEdge {
    pub left_table: String,
    pub left_key: String,
    pub right_table: String,
    pub right_key: String,
}

impl JoinEdge {
    pub fn new(lt: &str, lk: &str, rt: &str, rk: &str) -> Self {
        JoinEdge {
            left_table: lt.into(),
            left_key: lk.into(),
            right_table: rt.into(),
            right_key: rk.into(),
        }
    }

    /// Key of `table` on this edge, if the table is an endpoint.
    pub fn key_of(&self, table: &str) -> Option<&str> {
        if self.left_table == table {
            Some(&self.left_key)
        } else if self.right_table == table {
            Some(&self.right_key)
        } else {
            None
        }
    }
}

/// Data-free description of a table: what models and queries need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub name: String,
    pub attrs: Vec<AttributeMeta>,
    pub keys: Vec<String>,
    pub row_count: usize,
}

/// Data-free join schema: persisted alongside models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaMeta {
    pub tables: Vec<TableMeta>,
    pub joins: Vec<JoinEdge>,
    pub root: String,
}

impl SchemaMeta {
    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    pub fn table(&self, name: &str) -> Result<&TableMeta> {
        self.table_index(name)
            .map(|i| &self.tables[i])
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn root_index(&self) -> usize {
        self.table_index(&self.root).unwrap_or(0)
    }

    pub fn tree(&self) -> Result<JoinTree> {
        let mut edges = Vec::with_capacity(self.joins.len());
        for j in &self.joins {
            let l = self.table_index(&j.left_table).ok_or_else(|| Error::UnknownTable(j.left_table.clone()))?;
            let r = self.table_index(&j.right_table).ok_or_else(|| Error::UnknownTable(j.right_table.clone()))?;
            edges.push((l, r));
        }
        JoinTree::new(self.tables.len(), edges)
    }

    /// Indices of the named tables, checked to form a connected subtree.
    pub fn connected_indices(&self, names: &BTreeSet<String>) -> Result<Vec<usize>> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.table_index(n).ok_or_else(|| Error::UnknownTable(n.clone())))
            .collect::<Result<_>>()?;
        if idx.len() > 1 && !self.tree()?.is_connected(&idx) {
            return Err(Error::Disconnected(names.iter().cloned().collect()));
        }
        Ok(idx)
    }
}

impl Catalog for SchemaMeta {
    fn attr(&self, table: &str, attr: &str) -> Option<&AttributeMeta> {
        self.tables
            .iter()
            .find(|t| t.name == table)?
            .attrs
            .iter()
            .find(|a| a.name == attr)
    }

    fn has_table(&self, table: &str) -> bool {
        self.table_index(table).is_some()
    }
}

/// A table with its join-key columns, keys interned schema-wide (`None` = missing key).
#[derive(Debug, Clone)]
pub struct SchemaTable {
    pub table: EncodedTable,
    pub keys: BTreeMap<String, Vec<Option<u32>>>,
}

impl SchemaTable {
    pub fn key(&self, name: &str) -> Result<&[Option<u32>]> {
        self.keys.get(name).map(Vec::as_slice).ok_or_else(|| Error::MissingJoinKey {
            table: self.table.name.clone(),
            key: name.to_string(),
        })
    }
}

/// Loaded tables plus a validated join tree.
#[derive(Debug, Clone)]
pub struct JoinSchema {
    pub meta: SchemaMeta,
    pub tables: Vec<SchemaTable>,
    tree: JoinTree,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    pub tables: Vec<SchemaFileTable>,
    #[serde(default)]
    pub joins: Vec<JoinEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFileTable {
    pub name: String,
    pub csv: String,
    pub attrs: Vec<AttrDecl>,
}

impl JoinSchema {
    /// Builds a schema from tables with raw key columns. Keys are interned so equal raw
    /// values compare equal across tables.
    pub fn new(
        tables: Vec<(EncodedTable, BTreeMap<String, Vec<Option<String>>>)>,
        joins: Vec<JoinEdge>,
        root: Option<String>,
    ) -> Result<Self> {
        let mut interner: HashMap<String, u32> = HashMap::new();
        let mut out = Vec::with_capacity(tables.len());
        for (table, raw_keys) in tables {
            let mut keys = BTreeMap::new();
            for (name, col) in raw_keys {
                let ids = col
                    .into_iter()
                    .map(|v| {
                        v.map(|s| {
                            let next = interner.len() as u32;
                            *interner.entry(s).or_insert(next)
                        })
                    })
                    .collect();
                keys.insert(name, ids);
            }
            out.push(SchemaTable { table, keys });
        }
        Self::from_interned(out, joins, root)
    }

    /// Builds a schema from tables whose key columns are already integer ids.
    pub fn from_interned(tables: Vec<SchemaTable>, joins: Vec<JoinEdge>, root: Option<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in &tables {
            if !seen.insert(t.table.name.clone()) {
                return Err(Error::Invalid(format!("duplicate table `{}`", t.table.name)));
            }
        }
        let meta = SchemaMeta {
            tables: tables
                .iter()
                .map(|t| TableMeta {
                    name: t.table.name.clone(),
                    attrs: t.table.attrs.clone(),
                    keys: t.keys.keys().cloned().collect(),
                    row_count: t.table.row_count(),
                })
                .collect(),
            root: root.unwrap_or_else(|| tables.first().map(|t| t.table.name.clone()).unwrap_or_default()),
            joins,
        };
        if meta.table_index(&meta.root).is_none() {
            return Err(Error::UnknownTable(meta.root.clone()));
        }
        let tree = meta.tree()?;
        for j in &meta.joins {
            if j.left_table == j.right_table {
                return Err(Error::Invalid("self joins are not supported".into()));
            }
            tables[meta.table_index(&j.left_table).unwrap()].key(&j.left_key)?;
            tables[meta.table_index(&j.right_table).unwrap()].key(&j.right_key)?;
        }
        Ok(JoinSchema { meta, tables, tree })
    }

    pub fn single(table: EncodedTable) -> Self {
        Self::from_interned(vec![SchemaTable { table, keys: BTreeMap::new() }], Vec::new(), None)
            .expect("a single table is a valid schema")
    }

    pub fn tree(&self) -> &JoinTree {
        &self.tree
    }

    pub fn table_index(&self, name: &str) -> Result<usize> {
        self.meta.table_index(name).ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn table(&self, name: &str) -> Result<&SchemaTable> {
        Ok(&self.tables[self.table_index(name)?])
    }

    /// Key columns joining table `a` to table `b` over edge `e`: `(a's keys, b's keys)`.
    pub fn edge_keys(&self, e: usize, a: usize) -> (&[Option<u32>], &[Option<u32>]) {
        let j = &self.meta.joins[e];
        let (ka, kb, b) = if self.meta.tables[a].name == j.left_table {
            (&j.left_key, &j.right_key, &j.right_table)
        } else {
            (&j.right_key, &j.left_key, &j.left_table)
        };
        let b = self.meta.table_index(b).unwrap();
        (
            self.tables[a].key(ka).expect("validated key"),
            self.tables[b].key(kb).expect("validated key"),
        )
    }
}

/// Loads a schema JSON file; CSV paths are relative to the schema file.
pub fn load_schema(path: impl AsRef<Path>) -> Result<JoinSchema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SchemaFile = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tables = Vec::with_capacity(file.tables.len());
    for t in &file.tables {
        let keys: BTreeSet<&str> = file
            .joins
            .iter()
            .filter_map(|j| j.key_of(&t.name))
            .collect();
        let keys: Vec<&str> = keys.into_iter().collect();
        let (mut table, raw_keys, _report) = load_table_with_keys(base.join(&t.csv), &t.attrs, &keys)?;
        table.name = t.name.clone();
        tables.push((table, raw_keys));
    }
    JoinSchema::new(tables, file.joins, file.root)
}

/// Writes one CSV per table (attributes decoded, then key columns) and a schema file
/// `schema.json` into `dir`; returns the schema file path. Binned attributes are declared
/// continuous with their bin count, so reloading re-bins them by equal frequency.
pub fn write_schema(schema: &JoinSchema, dir: impl AsRef<Path>) -> Result<std::path::PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tables = Vec::with_capacity(schema.tables.len());
    for st in &schema.tables {
        let t = &st.table;
        let csv_name = format!("{}.csv", t.name);
        let path = dir.join(&csv_name);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let header: Vec<&str> =
            t.attrs.iter().map(|a| a.name.as_str()).chain(st.keys.keys().map(String::as_str)).collect();
        w.write_record(&header)?;
        for (r, row) in t.rows().enumerate() {
            let mut rec: Vec<String> = row.iter().zip(&t.attrs).map(|(&c, a)| a.decode(c).unwrap_or_default()).collect();
            rec.extend(st.keys.values().map(|k| k[r].map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let attrs = t
            .attrs
            .iter()
            .map(|a| match &a.kind {
                super::attr::AttrKind::Categorical { .. } => AttrDecl::categorical(a.name.clone()),
                super::attr::AttrKind::Binned { edges } => AttrDecl::continuous(a.name.clone(), edges.len() - 1),
            })
            .collect();
        tables.push(SchemaFileTable { name: t.name.clone(), csv: csv_name, attrs });
    }
    let file = SchemaFile { tables, joins: schema.meta.joins.clone(), root: Some(schema.meta.root.clone()) };
    let path = dir.join("schema.json");
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
