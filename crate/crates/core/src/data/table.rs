use std::collections::BTreeMap;
use std::path::Path;

use super::attr::{equal_frequency_edges, AttrDecl, AttributeMeta, DeclKind, DEFAULT_BINS};
use crate::{Error, Result};

/// Column-encoded relational table. `codes` is row-major, one column per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTable {
    pub name: String,
    pub attrs: Vec<AttributeMeta>,
    codes: Vec<u32>,
    row_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

impl EncodedTable {
    pub fn new(name: impl Into<String>, attrs: Vec<AttributeMeta>, codes: Vec<u32>) -> Result<Self> {
        let name = name.into();
        let width = attrs.len();
        if width == 0 {
            if !codes.is_empty() {
                return Err(Error::Invalid(format!("table `{name}` has codes but no attributes")));
            }
            return Ok(EncodedTable { name, attrs, codes, row_count: 0 });
        }
        if !codes.len().is_multiple_of(width) {
            return Err(Error::Invalid(format!(
                "table `{name}`: {} codes do not fill rows of width {width}",
                codes.len()
            )));
        }
        for a in &attrs {
            a.validate().map_err(Error::Invalid)?;
        }
        let row_count = codes.len() / width;
        for row in codes.chunks_exact(width) {
            for (c, a) in row.iter().zip(&attrs) {
                if *c as usize >= a.domain_size() {
                    return Err(Error::Invalid(format!(
                        "code {c} out of range for `{}` (domain {})",
                        a.name,
                        a.domain_size()
                    )));
                }
            }
        }
        Ok(EncodedTable { name, attrs, codes, row_count })
    }

    /// Builds a table from per-attribute code columns of equal length.
    pub fn from_columns(
        name: impl Into<String>,
        attrs: Vec<AttributeMeta>,
        columns: &[Vec<u32>],
    ) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.len() != attrs.len() || columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Invalid("column count or lengths do not match attributes".into()));
        }
        let mut codes = Vec::with_capacity(rows * columns.len());
        for r in 0..rows {
            codes.extend(columns.iter().map(|c| c[r]));
        }
        Self::new(name, attrs, codes)
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn n_attrs(&self) -> usize {
        self.attrs.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let w = self.attrs.len();
        &self.codes[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.codes.chunks_exact(self.attrs.len().max(1)).take(self.row_count)
    }

    pub fn code(&self, row: usize, col: usize) -> u32 {
        self.codes[row * self.attrs.len() + col]
    }

    pub fn column(&self, col: usize) -> Vec<u32> {
        self.rows().map(|r| r[col]).collect()
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }

    /// Rows `range` as a new table sharing the attribute metadata.
    pub fn slice_rows(&self, start: usize, end: usize) -> EncodedTable {
        let w = self.attrs.len();
        EncodedTable {
            name: self.name.clone(),
            attrs: self.attrs.clone(),
            codes: self.codes[start * w..end * w].to_vec(),
            row_count: end - start,
        }
    }
}

fn is_missing(v: &str) -> bool {
    v.trim().is_empty()
}

struct RawColumns {
    columns: BTreeMap<String, Vec<String>>,
    keys: BTreeMap<String, Vec<Option<String>>>,
    report: LoadReport,
}

/// Reads the named columns, dropping rows with a missing value in any of `attrs`.
/// Key columns never cause a drop; a missing key is recorded as `None`.
fn read_columns(path: &Path, attrs: &[&str], keys: &[&str]) -> Result<RawColumns> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let context = path.display().to_string();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::UnknownAttribute { attr: name.to_string(), context: context.clone() })
    };
    let attr_idx: Vec<usize> = attrs.iter().map(|a| find(a)).collect::<Result<_>>()?;
    let key_idx: Vec<usize> = keys.iter().map(|k| find(k)).collect::<Result<_>>()?;

    let mut columns: Vec<Vec<String>> = vec![Vec::new(); attrs.len()];
    let mut key_cols: Vec<Vec<Option<String>>> = vec![Vec::new(); keys.len()];
    let mut report = LoadReport::default();
    for record in reader.records() {
        let record = record?;
        report.rows_read += 1;
        let values: Vec<&str> = attr_idx.iter().map(|&i| record.get(i).unwrap_or("")).collect();
        if values.iter().any(|v| is_missing(v)) {
            report.rows_dropped += 1;
            continue;
        }
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v.to_string());
        }
        for (col, &i) in key_cols.iter_mut().zip(&key_idx) {
            let v = record.get(i).unwrap_or("");
            col.push((!is_missing(v)).then(|| v.trim().to_string()));
        }
    }
    Ok(RawColumns {
        columns: attrs.iter().map(|a| a.to_string()).zip(columns).collect(),
        keys: keys.iter().map(|k| k.to_string()).zip(key_cols).collect(),
        report,
    })
}

fn table_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "table".into())
}

/// Loads and encodes the declared attributes of a CSV file. Categorical domains are the
/// sorted distinct values; continuous attributes use equal-frequency bins.
pub fn load_table(path: impl AsRef<Path>, decls: &[AttrDecl]) -> Result<(EncodedTable, LoadReport)> {
    let (table, _, report) = load_table_with_keys(path, decls, &[])?;
    Ok((table, report))
}

/// Like [`load_table`], additionally returning the raw values of join-key columns.
#[allow(clippy::type_complexity)]
pub fn load_table_with_keys(
    path: impl AsRef<Path>,
    decls: &[AttrDecl],
    keys: &[&str],
) -> Result<(EncodedTable, BTreeMap<String, Vec<Option<String>>>, LoadReport)> {
    let path = path.as_ref();
    let names: Vec<&str> = decls.iter().map(|d| d.name.as_str()).collect();
    let raw = read_columns(path, &names, keys)?;
    let rows = raw.report.rows_read - raw.report.rows_dropped;
    if rows == 0 {
        return Err(Error::ZeroUsableRows(path.display().to_string()));
    }
    let mut attrs = Vec::with_capacity(decls.len());
    let mut columns = Vec::with_capacity(decls.len());
    for decl in decls {
        let values = &raw.columns[&decl.name];
        let meta = match decl.kind {
            DeclKind::Categorical => AttributeMeta::categorical_from(decl.name.clone(), values),
            DeclKind::Continuous => {
                let mut xs = Vec::with_capacity(values.len());
                for v in values {
                    let x: f64 = v.trim().parse().map_err(|_| {
                        Error::Invalid(format!("non-numeric value `{v}` in continuous `{}`", decl.name))
                    })?;
                    xs.push(x);
                }
                let bins = decl.bins.unwrap_or(DEFAULT_BINS);
                AttributeMeta::binned(decl.name.clone(), equal_frequency_edges(&xs, bins))
            }
        };
        let enc = meta.encoder();
        let col: Vec<u32> = values
            .iter()
            .map(|v| enc.encode(v).expect("value drawn from its own domain"))
            .collect();
        drop(enc);
        attrs.push(meta);
        columns.push(col);
    }
    let table = EncodedTable::from_columns(table_name(path), attrs, &columns)?;
    Ok((table, raw.keys, raw.report))
}

/// Encodes CSV rows against existing attribute domains; a value outside a domain is an error.
pub fn encode_rows(
    path: impl AsRef<Path>,
    name: &str,
    attrs: &[AttributeMeta],
) -> Result<(EncodedTable, LoadReport)> {
    let path = path.as_ref();
    let names: Vec<&str> = attrs.iter().map(|a| a.name.as_str()).collect();
    let raw = read_columns(path, &names, &[])?;
    let mut columns = Vec::with_capacity(attrs.len());
    for meta in attrs {
        let enc = meta.encoder();
        let col = raw.columns[&meta.name]
            .iter()
            .map(|v| {
                enc.encode(v).ok_or_else(|| Error::UnseenValue {
                    attr: meta.name.clone(),
                    value: v.clone(),
                })
            })
            .collect::<Result<Vec<u32>>>()?;
        columns.push(col);
    }
    let table = EncodedTable::from_columns(name, attrs.to_vec(), &columns)?;
    Ok((table, raw.report))
}

/// Writes decoded raw values with a header row.
pub fn write_csv(table: &EncodedTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(table.attrs.iter().map(|a| a.name.as_str()))?;
    for row in table.rows() {
        w.write_record(
            row.iter()
                .zip(&table.attrs)
                .map(|(&c, a)| a.decode(c).unwrap_or_default()),
        )?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttrKind;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_row_categorical() {
        let f = csv_file("x\na\nb\na\n");
        let (t, rep) = load_table(f.path(), &[AttrDecl::categorical("x")]).unwrap();
        assert_eq!(t.attrs[0].kind, AttrKind::Categorical { values: vec!["a".into(), "b".into()] });
        assert_eq!(t.column(0), vec![0, 1, 0]);
        assert_eq!(t.row_count(), 3);
        assert_eq!(rep.rows_dropped, 0);
    }

    #[test]
    fn empty_body_is_error() {
        let f = csv_file("x\n");
        let err = load_table(f.path(), &[AttrDecl::categorical("x")]).unwrap_err();
        assert!(matches!(err, Error::ZeroUsableRows(_)));
        assert!(err.to_string().contains("zero usable rows"));
    }

    #[test]
    fn continuous_equal_frequency() {
        let f = csv_file("y\n1.0\n2.0\n3.0\n4.0\n");
        let (t, _) = load_table(f.path(), &[AttrDecl::continuous("y", 2)]).unwrap();
        assert_eq!(t.column(0), vec![0, 0, 1, 1]);
    }

    #[test]
    fn missing_values_dropped_and_reported() {
        let f = csv_file("x,y\na,1\n,2\nb,\nc,3\n");
        let (t, rep) =
            load_table(f.path(), &[AttrDecl::categorical("x"), AttrDecl::categorical("y")]).unwrap();
        assert_eq!(t.row_count(), 2);
        assert_eq!(rep, LoadReport { rows_read: 4, rows_dropped: 2 });
    }

    #[test]
    fn unknown_attribute_and_missing_file() {
        let f = csv_file("x\na\n");
        assert!(matches!(
            load_table(f.path(), &[AttrDecl::categorical("nope")]),
            Err(Error::UnknownAttribute { .. })
        ));
        assert!(matches!(
            load_table("/definitely/not/here.csv", &[AttrDecl::categorical("x")]),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn encode_rows_rejects_unseen() {
        let f = csv_file("x\na\nb\n");
        let (t, _) = load_table(f.path(), &[AttrDecl::categorical("x")]).unwrap();
        let g = csv_file("x\nb\nz\n");
        assert!(matches!(encode_rows(g.path(), "t", &t.attrs), Err(Error::UnseenValue { .. })));
        let h = csv_file("x\nb\nb\n");
        let (u, _) = encode_rows(h.path(), "t", &t.attrs).unwrap();
        assert_eq!(u.column(0), vec![1, 1]);
    }

    #[test]
    fn categorical_round_trip() {
        let f = csv_file("x\npear\napple\nfig\napple\n");
        let (t, _) = load_table(f.path(), &[AttrDecl::categorical("x")]).unwrap();
        let decoded: Vec<_> = t.column(0).iter().map(|&c| t.attrs[0].decode(c).unwrap()).collect();
        assert_eq!(decoded, vec!["pear", "apple", "fig", "apple"]);
    }
}
