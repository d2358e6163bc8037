use std::collections::HashMap;

use super::query::Query;
use super::schema::JoinSchema;
use crate::{Error, Result};

fn passing_rows(schema: &JoinSchema, t: usize, q: &Query) -> Result<Vec<bool>> {
    let st = &schema.tables[t];
    let table = &st.table;
    let mut checks = Vec::new();
    for r in q.regions_of(&table.name) {
        let col = table.attr_index(&r.attr).ok_or_else(|| Error::UnknownAttribute {
            attr: r.attr.clone(),
            context: format!("table `{}`", table.name),
        })?;
        checks.push((col, r.region.mask(table.attrs[col].domain_size())));
    }
    Ok(table
        .rows()
        .map(|row| checks.iter().all(|(col, mask)| mask[row[*col] as usize]))
        .collect())
}

/// Exact result size of `q` by scan (one table) or by a hash join over the join-tree
/// edges connecting the touched tables (inner-join semantics).
pub fn true_cardinality(schema: &JoinSchema, q: &Query) -> Result<u64> {
    let members = schema.meta.connected_indices(&q.tables)?;
    if q.has_empty_region() {
        return Ok(0);
    }
    let inside: Vec<bool> = (0..schema.tables.len()).map(|t| members.contains(&t)).collect();
    let root = *members.iter().min().unwrap();
    let weights = subtree_weights(schema, q, root, None, &inside)?;
    let total: u128 = weights.iter().sum();
    Ok(total.min(u64::MAX as u128) as u64)
}

/// Per-row number of join results in the subtree below `t` (restricted to `inside`).
fn subtree_weights(
    schema: &JoinSchema,
    q: &Query,
    t: usize,
    parent_edge: Option<usize>,
    inside: &[bool],
) -> Result<Vec<u128>> {
    let mut w: Vec<u128> = passing_rows(schema, t, q)?.into_iter().map(u128::from).collect();
    for &(child, e) in schema.tree().neighbors(t) {
        if Some(e) == parent_edge || !inside[child] {
            continue;
        }
        let child_w = subtree_weights(schema, q, child, Some(e), inside)?;
        let (my_keys, child_keys) = schema.edge_keys(e, t);
        let mut by_key: HashMap<u32, u128> = HashMap::new();
        for (k, cw) in child_keys.iter().zip(child_w) {
            if let (Some(k), true) = (k, cw > 0) {
                *by_key.entry(*k).or_default() += cw;
            }
        }
        for (wi, k) in w.iter_mut().zip(my_keys) {
            if *wi > 0 {
                *wi *= k.and_then(|k| by_key.get(&k).copied()).unwrap_or(0);
            }
        }
    }
    Ok(w)
}
