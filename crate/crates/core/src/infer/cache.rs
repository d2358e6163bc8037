use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use crate::params::BayesNet;
use crate::Result;

use super::plan::{compile_plan, CompiledPlan};
use super::reduce::{choose_elim_order, reduce_graph};
use super::Evidence;

pub const DEFAULT_PLAN_CAPACITY: usize = 1024;

/// The kept set is the ancestor closure of the constrained and weighted nodes, so those
/// two sets identify the reduced graph; the reduction itself only runs on a miss.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct PlanKey {
    model_id: String,
    constrained: Vec<usize>,
    weighted: Vec<usize>,
}

type Cell = Arc<OnceLock<Arc<CompiledPlan>>>;

#[derive(Default)]
struct Inner {
    map: HashMap<PlanKey, (Cell, u64)>,
    tick: u64,
}

/// LRU cache of compiled plans keyed by query template. Concurrent callers asking for the
/// same template share one compilation.
pub struct PlanCache {
    capacity: usize,
    inner: Mutex<Inner>,
    hits: AtomicU64,
    misses: AtomicU64,
    compiles: AtomicU64,
}

impl Default for PlanCache {
    fn default() -> Self {
        PlanCache::new(DEFAULT_PLAN_CAPACITY)
    }
}

impl std::fmt::Debug for PlanCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlanCache")
            .field("capacity", &self.capacity)
            .field("len", &self.len())
            .field("hits", &self.hits())
            .field("misses", &self.misses())
            .finish()
    }
}

impl PlanCache {
    pub fn new(capacity: usize) -> Self {
        PlanCache {
            capacity: capacity.max(1),
            inner: Mutex::new(Inner::default()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            compiles: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn compiles(&self) -> u64 {
        self.compiles.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.inner.lock().unwrap().map.clear();
    }

    /// Returns the cached plan for the evidence's template, compiling it on first use.
    pub fn get_or_compile(&self, bn: &BayesNet, ev: &Evidence) -> Result<Arc<CompiledPlan>> {
        ev.check(bn)?;
        let key = PlanKey { model_id: bn.model_id().to_string(), constrained: ev.constrained(), weighted: ev.weighted() };
        let cell = {
            let mut inner = self.inner.lock().unwrap();
            inner.tick += 1;
            let tick = inner.tick;
            if let Some((cell, t)) = inner.map.get_mut(&key) {
                *t = tick;
                self.hits.fetch_add(1, Ordering::Relaxed);
                cell.clone()
            } else {
                self.misses.fetch_add(1, Ordering::Relaxed);
                if inner.map.len() >= self.capacity {
                    let oldest = inner.map.iter().min_by_key(|(_, (_, t))| *t).map(|(k, _)| k.clone());
                    if let Some(k) = oldest {
                        inner.map.remove(&k);
                    }
                }
                let cell: Cell = Arc::new(OnceLock::new());
                inner.map.insert(key, (cell.clone(), tick));
                cell
            }
        };
        let plan = cell.get_or_init(|| {
            self.compiles.fetch_add(1, Ordering::Relaxed);
            let g = reduce_graph(bn, ev);
            let order = choose_elim_order(bn, &g);
            Arc::new(compile_plan(bn, &g, &order).expect("chosen elimination orders are valid"))
        });
        Ok(plan.clone())
    }
}
