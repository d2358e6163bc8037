//! Q-error metrics and workload reports.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Query;
use crate::ensemble::EnsembleModel;
use crate::exec::Exec;
use crate::infer::{Backend, PlanCache};
use crate::{Error, Result};

/// `max(e/t, t/e)` with both operands clamped at 1.
pub fn qerror(estimate: f64, truth: f64) -> f64 {
    let e = estimate.max(1.0);
    let t = truth.max(1.0);
    (e / t).max(t / e)
}

/// Quantile `p` in `[0, 1]` of ascending `sorted`, linearly interpolated between ranks.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub index: usize,
    pub estimate: f64,
    pub truth: u64,
    pub qerror: f64,
}

/// Wall-clock figures; kept apart from the deterministic part of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_latency_ms: f64,
    pub latencies_ms: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QErrorReport {
    pub backend: Backend,
    pub queries: usize,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p100: f64,
    pub model_size_bytes: usize,
    pub records: Vec<QueryRecord>,
    pub timing: Timing,
}

impl QErrorReport {
    /// Builds the report from per-query results in input order.
    pub fn new(
        backend: Backend,
        results: Vec<(f64, u64, f64)>,
        model_size_bytes: usize,
        training_time_s: Option<f64>,
    ) -> Self {
        let records: Vec<QueryRecord> = results
            .iter()
            .enumerate()
            .map(|(index, &(estimate, truth, _))| QueryRecord {
                index,
                estimate,
                truth,
                qerror: qerror(estimate, truth as f64),
            })
            .collect();
        let mut sorted: Vec<f64> = records.iter().map(|r| r.qerror).collect();
        sorted.sort_by(f64::total_cmp);
        let latencies_ms: Vec<f64> = results.iter().map(|r| r.2).collect();
        let mean_latency_ms = if latencies_ms.is_empty() {
            0.0
        } else {
            latencies_ms.iter().sum::<f64>() / latencies_ms.len() as f64
        };
        QErrorReport {
            backend,
            queries: records.len(),
            p50: quantile(&sorted, 0.5),
            p90: quantile(&sorted, 0.9),
            p95: quantile(&sorted, 0.95),
            p100: quantile(&sorted, 1.0),
            model_size_bytes,
            records,
            timing: Timing { mean_latency_ms, latencies_ms, training_time_s },
        }
    }

    /// Aligned text rendering of the summary; `timing` adds the wall-clock rows.
    pub fn to_table(&self, timing: bool) -> String {
        let rows = [
            ("queries", self.queries.to_string()),
            ("backend", backend_label(self.backend)),
            ("q-error 50%", format!("{:.4}", self.p50)),
            ("q-error 90%", format!("{:.4}", self.p90)),
            ("q-error 95%", format!("{:.4}", self.p95)),
            ("q-error 100%", format!("{:.4}", self.p100)),
            ("model size bytes", self.model_size_bytes.to_string()),
            ("latency ms (mean)", format!("{:.4}", self.timing.mean_latency_ms)),
        ];
        let rows = if timing { &rows[..] } else { &rows[..rows.len() - 1] };
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let vwidth = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>vwidth$}");
        }
        if let (true, Some(t)) = (timing, self.timing.training_time_s) {
            let _ = writeln!(out, "{:<width$}  {:>vwidth$}", "training time s", format!("{t:.3}"));
        }
        out
    }
}

pub fn backend_label(b: Backend) -> String {
    match b {
        Backend::Ve => "ve".into(),
        Backend::CompiledVe => "cve".into(),
        Backend::Sampling { k, seed } => format!("ps(k={k}, seed={seed})"),
    }
}

/// Runs every query, timing only the estimator call. Results keep input order in every
/// execution mode.
pub fn eval_workload(
    model: &EnsembleModel,
    queries: &[Query],
    backend: Backend,
    cache: &PlanCache,
    exec: Exec,
) -> Result<QErrorReport> {
    for (i, q) in queries.iter().enumerate() {
        if q.true_cardinality.is_none() {
            return Err(Error::Invalid(format!("query {i} has no true cardinality")));
        }
    }
    let results = exec.map(queries, |q| {
        let start = Instant::now();
        let est = model.estimate(q, backend, cache);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        est.map(|e| (e, q.true_cardinality.unwrap(), ms))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(QErrorReport::new(backend, results, model.size_bytes()?, None))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{gen_synthetic, gen_workload, JoinSchema, SyntheticSpec, WorkloadSpec};
    use crate::ensemble::{build_ensemble, EnsembleOptions};

    #[test]
    fn qerror_examples() {
        assert_eq!(qerror(100.0, 100.0), 1.0);
        assert_eq!(qerror(2.0, 1.0), 2.0);
        assert_eq!(qerror(1.0, 2.0), 2.0);
        assert_eq!(qerror(0.0, 0.0), 1.0);
        assert_eq!(qerror(0.0, 10.0), 10.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.9), 4.6);
        assert!(quantile(&[], 0.5).is_nan());
    }

    /// Nearest-rank cross-check: the interpolated quantile lies between the two order
    /// statistics around `p (n - 1)`.
    fn bracket(values: &[f64], p: f64) -> (f64, f64) {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = p * (v.len() - 1) as f64;
        (v[pos.floor() as usize], v[pos.ceil() as usize])
    }

    proptest! {
        #[test]
        fn report_quantiles_are_consistent(ests in prop::collection::vec((0.0f64..1e4, 0u64..10_000), 1..60)) {
            let results: Vec<(f64, u64, f64)> = ests.iter().map(|&(e, t)| (e, t, 0.1)).collect();
            let r = QErrorReport::new(Backend::CompiledVe, results, 0, None);
            let qs: Vec<f64> = r.records.iter().map(|x| x.qerror).collect();
            prop_assert!(qs.iter().all(|&q| q >= 1.0));
            prop_assert!(r.p50 <= r.p90 && r.p90 <= r.p95 && r.p95 <= r.p100);
            for (p, got) in [(0.5, r.p50), (0.9, r.p90), (0.95, r.p95), (1.0, r.p100)] {
                let (lo, hi) = bracket(&qs, p);
                prop_assert!(lo <= got && got <= hi);
            }
        }
    }

    #[test]
    fn trivially_exact_workload_has_unit_quantiles() {
        let t = gen_synthetic(&SyntheticSpec { skew: 1.0, correlation: 0.5, domain: 5, scale: 3, rows: 300, seed: 2 })
            .unwrap()
            .table;
        let n = t.row_count() as u64;
        let schema = JoinSchema::single(t);
        let ens = build_ensemble(&schema, &EnsembleOptions { budget: 1, ..Default::default() }, Exec::default()).unwrap();
        let mut q = Query::new(["synthetic"]);
        q.true_cardinality = Some(n);
        let qs = vec![q; 20];
        let r = eval_workload(&ens, &qs, Backend::CompiledVe, &PlanCache::default(), Exec::default()).unwrap();
        assert_eq!((r.p50, r.p90, r.p95, r.p100), (1.0, 1.0, 1.0, 1.0));
        assert!(r.timing.mean_latency_ms > 0.0);
        assert!(r.to_table(false).contains("q-error 95%"));
        assert!(!r.to_table(false).contains("latency"));
        assert!(r.to_table(true).contains("latency"));
    }

    #[test]
    fn record_order_is_input_order() {
        let t = gen_synthetic(&SyntheticSpec { skew: 1.0, correlation: 0.5, domain: 6, scale: 4, rows: 500, seed: 4 })
            .unwrap()
            .table;
        let schema = JoinSchema::single(t);
        let ens = build_ensemble(&schema, &EnsembleOptions { budget: 1, ..Default::default() }, Exec::default()).unwrap();
        let raw = gen_workload(&schema, &WorkloadSpec { count: 40, seed: 3, ..Default::default() }).unwrap();
        let qs: Vec<Query> = raw.iter().map(|r| Query::resolve(r, &schema.meta).unwrap()).collect();
        let cache = PlanCache::default();
        let a = eval_workload(&ens, &qs, Backend::CompiledVe, &cache, Exec::Sequential).unwrap();
        let b = eval_workload(&ens, &qs, Backend::CompiledVe, &cache, Exec::Parallel).unwrap();
        assert_eq!(a.records, b.records);
        let mut unlabeled = qs.clone();
        unlabeled[3].true_cardinality = None;
        assert!(eval_workload(&ens, &unlabeled, Backend::CompiledVe, &cache, Exec::Sequential).is_err());
    }
}
