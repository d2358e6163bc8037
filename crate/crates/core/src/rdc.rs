//! Randomized dependence coefficient and its table-level aggregates.
//!
//! `rdc` copula-transforms both columns, lifts each through random sinusoidal features
//! and reports the largest canonical correlation between the two feature sets.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::EncodedTable;
use crate::exec::Exec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdcParams {
    pub k_features: usize,
    pub sigma: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for RdcParams {
    fn default() -> Self {
        RdcParams { k_features: 20, sigma: 1.0 / 6.0, repetitions: 5, seed: 0 }
    }
}

/// Minimum column length accepted by [`rdc`].
pub const MIN_SAMPLES: usize = 10;

/// Empirical CDF values `#{x_j <= x_i} / n`.
fn copula(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut u = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let v = (j + 1) as f64 / n as f64;
        for &k in &idx[i..=j] {
            u[k] = v;
        }
        i = j + 1;
    }
    u
}

/// Centered `n x k` matrix of `sin(scale * (u * w0 + w1))` features.
fn features(u: &[f64], k: usize, sigma: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = u.len();
    // input is (u, 1): two columns, weights scaled by sigma / 2
    let scale = sigma / 2.0;
    let w: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            (a * scale, b * scale)
        })
        .collect();
    let mut m = DMatrix::from_fn(n, k, |i, j| (u[i] * w[j].0 + w[j].1).sin());
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    m
}

/// Whitening map for the column space of a centered feature matrix; directions with
/// negligible variance are dropped.
fn whitener(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let cov = x.transpose() * x;
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return None;
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > max * 1e-10)
        .collect();
    let mut w = DMatrix::zeros(x.ncols(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = 1.0 / eig.eigenvalues[i].sqrt();
        for r in 0..x.ncols() {
            w[(r, c)] = eig.eigenvectors[(r, i)] * s;
        }
    }
    Some(w)
}

fn largest_canonical_correlation(fx: &DMatrix<f64>, fy: &DMatrix<f64>) -> f64 {
    let (Some(wx), Some(wy)) = (whitener(fx), whitener(fy)) else {
        return 0.0;
    };
    let k = wx.transpose() * (fx.transpose() * fy) * wy;
    k.singular_values().iter().cloned().fold(0.0_f64, f64::max)
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|v| *v == x[0])
}

/// Randomized dependence coefficient in `[0, 1]`, the median over `repetitions` draws of
/// the random features. Deterministic in `params.seed`; a constant column scores 0.
pub fn rdc(x: &[f64], y: &[f64], params: &RdcParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!("rdc columns differ in length: {} vs {}", x.len(), y.len())));
    }
    if x.len() < MIN_SAMPLES {
        return Err(Error::Invalid(format!("rdc needs at least {MIN_SAMPLES} samples, got {}", x.len())));
    }
    if is_constant(x) || is_constant(y) {
        return Ok(0.0);
    }
    let (ux, uy) = (copula(x), copula(y));
    let reps = params.repetitions.max(1);
    let mut scores: Vec<f64> = (0..reps)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let fx = features(&ux, params.k_features, params.sigma, &mut rng);
            let fy = features(&uy, params.k_features, params.sigma, &mut rng);
            largest_canonical_correlation(&fx, &fy).clamp(0.0, 1.0)
        })
        .collect();
    scores.sort_by(f64::total_cmp);
    let mid = reps / 2;
    let med = if reps % 2 == 1 { scores[mid] } else { 0.5 * (scores[mid - 1] + scores[mid]) };
    Ok(med.clamp(0.0, 1.0))
}

/// RDC between two code columns, restricted to rows where neither side is the absent code.
pub fn rdc_codes(table: &EncodedTable, a: usize, b: usize, params: &RdcParams) -> Result<f64> {
    let (absent_a, absent_b) = (table.attrs[a].absent_code(), table.attrs[b].absent_code());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for row in table.rows() {
        if Some(row[a]) != absent_a && Some(row[b]) != absent_b {
            x.push(row[a] as f64);
            y.push(row[b] as f64);
        }
    }
    if x.len() < MIN_SAMPLES {
        return Ok(0.0);
    }
    rdc(&x, &y, params)
}

/// Mean RDC over all cross pairs `(i in attrs_t, j in attrs_r)`.
pub fn table_pair_rdc(
    sample: &EncodedTable,
    attrs_t: &[usize],
    attrs_r: &[usize],
    params: &RdcParams,
    exec: Exec,
) -> Result<f64> {
    if attrs_t.is_empty() || attrs_r.is_empty() {
        return Err(Error::Invalid("table_pair_rdc needs attributes on both sides".into()));
    }
    let pairs: Vec<(usize, usize)> = attrs_t
        .iter()
        .flat_map(|&i| attrs_r.iter().map(move |&j| (i, j)))
        .collect();
    let scores = exec.map(&pairs, |&(i, j)| {
        // order-independent pair seed keeps the average symmetric in its arguments
        let (lo, hi) = (i.min(j), i.max(j));
        let p = RdcParams { seed: params.seed ^ ((lo as u64) << 32 | hi as u64), ..*params };
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        rdc_codes(sample, a, b, &p)
    });
    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(total / pairs.len() as f64)
}

/// Symmetric table-level dependence scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceMatrix {
    pub table_names: Vec<String>,
    scores: Vec<f64>,
    pub attr_counts: Vec<usize>,
}

impl DependenceMatrix {
    pub fn new(table_names: Vec<String>, attr_counts: Vec<usize>) -> Self {
        let n = table_names.len();
        DependenceMatrix { table_names, scores: vec![0.0; n * n], attr_counts }
    }

    pub fn len(&self) -> usize {
        self.table_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table_names.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.len() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let n = self.len();
        let v = v.clamp(0.0, 1.0);
        self.scores[i * n + j] = v;
        self.scores[j * n + i] = v;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.scores.len() != n * n || self.attr_counts.len() != n {
            return Err(Error::Format("dependence matrix dimensions do not match table count".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let v = self.get(i, j);
                if !(0.0..=1.0).contains(&v) || v != self.get(j, i) {
                    return Err(Error::Format(format!("dependence entry ({i},{j}) = {v} is invalid")));
                }
            }
        }
        Ok(())
    }
}

/// Attribute-count weighted average of the pairwise entries between two disjoint table
/// groups: `sum M[T,R] |T| |R| / (sum |T| * sum |R|)`.
pub fn merged_group_rdc(m: &DependenceMatrix, group_a: &[usize], group_b: &[usize]) -> Result<f64> {
    if group_a.iter().any(|t| group_b.contains(t)) {
        return Err(Error::Invalid("merged_group_rdc groups overlap".into()));
    }
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::Invalid("merged_group_rdc needs non-empty groups".into()));
    }
    let n = m.len();
    if group_a.iter().chain(group_b).any(|&t| t >= n) {
        return Err(Error::Invalid("group member outside the dependence matrix".into()));
    }
    let size = |g: &[usize]| g.iter().map(|&t| m.attr_counts[t] as f64).sum::<f64>();
    let denom = size(group_a) * size(group_b);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let mut num = 0.0;
    for &t in group_a {
        for &r in group_b {
            num += m.get(t, r) * m.attr_counts[t] as f64 * m.attr_counts[r] as f64;
        }
    }
    Ok(num / denom)
}
