use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::BayesNet;
use crate::{Error, Result};

use super::reduce::reduce_graph;
use super::Evidence;

pub const DEFAULT_SAMPLES: usize = 10_000;

/// Progressively drawn codes over the reduced graph; column `i` holds node `nodes[i]`.
/// Nodes without kept children are never drawn and do not appear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMatrix {
    pub nodes: Vec<usize>,
    pub columns: Vec<Vec<u32>>,
    pub k: usize,
    pub seed: u64,
}

struct Conditional {
    mass: f64,
    codes: Vec<u32>,
    cum: Vec<f64>,
}

fn conditional(bn: &BayesNet, ev: &Evidence, v: usize, cfg: usize, codes: &[u32]) -> Conditional {
    let col = bn.cpt(v).column(cfg);
    let w = ev.weight(v);
    let mut cum = Vec::with_capacity(codes.len());
    let mut acc = 0.0;
    for &x in codes {
        acc += col[x as usize] * w.map_or(1.0, |w| w[x as usize]);
        cum.push(acc);
    }
    Conditional { mass: acc, codes: codes.to_vec(), cum }
}

fn draw(c: &Conditional, rng: &mut ChaCha8Rng) -> u32 {
    let u = rng.gen::<f64>() * c.mass;
    let i = c.cum.partition_point(|&x| x <= u).min(c.codes.len() - 1);
    c.codes[i]
}

/// Systematic resampling proportional to `w`; returns the chosen row indices.
fn resample(w: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = w.len();
    let total: f64 = w.iter().sum();
    let step = total / k as f64;
    let mut u = rng.gen::<f64>() * step;
    let mut out = Vec::with_capacity(k);
    let (mut i, mut acc) = (0usize, w[0]);
    for _ in 0..k {
        while u >= acc && i + 1 < k {
            i += 1;
            acc += w[i];
        }
        out.push(i);
        u += step;
    }
    out
}

/// Sweeps the reduced graph in topological order with `k` sample rows. At each involved
/// node the estimate is multiplied by the mean in-region mass given each row's parents; rows
/// are then resampled in proportion to that mass and the node's column is drawn from the
/// row's in-region conditional. Deterministic in `seed`.
pub fn progressive_sample(bn: &BayesNet, ev: &Evidence, k: usize, seed: u64) -> Result<(f64, SampleMatrix)> {
    if k == 0 {
        return Err(Error::Invalid("sample size k must be >= 1".into()));
    }
    ev.check(bn)?;
    let empty = SampleMatrix { nodes: vec![], columns: vec![], k, seed };
    if ev.has_empty_region() {
        return Ok((0.0, empty));
    }
    let g = reduce_graph(bn, ev);
    let n = bn.len();
    let mut kept = vec![false; n];
    for &v in &g.kept {
        kept[v] = true;
    }
    let mut needed = vec![false; n];
    for &(p, _) in &g.edges {
        needed[p] = true;
    }
    let cards = bn.domain_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Option<Vec<u32>>> = vec![None; n];
    let mut p = 1.0f64;
    let mut mass = vec![0.0; k];
    for &v in bn.dag().topo_order().iter().filter(|&&v| kept[v]) {
        let cpt = bn.cpt(v);
        let codes = ev.codes(v, cards[v]);
        let involved = ev.region(v).is_some() || ev.weight(v).is_some();
        let cfg_of = |cols: &[Option<Vec<u32>>], j: usize| {
            cpt.parents()
                .iter()
                .zip(cpt.parent_cards())
                .fold(0usize, |acc, (&pa, &pc)| acc * pc + cols[pa].as_ref().unwrap()[j] as usize)
        };
        let mut cache: HashMap<usize, Conditional> = HashMap::new();
        let mut cfgs: Vec<usize> = (0..k).map(|j| cfg_of(&cols, j)).collect();
        if involved {
            for (j, &cfg) in cfgs.iter().enumerate() {
                mass[j] = cache.entry(cfg).or_insert_with(|| conditional(bn, ev, v, cfg, &codes)).mass;
            }
            let all_equal = mass.iter().all(|&m| m == mass[0]);
            let mean = if all_equal { mass[0] } else { mass.iter().sum::<f64>() / k as f64 };
            p *= mean;
            if p == 0.0 {
                return Ok((0.0, empty));
            }
            if !all_equal {
                let idx = resample(&mass, &mut rng);
                for c in cols.iter_mut().flatten() {
                    *c = idx.iter().map(|&i| c[i]).collect();
                }
                cfgs = idx.iter().map(|&i| cfgs[i]).collect();
            }
        }
        if needed[v] {
            let col = cfgs
                .iter()
                .map(|&cfg| draw(cache.entry(cfg).or_insert_with(|| conditional(bn, ev, v, cfg, &codes)), &mut rng))
                .collect();
            cols[v] = Some(col);
        }
    }
    let nodes: Vec<usize> = (0..n).filter(|&v| cols[v].is_some()).collect();
    let columns = nodes.iter().map(|&v| cols[v].take().unwrap()).collect();
    Ok((p.max(0.0), SampleMatrix { nodes, columns, k, seed }))
}

/// Progressive-sampling estimate of the evidence mass.
pub fn progressive_sample_prob(bn: &BayesNet, ev: &Evidence, k: usize, seed: u64) -> Result<f64> {
    progressive_sample(bn, ev, k, seed).map(|(p, _)| p)
}
