//! Generic dense factors and the interpreted variable-elimination path.

use crate::params::BayesNet;
use crate::{Error, Result};

use super::reduce::{validate_order, ReducedGraph};
use super::Evidence;

/// Rescale threshold: a block whose largest entry falls below this is multiplied by a
/// power of two and the exponent tracked separately.
pub(crate) const TINY: f64 = 1e-280;

/// Dense table over `vars` (ascending node ids), last variable fastest. Represents
/// `vals * 2^exp`.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    pub vars: Vec<usize>,
    pub dims: Vec<usize>,
    pub vals: Vec<f64>,
    pub exp: i32,
}

pub(crate) fn renorm(vals: &mut [f64], exp: &mut i32) {
    let max = vals.iter().cloned().fold(0.0_f64, f64::max);
    if max > 0.0 && max < TINY {
        let e = max.log2().floor() as i32;
        let s = 2f64.powi(-e);
        for v in vals.iter_mut() {
            *v *= s;
        }
        *exp += e;
    }
}

pub(crate) fn scaled(v: f64, exp: i32) -> f64 {
    if exp == 0 {
        v
    } else {
        // split to avoid overflow of 2^exp on its own
        let half = exp / 2;
        v * 2f64.powi(half) * 2f64.powi(exp - half)
    }
}

impl Factor {
    fn strides_in(&self, vars: &[usize]) -> Vec<usize> {
        // stride of each of `vars` inside self (0 when absent)
        let mut own = vec![0usize; self.vars.len()];
        let mut s = 1;
        for i in (0..self.vars.len()).rev() {
            own[i] = s;
            s *= self.dims[i];
        }
        vars.iter()
            .map(|v| self.vars.iter().position(|x| x == v).map_or(0, |i| own[i]))
            .collect()
    }

    /// Product of `factors` summed over `sum_var` (if any).
    pub fn product_sum(factors: &[&Factor], sum_var: Option<usize>) -> Factor {
        let mut vars: Vec<usize> = factors.iter().flat_map(|f| f.vars.iter().copied()).collect();
        vars.sort_unstable();
        vars.dedup();
        let dims: Vec<usize> = vars
            .iter()
            .map(|v| {
                let f = factors.iter().find(|f| f.vars.contains(v)).unwrap();
                f.dims[f.vars.iter().position(|x| x == v).unwrap()]
            })
            .collect();
        let strides: Vec<Vec<usize>> = factors.iter().map(|f| f.strides_in(&vars)).collect();
        let out_pos = sum_var.and_then(|s| vars.iter().position(|&v| v == s));
        let out_vars: Vec<usize> = vars.iter().copied().filter(|&v| Some(v) != sum_var).collect();
        let out_dims: Vec<usize> =
            vars.iter().zip(&dims).filter(|(v, _)| Some(**v) != sum_var).map(|(_, d)| *d).collect();
        let total: usize = dims.iter().product();
        let mut out = vec![0.0; out_dims.iter().product()];
        let mut ostr = vec![0usize; vars.len()];
        {
            let mut s = 1;
            for i in (0..vars.len()).rev() {
                if Some(i) == out_pos {
                    continue;
                }
                ostr[i] = s;
                s *= dims[i];
            }
        }
        let exp: i32 = factors.iter().map(|f| f.exp).sum();
        if total > 0 {
            let mut counter = vec![0usize; vars.len()];
            let mut idx = vec![0usize; factors.len()];
            let mut oi = 0usize;
            for _ in 0..total {
                let mut p = 1.0;
                for (f, &i) in factors.iter().zip(&idx) {
                    p *= f.vals[i];
                }
                out[oi] += p;
                // odometer increment, last var fastest
                for d in (0..vars.len()).rev() {
                    counter[d] += 1;
                    for (k, st) in strides.iter().enumerate() {
                        idx[k] += st[d];
                    }
                    oi += ostr[d];
                    if counter[d] < dims[d] {
                        break;
                    }
                    for (k, st) in strides.iter().enumerate() {
                        idx[k] -= st[d] * dims[d];
                    }
                    oi -= ostr[d] * dims[d];
                    counter[d] = 0;
                }
            }
        }
        let mut f = Factor { vars: out_vars, dims: out_dims, vals: out, exp };
        renorm(&mut f.vals, &mut f.exp);
        f
    }

    pub fn total(&self) -> f64 {
        scaled(self.vals.iter().sum(), self.exp)
    }
}

/// Builds node `v`'s CPT factor over the given per-variable code lists, multiplying in
/// `[x_v in R_v] w_v(x_v)` for the child variable.
pub(crate) fn cpt_factor(bn: &BayesNet, v: usize, codes: &dyn Fn(usize) -> Vec<u32>, ev: &Evidence, mask_child: bool) -> Factor {
    let cpt = bn.cpt(v);
    let mut vars: Vec<usize> = cpt.parents().to_vec();
    vars.push(v);
    vars.sort_unstable();
    let lists: Vec<Vec<u32>> = vars.iter().map(|&u| codes(u)).collect();
    let dims: Vec<usize> = lists.iter().map(Vec::len).collect();
    let total: usize = dims.iter().product();
    let child_pos = vars.iter().position(|&u| u == v).unwrap();
    let parent_pos: Vec<usize> = cpt.parents().iter().map(|p| vars.iter().position(|u| u == p).unwrap()).collect();
    let mut vals = Vec::with_capacity(total);
    let mut counter = vec![0usize; vars.len()];
    for _ in 0..total {
        let x = lists[child_pos][counter[child_pos]];
        let cfg = parent_pos
            .iter()
            .zip(cpt.parent_cards())
            .fold(0usize, |acc, (&pp, &pc)| acc * pc + lists[pp][counter[pp]] as usize);
        let f = if mask_child { ev.factor(v, x) } else { ev.weight(v).map_or(1.0, |w| w[x as usize]) };
        vals.push(cpt.prob(x, cfg) * f);
        for d in (0..vars.len()).rev() {
            counter[d] += 1;
            if counter[d] < dims[d] {
                break;
            }
            counter[d] = 0;
        }
    }
    Factor { vars, dims, vals, exp: 0 }
}

/// Eliminates `order` over factors with bucket-style combination, then sums what remains.
pub(crate) fn eliminate(mut factors: Vec<Factor>, order: &[usize]) -> f64 {
    for &var in order {
        let (with, without): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&var));
        factors = without;
        if with.is_empty() {
            continue;
        }
        let refs: Vec<&Factor> = with.iter().collect();
        factors.push(Factor::product_sum(&refs, Some(var)));
    }
    let refs: Vec<&Factor> = factors.iter().collect();
    if refs.is_empty() {
        return 1.0;
    }
    let rest = Factor::product_sum(&refs, None);
    rest.total()
}

/// Interpreted variable elimination: builds full-domain factors for every node of `graph`
/// (region indicators and weights multiplied in) and eliminates in `order`.
pub fn variable_elimination(bn: &BayesNet, ev: &Evidence, graph: &ReducedGraph, order: &[usize]) -> Result<f64> {
    ev.check(bn)?;
    validate_order(graph, order)?;
    if ev.has_empty_region() {
        return Ok(0.0);
    }
    let cards = bn.domain_sizes();
    let full = |u: usize| (0..cards[u] as u32).collect::<Vec<u32>>();
    let factors: Vec<Factor> = graph.kept.iter().map(|&v| cpt_factor(bn, v, &full, ev, true)).collect();
    let rest: Vec<usize> = graph.kept.iter().copied().filter(|v| !order.contains(v)).collect();
    let order: Vec<usize> = order.iter().copied().chain(rest).collect();
    Ok(eliminate(factors, &order).clamp(0.0, f64::MAX))
}

/// Default cap on the number of joint assignments [`brute_force_prob`] enumerates.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

/// Enumerates every full assignment of the model.
pub fn brute_force_prob(bn: &BayesNet, ev: &Evidence, cap: u128) -> Result<f64> {
    ev.check(bn)?;
    let cards = bn.domain_sizes();
    let states = cards.iter().try_fold(1u128, |a, &c| a.checked_mul(c as u128)).unwrap_or(u128::MAX);
    if states > cap {
        return Err(Error::StateSpace { states, cap });
    }
    let n = cards.len();
    let mut x = vec![0u32; n];
    let mut total = 0.0;
    for _ in 0..states {
        let mut p = 1.0;
        for v in 0..n {
            p *= ev.factor(v, x[v]);
            if p == 0.0 {
                break;
            }
        }
        if p != 0.0 {
            total += p * bn.joint(&x);
        }
        for d in (0..n).rev() {
            x[d] += 1;
            if (x[d] as usize) < cards[d] {
                break;
            }
            x[d] = 0;
        }
    }
    Ok(total)
}
