use std::borrow::Cow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{AttributeMeta, Region};
use crate::params::BayesNet;
use crate::{Error, Result};

/// Weight applied to a fanout attribute's value `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightFn {
    /// `max(v, 1)`
    Identity,
    /// `1 / max(v, 1)`
    Reciprocal,
}

impl WeightFn {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            WeightFn::Identity => v.max(1.0),
            WeightFn::Reciprocal => 1.0 / v.max(1.0),
        }
    }

    /// Per-code weights; codes without a numeric value count as 0.
    pub fn vector(self, attr: &AttributeMeta) -> Vec<f64> {
        (0..attr.domain_size() as u32)
            .map(|c| self.apply(attr.numeric_value(c).unwrap_or(0.0)))
            .collect()
    }
}

/// Per-node code regions plus optional multiplicative per-code weights. The quantity
/// every estimator computes is `sum_x P(x) prod_v [x_v in R_v] w_v(x_v)`; with no
/// weights this is the query probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    regions: Vec<Option<Region>>,
    weights: Vec<Option<Arc<[f64]>>>,
}

impl Evidence {
    pub fn new(n: usize) -> Self {
        Evidence { regions: vec![None; n], weights: vec![None; n] }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Restricts node `v` to `region`, intersecting with any existing region.
    pub fn restrict(&mut self, v: usize, region: Region) {
        let r = match self.regions[v].take() {
            Some(old) => old.intersect(&region),
            None => region,
        };
        self.regions[v] = Some(r);
    }

    pub fn with_region(mut self, v: usize, region: Region) -> Self {
        self.restrict(v, region);
        self
    }

    /// Multiplies node `v`'s weights by `w` element-wise.
    pub fn weight_by(&mut self, v: usize, w: &[f64]) {
        let merged: Vec<f64> = match &self.weights[v] {
            Some(old) => old.iter().zip(w).map(|(a, b)| a * b).collect(),
            None => w.to_vec(),
        };
        self.weights[v] = Some(merged.into());
    }

    pub fn with_weight(mut self, v: usize, w: &[f64]) -> Self {
        self.weight_by(v, w);
        self
    }

    pub fn region(&self, v: usize) -> Option<&Region> {
        self.regions[v].as_ref()
    }

    pub fn weight(&self, v: usize) -> Option<&[f64]> {
        self.weights[v].as_deref()
    }

    pub fn constrained(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.regions[v].is_some()).collect()
    }

    pub fn weighted(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.weights[v].is_some()).collect()
    }

    /// Nodes carrying a region or a weight.
    pub fn involved(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.regions[v].is_some() || self.weights[v].is_some()).collect()
    }

    pub fn has_empty_region(&self) -> bool {
        self.regions.iter().flatten().any(Region::is_empty)
    }

    /// Codes admitted at node `v` (the whole domain when unconstrained).
    pub fn codes(&self, v: usize, card: usize) -> Cow<'_, [u32]> {
        match &self.regions[v] {
            Some(r) => Cow::Borrowed(r.codes()),
            None => Cow::Owned((0..card as u32).collect()),
        }
    }

    /// `[x in R_v] * w_v(x)`.
    pub fn factor(&self, v: usize, x: u32) -> f64 {
        let inside = self.regions[v].as_ref().is_none_or(|r| r.contains(x));
        if !inside {
            return 0.0;
        }
        self.weights[v].as_ref().map_or(1.0, |w| w[x as usize])
    }

    pub fn check(&self, bn: &BayesNet) -> Result<()> {
        if self.len() != bn.len() {
            return Err(Error::Invalid(format!("evidence covers {} nodes, model has {}", self.len(), bn.len())));
        }
        for (v, a) in bn.attrs().iter().enumerate() {
            let d = a.domain_size();
            if let Some(r) = &self.regions[v] {
                if r.codes().last().is_some_and(|&c| c as usize >= d) {
                    return Err(Error::Invalid(format!("region of `{}` exceeds its domain", a.name)));
                }
            }
            if let Some(w) = &self.weights[v] {
                if w.len() != d || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::Invalid(format!("weights of `{}` are malformed", a.name)));
                }
            }
        }
        Ok(())
    }
}
