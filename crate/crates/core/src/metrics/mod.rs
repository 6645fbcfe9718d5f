//! Pixel-weighted distributions and the divergence measures built on them.
//! All logarithms are base 2.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Tile, Value};
use crate::raster::{Coverage, PixelGrid};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("smoothing parameter must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("counts sum to {sum}, expected R = {r}")]
    CountMismatch { sum: usize, r: usize },
    #[error("value {0} is not in the domain")]
    OutsideDomain(String),
    #[error("distributions have different supports")]
    SupportMismatch,
    #[error("tiles differ in schema or cardinality")]
    SchemaMismatch,
    #[error("tile has no attribute columns")]
    NoAttributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelDistribution {
    pub support: Vec<Value>,
    pub probs: Vec<f64>,
    pub epsilon: f64,
    pub r: usize,
}

impl PixelDistribution {
    pub fn prob(&self, v: &Value) -> Option<f64> {
        self.support.binary_search(v).ok().map(|k| self.probs[k])
    }
}

fn build(
    counts: &BTreeMap<Value, usize>,
    domain: &BTreeSet<Value>,
    eps: f64,
    r: usize,
) -> Result<PixelDistribution, MetricError> {
    let sum: usize = counts.values().sum();
    if sum != r {
        return Err(MetricError::CountMismatch { sum, r });
    }
    if let Some(v) = counts.keys().find(|v| !domain.contains(v)) {
        return Err(MetricError::OutsideDomain(v.to_string()));
    }
    let z = r as f64 + eps * domain.len() as f64;
    let support: Vec<Value> = domain.iter().cloned().collect();
    let probs = support
        .iter()
        .map(|v| (*counts.get(v).unwrap_or(&0) as f64 + eps) / z)
        .collect();
    Ok(PixelDistribution { support, probs, epsilon: eps, r })
}

/// Laplace-smoothed distribution `(c(v) + eps) / (R + eps |Dom|)` over the
/// whole domain.
pub fn smooth(
    counts: &BTreeMap<Value, usize>,
    domain: &BTreeSet<Value>,
    eps: f64,
    r: usize,
) -> Result<PixelDistribution, MetricError> {
    if !(eps > 0.0) {
        return Err(MetricError::NonPositiveEpsilon(eps));
    }
    build(counts, domain, eps, r)
}

/// Unsmoothed empirical distribution `c(v) / R`.
pub fn empirical(
    counts: &BTreeMap<Value, usize>,
    domain: &BTreeSet<Value>,
    r: usize,
) -> Result<PixelDistribution, MetricError> {
    build(counts, domain, 0.0, r)
}

fn same_support(p: &PixelDistribution, q: &PixelDistribution) -> Result<(), MetricError> {
    if p.support == q.support {
        Ok(())
    } else {
        Err(MetricError::SupportMismatch)
    }
}

fn kld_probs(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).log2())
        .sum()
}

fn jsd_probs(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kld_probs(p, &m) + 0.5 * kld_probs(q, &m)).clamp(0.0, 1.0)
}

/// `KL(p || q)` in bits.
pub fn kld(p: &PixelDistribution, q: &PixelDistribution) -> Result<f64, MetricError> {
    same_support(p, q)?;
    Ok(kld_probs(&p.probs, &q.probs).max(0.0))
}

/// Jensen-Shannon divergence in bits, in `[0, 1]`.
pub fn vad(p: &PixelDistribution, q: &PixelDistribution) -> Result<f64, MetricError> {
    same_support(p, q)?;
    Ok(jsd_probs(&p.probs, &q.probs))
}

pub fn entropy(p: &PixelDistribution) -> f64 {
    -p.probs.iter().filter(|x| **x > 0.0).map(|x| x * x.log2()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TldParams {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub grid: PixelGrid,
}

impl Default for TldParams {
    fn default() -> Self {
        Self { epsilon: 1.0, delta: 1e-9, gamma: 1.0, grid: PixelGrid::default() }
    }
}

/// Per-column details of a TLD evaluation. Index 0 of each vector is
/// column 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TldBreakdown {
    pub entropy_in: Vec<f64>,
    pub weights: Vec<f64>,
    pub vad: Vec<f64>,
    pub tld: f64,
}

/// Smoothed column distribution of `tile` over `support`.
pub fn column_distribution(
    tile: &Tile,
    cov: &Coverage,
    j: usize,
    support: &BTreeSet<Value>,
    eps: f64,
) -> Result<PixelDistribution, MetricError> {
    smooth(&cov.counts(tile, j), support, eps, cov.grid.resolution())
}

/// Normalized entropy weights `(H_j + delta)^-gamma`.
pub fn entropy_weights(entropies: &[f64], delta: f64, gamma: f64) -> Vec<f64> {
    let raw: Vec<f64> = entropies.iter().map(|h| (h + delta).powf(-gamma)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|w| w / s).collect()
}

/// TLD with precomputed coverages. Columns are matched by position and must
/// have the same names. The support of each column is the input tile's
/// domain, extended by any value that appears only in the output.
pub fn tld_with_coverage(
    t_in: &Tile,
    cov_in: &Coverage,
    t_out: &Tile,
    cov_out: &Coverage,
    params: &TldParams,
) -> Result<TldBreakdown, MetricError> {
    let names = |t: &Tile| t.schema.attributes.iter().map(|a| a.name.clone()).collect::<Vec<_>>();
    if names(t_in) != names(t_out) || t_in.n() != t_out.n() {
        return Err(MetricError::SchemaMismatch);
    }
    if t_in.d() < 2 {
        return Err(MetricError::NoAttributes);
    }
    let mut entropy_in = Vec::new();
    let mut vads = Vec::new();
    for j in 1..t_in.d() {
        let mut support = t_in.domain(j);
        support.extend(t_out.domain(j));
        let p = column_distribution(t_in, cov_in, j, &support, params.epsilon)?;
        let q = column_distribution(t_out, cov_out, j, &support, params.epsilon)?;
        entropy_in.push(entropy(&p));
        vads.push(vad(&p, &q)?);
    }
    let weights = entropy_weights(&entropy_in, params.delta, params.gamma);
    let tld = weights.iter().zip(&vads).map(|(w, v)| w * v).sum::<f64>().clamp(0.0, 1.0);
    Ok(TldBreakdown { entropy_in, weights, vad: vads, tld })
}

pub fn tld_breakdown(t_in: &Tile, t_out: &Tile, params: &TldParams) -> Result<TldBreakdown, MetricError> {
    let cov_in = Coverage::new(t_in, &params.grid);
    let cov_out = if t_in.features.iter().zip(&t_out.features).all(|(a, b)| a.geometry == b.geometry) {
        cov_in.clone()
    } else {
        Coverage::new(t_out, &params.grid)
    };
    tld_with_coverage(t_in, &cov_in, t_out, &cov_out, params)
}

/// `TLD(t_in, t_out) = sum_j w_j(t_in) VAD_j(t_in, t_out)`.
pub fn tld(t_in: &Tile, t_out: &Tile, params: &TldParams) -> Result<f64, MetricError> {
    tld_breakdown(t_in, t_out, params).map(|b| b.tld)
}

/// Single-cell divergences. `raw[i][j - 1]` is
/// `KL(p_j || p_j with cell (i, j) nulled)`; `norm` divides by the column
/// maximum over non-null cells. Null cells hold 0 in both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDivergence {
    pub raw: Vec<Vec<f64>>,
    pub norm: Vec<Vec<f64>>,
}

pub fn cell_divergence_with_coverage(tile: &Tile, cov: &Coverage, eps: f64) -> Result<CellDivergence, MetricError> {
    if !(eps > 0.0) {
        return Err(MetricError::NonPositiveEpsilon(eps));
    }
    let n = tile.n();
    let cols = tile.d().saturating_sub(1);
    let r = cov.grid.resolution() as f64;
    let mut raw = vec![vec![0.0; cols]; n];
    let mut norm = vec![vec![0.0; cols]; n];
    for j in 1..tile.d() {
        let counts = cov.counts(tile, j);
        let z = r + eps * counts.len() as f64;
        let c_null = counts[&Value::Null] as f64;
        let mut vals = Vec::new();
        for (i, f) in tile.features.iter().enumerate() {
            let v = f.value(j);
            if v.is_null() {
                continue;
            }
            let m = cov.visible[i] as f64;
            let d = if m == 0.0 {
                0.0
            } else {
                let cv = counts[v] as f64;
                let (p_v, p_n) = ((cv + eps) / z, (c_null + eps) / z);
                let (q_v, q_n) = ((cv - m + eps) / z, (c_null + m + eps) / z);
                (p_v * (p_v / q_v).log2() + p_n * (p_n / q_n).log2()).max(0.0)
            };
            raw[i][j - 1] = d;
            vals.push((i, d));
        }
        let Some(max) = vals.iter().map(|x| x.1).reduce(f64::max) else { continue };
        let all_equal = vals.iter().all(|x| x.1 == vals[0].1);
        for (i, d) in vals {
            norm[i][j - 1] = if all_equal { 1.0 } else { d / max };
        }
    }
    Ok(CellDivergence { raw, norm })
}

pub fn cell_divergence(tile: &Tile, grid: &PixelGrid, eps: f64) -> Result<CellDivergence, MetricError> {
    cell_divergence_with_coverage(tile, &Coverage::new(tile, grid), eps)
}
