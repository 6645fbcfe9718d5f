//! Column-level reductions: numeric quantization, string trimming and their
//! divergence-ordered application.

use std::collections::{BTreeMap, BTreeSet};

use crate::codec::{self, CodecConfig};
use crate::metrics;
use crate::model::{AttributeType, Tile, Value};
use crate::raster::{Coverage, PixelGrid};

use super::TriageConfig;

pub const TRIM_MARKER: char = '…';

fn distinct_nonnull(tile: &Tile, j: usize) -> BTreeSet<Value> {
    tile.features.iter().map(|f| f.value(j)).filter(|v| !v.is_null()).cloned().collect()
}

fn is_numeric(ty: AttributeType) -> bool {
    matches!(ty, AttributeType::Int | AttributeType::Float)
}

/// Whether column `j` qualifies for quantization.
pub fn quantizable(tile: &Tile, j: usize, min_unique: usize) -> bool {
    j >= 1
        && j < tile.d()
        && is_numeric(tile.schema.attributes[j].ty)
        && distinct_nonnull(tile, j).len() >= min_unique
}

/// Equal-width binning of a numeric column. Integer columns bin over
/// `[min - 0.5, max + 0.5]` so that each bin covers whole integers.
pub fn quantize_map(tile: &Tile, j: usize, bins: usize) -> Option<BTreeMap<Value, Value>> {
    let vals: Vec<f64> = distinct_nonnull(tile, j).iter().filter_map(Value::as_f64).collect();
    let (min, max) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if vals.is_empty() || bins < 2 {
        return None;
    }
    let (lo, hi) = if tile.schema.attributes[j].ty == AttributeType::Int { (min - 0.5, max + 0.5) } else { (min, max) };
    if !(hi > lo) {
        return None;
    }
    let w = (hi - lo) / bins as f64;
    let map = distinct_nonnull(tile, j)
        .into_iter()
        .map(|v| {
            let x = v.as_f64().expect("numeric column");
            let k = (((x - lo) / w).floor() as usize).min(bins - 1);
            (v, Value::Float(lo + (k as f64 + 0.5) * w))
        })
        .collect();
    Some(map)
}

pub fn trim_value(s: &str, length: usize) -> String {
    if s.chars().count() <= length {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(length).collect();
        t.push(TRIM_MARKER);
        t
    }
}

pub fn trim_map(tile: &Tile, j: usize, length: usize) -> Option<BTreeMap<Value, Value>> {
    if j == 0 || j >= tile.d() || tile.schema.attributes[j].ty != AttributeType::Str {
        return None;
    }
    let map: BTreeMap<Value, Value> = distinct_nonnull(tile, j)
        .into_iter()
        .filter_map(|v| {
            let t = trim_value(v.as_str()?, length);
            (t != v.as_str()?).then(|| (v.clone(), Value::Str(t)))
        })
        .collect();
    (!map.is_empty()).then_some(map)
}

fn apply_map(tile: &Tile, j: usize, map: &BTreeMap<Value, Value>, ty: AttributeType) -> Tile {
    let mut out = tile.clone();
    out.schema.attributes[j].ty = ty;
    for f in &mut out.features {
        if let Some(v) = map.get(&f.values[j - 1]) {
            f.values[j - 1] = v.clone();
        }
    }
    out
}

/// Replaces each value of column `j` with its bin midpoint. Columns below
/// `min_unique` distinct values are returned unchanged.
pub fn quantize_numeric(tile: &Tile, j: usize, bins: usize, min_unique: usize) -> Tile {
    if !quantizable(tile, j, min_unique) {
        return tile.clone();
    }
    match quantize_map(tile, j, bins) {
        Some(m) => apply_map(tile, j, &m, AttributeType::Float),
        None => tile.clone(),
    }
}

/// Shortens strings of column `j` to `length` characters plus a marker.
pub fn trim_strings(tile: &Tile, j: usize, length: usize) -> Tile {
    match trim_map(tile, j, length) {
        Some(m) => apply_map(tile, j, &m, AttributeType::Str),
        None => tile.clone(),
    }
}

/// `KL(p || q)` where `p` is the smoothed pixel distribution of column `j`
/// and `q(v)` is proportional to the reduced distribution at the image of
/// `v` under `map`.
pub fn mapped_divergence(
    tile: &Tile,
    cov: &Coverage,
    j: usize,
    map: &BTreeMap<Value, Value>,
    eps: f64,
) -> Result<f64, metrics::MetricError> {
    let r = cov.grid.resolution();
    let counts = cov.counts(tile, j);
    let p = metrics::smooth(&counts, &counts.keys().cloned().collect(), eps, r)?;
    let image = |v: &Value| map.get(v).cloned().unwrap_or_else(|| v.clone());
    let mut red: BTreeMap<Value, usize> = BTreeMap::new();
    for (v, c) in &counts {
        *red.entry(image(v)).or_default() += c;
    }
    let z = r as f64 + eps * red.len() as f64;
    let raw: Vec<f64> = p.support.iter().map(|v| (red[&image(v)] as f64 + eps) / z).collect();
    let s: f64 = raw.iter().sum();
    let q = metrics::PixelDistribution { probs: raw.iter().map(|x| x / s).collect(), ..p.clone() };
    metrics::kld(&p, &q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReductionKind {
    Quantize,
    Trim,
}

/// A scored column reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub column: usize,
    pub kind: ReductionKind,
    pub score: f64,
}

/// All applicable column reductions with their divergence scores, in the
/// order they would be applied.
pub fn candidates(tile: &Tile, cfg: &TriageConfig, grid: &PixelGrid, eps: f64) -> Vec<Candidate> {
    let cov = Coverage::new(tile, grid);
    let mut out = Vec::new();
    for j in 1..tile.d() {
        let reduction = if quantizable(tile, j, cfg.quantize_min_unique) {
            quantize_map(tile, j, cfg.quantize_bins).map(|m| (ReductionKind::Quantize, m))
        } else {
            trim_map(tile, j, cfg.trim_length).map(|m| (ReductionKind::Trim, m))
        };
        if let Some((kind, m)) = reduction {
            if let Ok(score) = mapped_divergence(tile, &cov, j, &m, eps) {
                out.push(Candidate { column: j, kind, score });
            }
        }
    }
    out.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.column.cmp(&b.column)));
    out
}

/// Applies candidate reductions in ascending score order until the encoded
/// size reaches `target` bytes. A reduction that would grow the tile is
/// skipped. Returns the reduced tile and the applied candidates.
pub fn column_triage(
    tile: &Tile,
    target: usize,
    cfg: &TriageConfig,
    grid: &PixelGrid,
    codec_cfg: &CodecConfig,
    eps: f64,
) -> (Tile, Vec<Candidate>) {
    let size = |t: &Tile| codec::measure(t, codec_cfg).map(|s| s.total_bytes).unwrap_or(usize::MAX);
    let mut cur = tile.clone();
    let mut cur_size = size(&cur);
    let mut applied = Vec::new();
    if cur_size <= target {
        return (cur, applied);
    }
    for c in candidates(tile, cfg, grid, eps) {
        let next = match c.kind {
            ReductionKind::Quantize => quantize_numeric(&cur, c.column, cfg.quantize_bins, cfg.quantize_min_unique),
            ReductionKind::Trim => trim_strings(&cur, c.column, cfg.trim_length),
        };
        let s = size(&next);
        if s <= cur_size {
            cur = next;
            cur_size = s;
            applied.push(c);
        }
        if cur_size <= target {
            break;
        }
    }
    (cur, applied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coord, Feature, Geometry, Schema, TileCoord};

    fn column_tile(vals: Vec<Value>, ty: AttributeType) -> Tile {
        let schema = Schema::new([("v".to_string(), ty)]);
        let features = vals
            .into_iter()
            .enumerate()
            .map(|(k, v)| {
                let x = (k % 64) as f64 * 64.0 + 32.0;
                let y = (k / 64) as f64 * 64.0 + 32.0;
                Feature::new(Geometry::Point(Coord::new(x, y)), vec![v])
            })
            .collect();
        Tile::new(schema, features, TileCoord::default())
    }

    #[test]
    fn quantize_one_to_hundred() {
        let t = column_tile((1..=100).map(Value::Int).collect(), AttributeType::Int);
        let q = quantize_numeric(&t, 1, 10, 21);
        let got: Vec<f64> = distinct_nonnull(&q, 1).iter().filter_map(Value::as_f64).collect();
        let want: Vec<f64> = (0..10).map(|k| 5.5 + 10.0 * k as f64).collect();
        assert_eq!(got, want);
        assert_eq!(q.n(), t.n());
        assert_eq!(q.schema.attributes[1].ty, AttributeType::Float);
    }

    #[test]
    fn quantize_below_threshold_is_identity() {
        let t = column_tile((1..=15).map(Value::Int).collect(), AttributeType::Int);
        assert_eq!(quantize_numeric(&t, 1, 10, 21), t);
    }

    #[test]
    fn trim_examples() {
        assert_eq!(trim_value("Massachusets", 4), "Mass…");
        assert_eq!(trim_value("Ohio", 4), "Ohio");
        let t = column_tile(vec!["Santa Cruz".into(), "Santa Clara".into()], AttributeType::Str);
        let r = trim_strings(&t, 1, 7);
        assert_eq!(r.features[0].values[0], Value::from("Santa C…"));
        assert_eq!(r.features[1].values[0], Value::from("Santa C…"));
    }

    #[test]
    fn merging_trim_has_higher_divergence() {
        let t = column_tile(vec!["Santa Cruz".into(), "Santa Clara".into()], AttributeType::Str);
        let grid = PixelGrid::new(64, 4096);
        let cov = Coverage::new(&t, &grid);
        let merged = mapped_divergence(&t, &cov, 1, &trim_map(&t, 1, 7).unwrap(), 1.0).unwrap();
        let distinct = mapped_divergence(&t, &cov, 1, &trim_map(&t, 1, 8).unwrap(), 1.0).unwrap();
        assert!(distinct.abs() < 1e-12);
        assert!(merged > distinct);
    }

    #[test]
    fn lossless_column_goes_first() {
        let schema = Schema::new([("binned".to_string(), AttributeType::Float), ("raw".to_string(), AttributeType::Float)]);
        let features = (0..200)
            .map(|k| {
                let x = (k % 64) as f64 * 64.0 + 32.0;
                let y = (k / 64) as f64 * 64.0 + 32.0;
                // 30 bins over [0, 29] give every value its own bin.
                let b = (k % 30) as f64;
                Feature::new(Geometry::Point(Coord::new(x, y)), vec![Value::Float(b), Value::Float(k as f64 * 1.37)])
            })
            .collect();
        let t = Tile::new(schema, features, TileCoord::default());
        let cfg = TriageConfig { quantize_bins: 30, ..TriageConfig::default() };
        let c = candidates(&t, &cfg, &PixelGrid::new(64, 4096), 1.0);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].column, 1);
        assert!(c[0].score.abs() < 1e-12);
        assert!(c[0].score < c[1].score);
    }
}
