//! Heuristic pre-reduction of oversized tiles: attribute selection,
//! geometry clipping and simplification, priority admission of records and
//! divergence-ordered column reductions.

mod clip;
pub mod columns;
mod simplify;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecConfig};
use crate::model::{Tile, Value};
use crate::raster::{self, PixelGrid};

pub use clip::clip_to_tile;
pub use columns::{column_triage, quantize_numeric, trim_strings, Candidate, ReductionKind};
pub use simplify::{segment_distance, segments_intersect, simplify_geometry, SimplifyMethod, Simplified};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapacityMetric {
    Records,
    Bytes,
    Vertices,
    Cells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Priority {
    ByteSize,
    Vertices,
    TupleSize,
    PixelSize,
    Random,
}

#[derive(Debug, Error, PartialEq)]
pub enum TriageError {
    #[error("invalid triage parameter: {0}")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriageConfig {
    pub capacity_metric: CapacityMetric,
    pub capacity_value: usize,
    pub priority: Priority,
    pub simplify_method: SimplifyMethod,
    /// Simplification tolerance in pixels of the metric grid.
    pub simplify_tolerance_px: f64,
    pub quantize_bins: usize,
    pub quantize_min_unique: usize,
    pub trim_length: usize,
    pub seed: u64,
    /// Columns to keep; all when absent.
    pub include: Option<Vec<String>>,
    pub exclude: Vec<String>,
    /// Column triage stops at `target_factor * B` bytes.
    pub target_factor: f64,
}

impl Default for TriageConfig {
    fn default() -> Self {
        Self {
            capacity_metric: CapacityMetric::Cells,
            capacity_value: 100_000,
            priority: Priority::Vertices,
            simplify_method: SimplifyMethod::DouglasPeucker,
            simplify_tolerance_px: 1.0,
            quantize_bins: 10,
            quantize_min_unique: 21,
            trim_length: 8,
            seed: 0,
            include: None,
            exclude: Vec::new(),
            target_factor: 4.0,
        }
    }
}

impl TriageConfig {
    pub fn validate(&self) -> Result<(), TriageError> {
        if self.capacity_value == 0 {
            return Err(TriageError::InvalidParam("capacity_value must be positive"));
        }
        if self.quantize_bins < 2 {
            return Err(TriageError::InvalidParam("quantize_bins must be at least 2"));
        }
        if self.trim_length == 0 {
            return Err(TriageError::InvalidParam("trim_length must be at least 1"));
        }
        if !(self.simplify_tolerance_px >= 0.0) {
            return Err(TriageError::InvalidParam("simplify_tolerance_px must be non-negative"));
        }
        if !(self.target_factor >= 1.0) {
            return Err(TriageError::InvalidParam("target_factor must be at least 1"));
        }
        Ok(())
    }
}

/// A reduced tile and, for each of its features, the input feature index.
#[derive(Debug, Clone, PartialEq)]
pub struct Triaged {
    pub tile: Tile,
    pub kept: Vec<usize>,
}

impl Triaged {
    fn identity(tile: &Tile) -> Self {
        Self { tile: tile.clone(), kept: (0..tile.n()).collect() }
    }

    fn then(self, next: Triaged) -> Triaged {
        let kept = next.kept.iter().map(|&k| self.kept[k]).collect();
        Triaged { tile: next.tile, kept }
    }
}

/// Size of each feature under `metric`.
pub fn feature_sizes(tile: &Tile, metric: CapacityMetric, codec_cfg: &CodecConfig) -> Vec<f64> {
    match metric {
        CapacityMetric::Records => vec![1.0; tile.n()],
        CapacityMetric::Cells => tile.features.iter().map(|f| 1.0 + f.nonnull_count() as f64).collect(),
        CapacityMetric::Vertices => tile.features.iter().map(|f| f.geometry.vertex_count() as f64).collect(),
        CapacityMetric::Bytes => byte_sizes(tile, codec_cfg),
    }
}

fn byte_sizes(tile: &Tile, codec_cfg: &CodecConfig) -> Vec<f64> {
    let est = codec::estimate(tile, codec_cfg);
    tile.features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            est.geom_bytes[i]
                + (1..tile.d()).filter(|&j| !f.value(j).is_null()).map(|j| est.cell_cost(j)).sum::<f64>()
        })
        .collect()
}

fn tile_seed(seed: u64, tile: &Tile) -> u64 {
    let c = tile.coord;
    seed ^ ((c.z as u64) << 58) ^ ((c.x as u64) << 29) ^ c.y as u64
}

/// Priority score of each feature; larger is admitted first.
pub fn priorities(tile: &Tile, priority: Priority, seed: u64, grid: &PixelGrid, codec_cfg: &CodecConfig) -> Vec<f64> {
    match priority {
        Priority::ByteSize => byte_sizes(tile, codec_cfg),
        Priority::Vertices => feature_sizes(tile, CapacityMetric::Vertices, codec_cfg),
        Priority::TupleSize => tile.features.iter().map(|f| f.nonnull_count() as f64).collect(),
        Priority::PixelSize => tile.features.iter().map(|f| raster::rasterize(&f.geometry, grid).len() as f64).collect(),
        Priority::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(tile_seed(seed, tile));
            (0..tile.n()).map(|_| rng.random::<u32>() as f64).collect()
        }
    }
}

/// Feature indices in admission order: priority descending, ties by index.
pub fn admission_order(tile: &Tile, cfg: &TriageConfig, grid: &PixelGrid, codec_cfg: &CodecConfig) -> Vec<usize> {
    let pr = priorities(tile, cfg.priority, cfg.seed, grid, codec_cfg);
    let mut order: Vec<usize> = (0..tile.n()).collect();
    order.sort_by(|&a, &b| pr[b].total_cmp(&pr[a]).then(a.cmp(&b)));
    order
}

/// Admits features in priority order until the next one would exceed the
/// capacity. Admitted features keep their input order.
pub fn record_triage(tile: &Tile, cfg: &TriageConfig, grid: &PixelGrid, codec_cfg: &CodecConfig) -> Triaged {
    let sizes = feature_sizes(tile, cfg.capacity_metric, codec_cfg);
    let cap = cfg.capacity_value as f64;
    if sizes.iter().sum::<f64>() <= cap {
        return Triaged::identity(tile);
    }
    let mut used = 0.0;
    let mut kept = Vec::new();
    for i in admission_order(tile, cfg, grid, codec_cfg) {
        if used + sizes[i] > cap {
            break;
        }
        used += sizes[i];
        kept.push(i);
    }
    kept.sort_unstable();
    let features = kept.iter().map(|&i| tile.features[i].clone()).collect();
    Triaged { tile: Tile::new(tile.schema.clone(), features, tile.coord), kept }
}

fn null_column(t: &mut Tile, j: usize) {
    for f in &mut t.features {
        f.values[j - 1] = Value::Null;
    }
}

/// Nulls every column with at most one distinct value, null included.
pub fn drop_constant_columns(tile: &Tile) -> Tile {
    let mut out = tile.clone();
    for j in 1..tile.d() {
        let mut vals = tile.features.iter().map(|f| f.value(j));
        if let Some(first) = vals.next() {
            if !first.is_null() && vals.all(|v| v == first) {
                null_column(&mut out, j);
            }
        }
    }
    out
}

/// Nulls columns outside the configured include list or inside the exclude
/// list.
pub fn select_attributes(tile: &Tile, cfg: &TriageConfig) -> Tile {
    let mut out = tile.clone();
    for j in 1..tile.d() {
        let name = tile.schema.name(j);
        let included = cfg.include.as_ref().is_none_or(|l| l.iter().any(|n| n == name));
        if !included || cfg.exclude.iter().any(|n| n == name) {
            null_column(&mut out, j);
        }
    }
    out
}

/// Simplification tolerance in tile units.
pub fn tolerance(cfg: &TriageConfig, grid: &PixelGrid) -> f64 {
    cfg.simplify_tolerance_px * grid.extent as f64 / grid.side as f64
}

/// Clips, simplifies and quantizes every geometry, removing features that
/// vanish.
pub fn clip_and_simplify(tile: &Tile, cfg: &TriageConfig, grid: &PixelGrid, codec_cfg: &CodecConfig) -> Triaged {
    let tol = tolerance(cfg, grid);
    let mut features = Vec::with_capacity(tile.n());
    let mut kept = Vec::with_capacity(tile.n());
    for (i, f) in tile.features.iter().enumerate() {
        let Some(g) = clip_to_tile(&f.geometry, codec_cfg.extent as f64, codec_cfg.buffer as f64) else { continue };
        let Some(g) = simplify_geometry(&g, cfg.simplify_method, tol).geometry.and_then(|g| g.canonical()) else {
            continue;
        };
        let mut f = f.clone();
        f.geometry = g;
        features.push(f);
        kept.push(i);
    }
    Triaged { tile: Tile::new(tile.schema.clone(), features, tile.coord), kept }
}

/// Steps applied to every tile: attribute selection, constant-column
/// removal, clipping and simplification.
pub fn prepare(tile: &Tile, cfg: &TriageConfig, grid: &PixelGrid, codec_cfg: &CodecConfig) -> Triaged {
    let t = drop_constant_columns(&select_attributes(tile, cfg));
    clip_and_simplify(&t, cfg, grid, codec_cfg)
}

/// Number of units of `tile` under `metric`.
pub fn capacity_usage(tile: &Tile, metric: CapacityMetric, codec_cfg: &CodecConfig) -> f64 {
    feature_sizes(tile, metric, codec_cfg).iter().sum()
}

/// Record admission then column reduction toward `target_factor * budget`.
pub fn reduce(
    tile: &Tile,
    cfg: &TriageConfig,
    budget: usize,
    grid: &PixelGrid,
    codec_cfg: &CodecConfig,
    eps: f64,
) -> (Triaged, Vec<Candidate>) {
    let rec = record_triage(tile, cfg, grid, codec_cfg);
    let target = (cfg.target_factor * budget as f64) as usize;
    let (t, applied) = column_triage(&rec.tile, target, cfg, grid, codec_cfg, eps);
    (Triaged { tile: t, kept: rec.kept }, applied)
}

/// Full triage: [`prepare`] then [`reduce`].
pub fn triage(
    tile: &Tile,
    cfg: &TriageConfig,
    budget: usize,
    grid: &PixelGrid,
    codec_cfg: &CodecConfig,
    eps: f64,
) -> (Triaged, Vec<Candidate>) {
    let prep = prepare(tile, cfg, grid, codec_cfg);
    let (red, applied) = reduce(&prep.tile, cfg, budget, grid, codec_cfg, eps);
    (prep.then(red), applied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{lake_grid, lakes_input};
    use crate::model::{AttributeType, Coord, Feature, Geometry, Schema, TileCoord};

    #[test]
    fn six_cells_keep_two_lakes() {
        let t = lakes_input();
        let cfg = TriageConfig { capacity_value: 6, ..TriageConfig::default() };
        let mut t2 = t.clone();
        // Give lakes 2 and 4 the most vertices.
        for i in [1, 3] {
            let Geometry::Polygon(r) = &t.features[i].geometry else { unreachable!() };
            let mut ring = r[0].clone();
            let mid = Coord::new((ring[0].x + ring[1].x) / 2.0, ring[0].y);
            ring.insert(1, mid);
            t2.features[i].geometry = Geometry::Polygon(vec![ring]);
        }
        let out = record_triage(&t2, &cfg, &lake_grid(), &CodecConfig::default());
        assert_eq!(out.kept, vec![1, 3]);
        assert_eq!(out.tile.n(), 2);
    }

    #[test]
    fn large_capacity_is_identity() {
        let t = lakes_input();
        let out = record_triage(&t, &TriageConfig::default(), &lake_grid(), &CodecConfig::default());
        assert_eq!(out.tile, t);
    }

    #[test]
    fn constant_columns() {
        let schema = Schema::new([
            ("country".to_string(), AttributeType::Str),
            ("id".to_string(), AttributeType::Int),
            ("empty".to_string(), AttributeType::Int),
        ]);
        let features = (0..3)
            .map(|k| Feature::new(Geometry::Point(Coord::new(1.0, k as f64)), vec!["USA".into(), Value::Int(k), Value::Null]))
            .collect();
        let t = Tile::new(schema, features, TileCoord::default());
        let out = drop_constant_columns(&t);
        assert!(out.features.iter().all(|f| f.values[0].is_null() && f.values[2].is_null()));
        assert_eq!(out.column_values(2).unwrap(), t.column_values(2).unwrap());
        assert_eq!(drop_constant_columns(&lakes_input()), lakes_input());
    }

    #[test]
    fn include_exclude_lists() {
        let t = lakes_input();
        let cfg = TriageConfig { exclude: vec!["name".into()], ..TriageConfig::default() };
        let out = select_attributes(&t, &cfg);
        assert!(out.features.iter().all(|f| f.values[0].is_null() && !f.values[1].is_null()));
        let cfg = TriageConfig { include: Some(vec!["name".into()]), ..TriageConfig::default() };
        let out = select_attributes(&t, &cfg);
        assert!(out.features.iter().all(|f| !f.values[0].is_null() && f.values[1].is_null()));
    }

    #[test]
    fn random_priority_depends_on_tile() {
        let mut t = lakes_input();
        let grid = lake_grid();
        let cc = CodecConfig::default();
        let a = priorities(&t, Priority::Random, 7, &grid, &cc);
        assert_eq!(a, priorities(&t, Priority::Random, 7, &grid, &cc));
        t.coord = TileCoord::new(3, 1, 2);
        assert_ne!(a, priorities(&t, Priority::Random, 7, &grid, &cc));
    }

    #[test]
    fn config_validation() {
        assert!(TriageConfig::default().validate().is_ok());
        assert!(TriageConfig { quantize_bins: 1, ..TriageConfig::default() }.validate().is_err());
        assert!(TriageConfig { trim_length: 0, ..TriageConfig::default() }.validate().is_err());
        assert!(TriageConfig { capacity_value: 0, ..TriageConfig::default() }.validate().is_err());
    }

    #[test]
    fn small_tile_only_prepared() {
        let t = lakes_input();
        let (out, applied) = triage(&t, &TriageConfig::default(), 1 << 18, &lake_grid(), &CodecConfig::default(), 1.0);
        assert_eq!(out.kept, vec![0, 1, 2, 3]);
        assert!(applied.is_empty());
        assert_eq!(out.tile.features.iter().map(|f| &f.values).collect::<Vec<_>>(), t.features.iter().map(|f| &f.values).collect::<Vec<_>>());
    }
}
