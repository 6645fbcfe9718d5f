//! Tile pyramid construction: projection, tile assignment, per-tile triage
//! and sparsification, and the on-disk tileset.

mod input;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecConfig, CodecError};
use crate::metrics::{self, TldParams};
use crate::model::{BBox, Coord, Feature, Geometry, Schema, Tile, TileCoord, Value};
use crate::sparsify::{self, SolverStatus, SparsifyError, SparsifyParams};
use crate::triage::{self, TriageConfig, TriageError};

pub use input::{
    coerce, parse_cell, read_csv, read_features, read_geojson, InputFormat, InputOptions, SkippedRecord, SourceData,
    SourceFeature, write_geojson,
};

pub const MAX_LATITUDE: f64 = 85.051_128_779_806_59;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("input error: {0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Sparsify(#[from] SparsifyError),
    #[error(transparent)]
    Triage(#[from] TriageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub zoom_min: u8,
    pub zoom_max: u8,
    pub budget: usize,
    pub triage: TriageConfig,
    /// `budget` here is replaced by the pipeline budget.
    pub sparsify: SparsifyParams,
    pub codec: CodecConfig,
    pub input: InputOptions,
    /// Record the tile-level loss of every reduced tile in the metadata.
    pub compute_tld: bool,
    pub worker_count: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            zoom_min: 0,
            zoom_max: 8,
            budget: 256 * 1024,
            triage: TriageConfig::default(),
            sparsify: SparsifyParams::default(),
            codec: CodecConfig::default(),
            input: InputOptions::default(),
            compute_tld: true,
            worker_count: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.zoom_min > self.zoom_max {
            return Err(PipelineError::Config("zoom_min exceeds zoom_max".into()));
        }
        if self.zoom_max > 24 {
            return Err(PipelineError::Config("zoom_max above 24".into()));
        }
        if self.budget == 0 {
            return Err(PipelineError::Config("budget must be positive".into()));
        }
        if self.worker_count == Some(0) {
            return Err(PipelineError::Config("worker_count must be positive".into()));
        }
        if self.sparsify.grid.extent != self.codec.extent {
            return Err(PipelineError::Config("metric grid extent must equal the codec extent".into()));
        }
        self.triage.validate()?;
        self.sparsify_params().validate()?;
        Ok(())
    }

    pub fn sparsify_params(&self) -> SparsifyParams {
        SparsifyParams { budget: self.budget, ..self.sparsify.clone() }
    }

    fn tld_params(&self) -> TldParams {
        TldParams { epsilon: self.sparsify.epsilon, grid: self.sparsify.grid, ..TldParams::default() }
    }
}

/// Web Mercator projection of degrees onto the unit square, `y` down.
/// Latitudes beyond the projection limit are clamped.
pub fn reproject(lon: f64, lat: f64) -> (f64, f64) {
    let clamped = lat.clamp(-MAX_LATITUDE, MAX_LATITUDE);
    if clamped != lat {
        log::warn!("latitude {lat} clamped to {clamped}");
    }
    let phi = clamped.to_radians();
    let x = (lon + 180.0) / 360.0;
    let y = (1.0 - (phi.tan() + 1.0 / phi.cos()).ln() / std::f64::consts::PI) / 2.0;
    (x.clamp(0.0, 1.0), y.clamp(0.0, 1.0))
}

/// Tiles at zoom `z` whose extent, grown by `buffer_frac` of a tile side,
/// intersects `bbox` (unit-square coordinates, boundaries inclusive).
pub fn assign(bbox: &BBox, z: u8, buffer_frac: f64) -> Vec<TileCoord> {
    let n = 1u64 << z;
    let nf = n as f64;
    let range = |lo: f64, hi: f64| {
        let a = (lo * nf - 1.0 - buffer_frac).ceil().max(0.0) as u64;
        let b = ((hi * nf + buffer_frac).floor().max(-1.0) + 1.0) as u64;
        a..b.min(n)
    };
    let mut out = Vec::new();
    for y in range(bbox.min_y, bbox.max_y) {
        for x in range(bbox.min_x, bbox.max_x) {
            out.push(TileCoord::new(z, x as u32, y as u32));
        }
    }
    out
}

/// Source geometries projected to the unit square.
#[derive(Debug, Clone)]
pub struct Projected {
    pub geometries: Vec<Geometry>,
    pub bboxes: Vec<Option<BBox>>,
}

pub fn project(data: &SourceData) -> Projected {
    let geometries: Vec<Geometry> = data
        .features
        .iter()
        .map(|f| {
            f.geometry.map_coords(|c| {
                let (x, y) = reproject(c.x, c.y);
                Coord::new(x, y)
            })
        })
        .collect();
    let bboxes = geometries.iter().map(Geometry::bbox).collect();
    Projected { geometries, bboxes }
}

/// Members of every non-empty tile over the configured zoom range.
pub fn plan(projected: &Projected, cfg: &PipelineConfig) -> BTreeMap<TileCoord, Vec<usize>> {
    let bf = cfg.codec.buffer as f64 / cfg.codec.extent as f64;
    let mut tiles: BTreeMap<TileCoord, Vec<usize>> = BTreeMap::new();
    for z in cfg.zoom_min..=cfg.zoom_max {
        for (i, b) in projected.bboxes.iter().enumerate() {
            let Some(b) = b else { continue };
            for c in assign(b, z, bf) {
                tiles.entry(c).or_default().push(i);
            }
        }
    }
    tiles
}

/// Members of a single tile.
pub fn members(projected: &Projected, coord: TileCoord, cfg: &PipelineConfig) -> Vec<usize> {
    let bf = cfg.codec.buffer as f64 / cfg.codec.extent as f64;
    projected
        .bboxes
        .iter()
        .enumerate()
        .filter(|(_, b)| b.as_ref().is_some_and(|b| assign(b, coord.z, bf).contains(&coord)))
        .map(|(i, _)| i)
        .collect()
}

/// The raw tile in tile-local units, before clipping.
pub fn local_tile(data: &SourceData, projected: &Projected, coord: TileCoord, members: &[usize], extent: u32) -> Tile {
    let scale = (1u64 << coord.z) as f64;
    let e = extent as f64;
    let features = members
        .iter()
        .map(|&i| {
            let g = projected.geometries[i]
                .map_coords(|c| Coord::new((c.x * scale - coord.x as f64) * e, (c.y * scale - coord.y as f64) * e));
            Feature::new(g, data.features[i].values.clone())
        })
        .collect();
    Tile::new(data.schema.clone(), features, coord)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileStatus {
    pub z: u8,
    pub x: u32,
    pub y: u32,
    /// Features assigned to the tile.
    pub features_in: usize,
    /// Features left after clipping and simplification.
    pub features_prepared: usize,
    pub features_out: usize,
    pub cells_out: usize,
    pub bytes: usize,
    pub triaged: bool,
    pub sparsified: bool,
    pub solver_status: Option<SolverStatus>,
    pub rounds: usize,
    pub within_budget: bool,
    pub tld: Option<f64>,
}

/// Everything produced for one tile.
#[derive(Debug, Clone)]
pub struct TileBuild {
    pub status: TileStatus,
    /// Encoded tile; absent when the tile has no features.
    pub bytes: Option<Vec<u8>>,
    /// Clipped and simplified input: the reference for quality metrics.
    pub prepared: Tile,
    /// Reduced tile aligned row by row with `prepared`; removed rows hold
    /// only nulls.
    pub view: Tile,
    /// The tile that was encoded.
    pub output: Tile,
}

/// Triage and sparsification of a prepared tile.
pub fn reduce_prepared(prepared: &Tile, cfg: &PipelineConfig) -> Result<TileBuild, PipelineError> {
    let grid = cfg.sparsify.grid;
    let usage = triage::capacity_usage(prepared, cfg.triage.capacity_metric, &cfg.codec);
    let over_capacity = usage > cfg.triage.capacity_value as f64;
    let (triaged, kept) = if over_capacity {
        let (t, _) = triage::reduce(prepared, &cfg.triage, cfg.budget, &grid, &cfg.codec, cfg.sparsify.epsilon);
        (t.tile, t.kept)
    } else {
        (prepared.clone(), (0..prepared.n()).collect())
    };
    let sp = sparsify::sparsify_tile(&triaged, &cfg.sparsify_params(), &cfg.codec)?;
    let output = sp.reduction.output();
    let mut view = prepared.clone();
    view.schema = triaged.schema.clone();
    for f in &mut view.features {
        f.values.iter_mut().for_each(|v| *v = Value::Null);
    }
    for (k, &row) in kept.iter().enumerate() {
        if !sp.reduction.dropped[k] {
            view.features[row].values = sp.reduction.view.features[k].values.clone();
        }
    }
    let sparsified = sp.rounds > 0;
    let tld = if !over_capacity && !sparsified {
        Some(0.0)
    } else if cfg.compute_tld {
        metrics::tld(prepared, &view, &cfg.tld_params()).ok()
    } else {
        None
    };
    let bytes = if output.n() == 0 { None } else { Some(codec::encode(&output, &cfg.codec)?) };
    let len = bytes.as_ref().map_or(0, Vec::len);
    let c = prepared.coord;
    let status = TileStatus {
        z: c.z,
        x: c.x,
        y: c.y,
        features_in: prepared.n(),
        features_prepared: prepared.n(),
        features_out: output.n(),
        cells_out: output.n() + output.nonnull_cells(),
        bytes: len,
        triaged: over_capacity,
        sparsified,
        solver_status: sparsified.then_some(sp.decision.status),
        rounds: sp.rounds,
        within_budget: len <= cfg.budget,
        tld,
    };
    Ok(TileBuild { status, bytes, prepared: prepared.clone(), view, output })
}

/// Clips, simplifies and reduces a raw tile.
pub fn process_tile(raw: &Tile, cfg: &PipelineConfig) -> Result<TileBuild, PipelineError> {
    let prep = triage::prepare(raw, &cfg.triage, &cfg.sparsify.grid, &cfg.codec);
    let mut b = reduce_prepared(&prep.tile, cfg)?;
    b.status.features_in = raw.n();
    Ok(b)
}

/// Builds one tile of the pyramid in isolation.
pub fn build_one(data: &SourceData, cfg: &PipelineConfig, coord: TileCoord) -> Result<TileBuild, PipelineError> {
    cfg.validate()?;
    let projected = project(data);
    let m = members(&projected, coord, cfg);
    process_tile(&local_tile(data, &projected, coord, &m, cfg.codec.extent), cfg)
}

/// Builds every tile and hands each result to `sink` in `(z, x, y)` order.
pub fn build_each(
    data: &SourceData,
    cfg: &PipelineConfig,
    sink: impl Fn(TileBuild) -> Result<TileStatus, PipelineError> + Sync,
) -> Result<Vec<TileStatus>, PipelineError> {
    cfg.validate()?;
    let projected = project(data);
    let tiles: Vec<(TileCoord, Vec<usize>)> = plan(&projected, cfg).into_iter().collect();
    let work = || {
        tiles
            .par_iter()
            .map(|(c, m)| sink(process_tile(&local_tile(data, &projected, *c, m, cfg.codec.extent), cfg)?))
            .collect::<Result<Vec<_>, _>>()
    };
    match cfg.worker_count {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?
            .install(work),
        None => work(),
    }
}

pub fn tile_path(root: &Path, c: TileCoord) -> PathBuf {
    root.join(c.z.to_string()).join(c.x.to_string()).join(format!("{}.mvt", c.y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub layer: String,
    pub zooms: [u8; 2],
    pub budget_bytes: usize,
    pub schema: Schema,
    pub config: serde_json::Value,
    pub skipped_records: usize,
    pub tile_status: Vec<TileStatus>,
}

pub fn config_snapshot(cfg: &PipelineConfig) -> Result<serde_json::Value, PipelineError> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(m) = v.as_object_mut() {
        m.remove("worker_count");
    }
    Ok(v)
}

/// Builds the tileset under `root` and writes `metadata.json`. Tiles without
/// features are not written.
pub fn build(data: &SourceData, cfg: &PipelineConfig, root: &Path) -> Result<Metadata, PipelineError> {
    fs::create_dir_all(root)?;
    let statuses = build_each(data, cfg, |b| {
        if let Some(bytes) = &b.bytes {
            let c = TileCoord::new(b.status.z, b.status.x, b.status.y);
            let path = tile_path(root, c);
            fs::create_dir_all(path.parent().expect("tile path has a parent"))?;
            fs::write(&path, bytes)?;
        }
        Ok(b.status)
    })?;
    let meta = Metadata {
        layer: cfg.codec.layer_name.clone(),
        zooms: [cfg.zoom_min, cfg.zoom_max],
        budget_bytes: cfg.budget,
        schema: data.schema.clone(),
        config: config_snapshot(cfg)?,
        skipped_records: data.skipped.len(),
        tile_status: statuses.into_iter().filter(|s| s.features_out > 0).collect(),
    };
    fs::write(root.join("metadata.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(meta)
}

/// Reads a tileset's metadata.
pub fn read_metadata(root: &Path) -> Result<Metadata, PipelineError> {
    Ok(serde_json::from_slice(&fs::read(root.join("metadata.json"))?)?)
}

/// Reduces an already-encoded tile: decode, clip and simplify, triage and
/// sparsify.
pub fn reduce_encoded(bytes: &[u8], cfg: &PipelineConfig, coord: TileCoord) -> Result<TileBuild, PipelineError> {
    cfg.validate()?;
    let mut t = codec::decode(bytes)?;
    t.coord = coord;
    process_tile(&t, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let (x, y) = reproject(0.0, 0.0);
        assert!((x - 0.5).abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
        let (x, y) = reproject(180.0, 0.0);
        assert!((x - 1.0).abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
        let (_, y) = reproject(0.0, 89.0);
        assert!(y.abs() < 1e-9);
    }

    #[test]
    fn assignment_examples() {
        let world = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(assign(&world, 2, 0.0).len(), 16);
        let p = BBox::new(0.3, 0.3, 0.3, 0.3);
        assert_eq!(assign(&p, 3, 0.0), vec![TileCoord::new(3, 2, 2)]);
        let edge = BBox::new(0.25, 0.3, 0.25, 0.3);
        assert_eq!(assign(&edge, 2, 0.0).len(), 2);
        let near = BBox::new(0.249, 0.3, 0.249, 0.3);
        assert_eq!(assign(&near, 2, 0.0625).len(), 2);
    }
}
