#![allow(dead_code)]

pub mod exhaustive;
pub mod mvt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tilereduce::model::{AttributeType, Coord, Feature, Geometry, Schema, Tile, TileCoord, Value};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn coord(r: &mut ChaCha8Rng, lo: i32, hi: i32) -> Coord {
    Coord::new(r.random_range(lo..=hi) as f64, r.random_range(lo..=hi) as f64)
}

fn line(r: &mut ChaCha8Rng, lo: i32, hi: i32) -> Vec<Coord> {
    let n = r.random_range(2..12);
    (0..n).map(|_| coord(r, lo, hi)).collect()
}

fn ring(r: &mut ChaCha8Rng, cx: f64, cy: f64, rad: f64) -> Vec<Coord> {
    let n = r.random_range(3..16);
    let mut v: Vec<Coord> = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            let rr = rad * r.random_range(0.5..1.0);
            Coord::new(cx + rr * a.cos(), cy + rr * a.sin())
        })
        .collect();
    v.push(v[0]);
    v
}

fn polygon(r: &mut ChaCha8Rng, lo: i32, hi: i32) -> Vec<Vec<Coord>> {
    let span = (hi - lo) as f64;
    let c = coord(r, lo + (span / 4.0) as i32, hi - (span / 4.0) as i32);
    let rad = r.random_range(4.0..span / 4.0);
    let mut rings = vec![ring(r, c.x, c.y, rad)];
    if r.random_bool(0.3) {
        rings.push(ring(r, c.x, c.y, rad * 0.3));
    }
    rings
}

/// A geometry of kind `k` (0..6) with integer coordinates in `[lo, hi]`,
/// in canonical form.
pub fn geometry(r: &mut ChaCha8Rng, k: usize, lo: i32, hi: i32) -> Geometry {
    loop {
        let g = match k {
            0 => Geometry::Point(coord(r, lo, hi)),
            1 => Geometry::MultiPoint((0..r.random_range(2..6)).map(|_| coord(r, lo, hi)).collect()),
            2 => Geometry::LineString(line(r, lo, hi)),
            3 => Geometry::MultiLineString((0..r.random_range(2..4)).map(|_| line(r, lo, hi)).collect()),
            4 => Geometry::Polygon(polygon(r, lo, hi)),
            _ => Geometry::MultiPolygon((0..r.random_range(2..4)).map(|_| polygon(r, lo, hi)).collect()),
        };
        if let Some(c) = g.canonical() {
            if c.kind() == g.kind() {
                return c;
            }
        }
    }
}

fn value(r: &mut ChaCha8Rng, ty: AttributeType, distinct: i64) -> Value {
    if r.random_bool(0.2) {
        return Value::Null;
    }
    let k = r.random_range(0..distinct);
    match ty {
        AttributeType::Bool => Value::Bool(k % 2 == 0),
        AttributeType::Int => Value::Int(k - distinct / 3),
        AttributeType::Float => Value::Float(if k % 2 == 0 { k as f64 * 0.5 } else { k as f64 * 0.1 + 1e-9 }),
        _ => Value::Str(format!("v{k}")),
    }
}

/// A random schema with `cols` attributes.
pub fn schema(r: &mut ChaCha8Rng, cols: usize) -> Schema {
    let types = [AttributeType::Str, AttributeType::Int, AttributeType::Float, AttributeType::Bool];
    Schema::new((0..cols).map(|j| (format!("a{j}"), types[r.random_range(0..types.len())])))
}

/// A random valid tile with every geometry kind possible, coordinates inside
/// `[0, extent]`.
pub fn random_tile(seed: u64, max_n: usize, max_cols: usize, extent: i32) -> Tile {
    let mut r = rng(seed);
    let cols = r.random_range(0..=max_cols);
    let schema = schema(&mut r, cols);
    let n = r.random_range(0..=max_n);
    let distinct = r.random_range(1..20);
    let features = (0..n)
        .map(|_| {
            let k = r.random_range(0..6);
            let g = geometry(&mut r, k, 0, extent);
            let values = (1..=cols).map(|j| value(&mut r, schema.attributes[j].ty, distinct)).collect();
            Feature::new(g, values)
        })
        .collect();
    Tile::new(schema, features, TileCoord::default())
}

/// A random tile of polygons only.
pub fn polygon_tile(seed: u64, n: usize, cols: usize, extent: i32) -> Tile {
    let mut r = rng(seed);
    let schema = schema(&mut r, cols);
    let features = (0..n)
        .map(|_| {
            let k = if r.random_bool(0.8) { 4 } else { 5 };
            let g = geometry(&mut r, k, 0, extent);
            let values = (1..=cols).map(|j| value(&mut r, schema.attributes[j].ty, 6)).collect();
            Feature::new(g, values)
        })
        .collect();
    Tile::new(schema, features, TileCoord::default())
}

/// Raw tiles of `data` at zooms `zooms`, largest member count first.
pub fn source_tiles(
    data: &tilereduce::pipeline::SourceData,
    cfg: &tilereduce::pipeline::PipelineConfig,
    zooms: std::ops::RangeInclusive<u8>,
) -> Vec<Tile> {
    use tilereduce::pipeline::{local_tile, plan, project, PipelineConfig};
    let proj = project(data);
    let pc = PipelineConfig { zoom_min: *zooms.start(), zoom_max: *zooms.end(), ..cfg.clone() };
    let mut tiles: Vec<(usize, Tile)> = plan(&proj, &pc)
        .into_iter()
        .map(|(c, m)| (m.len(), local_tile(data, &proj, c, &m, cfg.codec.extent)))
        .collect();
    tiles.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.coord.cmp(&b.1.coord)));
    tiles.into_iter().map(|t| t.1).collect()
}
