//! Seeded synthetic feature collections in longitude/latitude.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{AttributeType, Coord, Geometry, Schema, Value};
use crate::pipeline::{SourceData, SourceFeature};

pub const CLASSES: [&str; 8] = ["residential", "industrial", "forest", "water", "farmland", "park", "retail", "wetland"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub features: usize,
    pub seed: u64,
    /// Longitude/latitude window `[min_lon, min_lat, max_lon, max_lat]`.
    pub bounds: [f64; 4],
    /// Shares of polygons, lines and points; normalized.
    pub mix: [f64; 3],
    /// Largest polygon radius as a fraction of the window width.
    pub max_radius: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { features: 1000, seed: 1, bounds: [-4.0, 40.0, 4.0, 48.0], mix: [0.5, 0.25, 0.25], max_radius: 0.02 }
    }
}

fn schema() -> Schema {
    Schema::new([
        ("class".to_string(), AttributeType::Str),
        ("value".to_string(), AttributeType::Float),
        ("rank".to_string(), AttributeType::Int),
        ("name".to_string(), AttributeType::Str),
    ])
}

fn class_of(rng: &mut ChaCha8Rng, cx: f64, cy: f64) -> usize {
    // Spatially coherent classes with skewed frequencies.
    let base = (((cx * 3.0).sin() + (cy * 2.0).cos() + 2.0) * 2.0) as usize % CLASSES.len();
    if rng.random::<f64>() < 0.7 {
        base
    } else {
        let u: f64 = rng.random();
        ((u * u) * CLASSES.len() as f64) as usize
    }
}

/// Random star-shaped ring around `c` whose vertex count grows with its
/// radius.
fn star(rng: &mut ChaCha8Rng, c: Coord, r: f64, rmax: f64) -> Vec<Coord> {
    let t = (r / rmax).sqrt();
    let n = (6.0 + 120.0 * t * rng.random_range(0.6..1.4)).round() as usize;
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut ring: Vec<Coord> = (0..n)
        .map(|k| {
            let a = phase + std::f64::consts::TAU * k as f64 / n as f64;
            let rr = r * rng.random_range(0.7..1.0);
            Coord::new(c.x + rr * a.cos(), c.y - rr * a.sin())
        })
        .collect();
    ring.push(ring[0]);
    ring
}

fn walk(rng: &mut ChaCha8Rng, c: Coord, step: f64) -> Vec<Coord> {
    let n = rng.random_range(2..40);
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut p = c;
    let mut out = vec![p];
    for _ in 1..n {
        heading += rng.random_range(-0.6..0.6);
        p = Coord::new(p.x + step * heading.cos(), p.y + step * heading.sin());
        out.push(p);
    }
    out
}

/// Generates `cfg.features` features with four attributes: a categorical
/// `class`, a continuous `value`, an integer `rank` and a long `name`.
pub fn generate(cfg: &SynthConfig) -> SourceData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [x0, y0, x1, y1] = cfg.bounds;
    let w = x1 - x0;
    let rmax = cfg.max_radius * w;
    let total: f64 = cfg.mix.iter().sum();
    let mut features = Vec::with_capacity(cfg.features);
    for k in 0..cfg.features {
        // Clustered centers: half uniform, half around a few hot spots.
        let c = if rng.random::<f64>() < 0.5 {
            Coord::new(rng.random_range(x0..x1), rng.random_range(y0..y1))
        } else {
            let h = rng.random_range(0..5) as f64;
            let hx = x0 + w * (0.2 + 0.15 * h);
            let hy = y0 + (y1 - y0) * (0.3 + 0.1 * h);
            let d = w * 0.05 * rng.random::<f64>().powi(2);
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Coord::new((hx + d * a.cos()).clamp(x0, x1), (hy + d * a.sin()).clamp(y0, y1))
        };
        let u: f64 = rng.random::<f64>() * total;
        let geometry = if u < cfg.mix[0] {
            let r = rmax * rng.random::<f64>().powi(3).max(0.002);
            Geometry::Polygon(vec![star(&mut rng, c, r, rmax)])
        } else if u < cfg.mix[0] + cfg.mix[1] {
            Geometry::LineString(walk(&mut rng, c, rmax * 0.2))
        } else {
            Geometry::Point(c)
        };
        let class = class_of(&mut rng, c.x, c.y);
        let value = (c.x - x0) / w * 50.0 + rng.random_range(0.0..50.0);
        let rank = rng.random_range(0..60i64);
        let name = format!("{} {} {}", CLASSES[class], ["north", "south", "east", "west"][k % 4], k);
        let values = vec![
            Value::from(CLASSES[class]),
            if rng.random::<f64>() < 0.05 { Value::Null } else { Value::Float((value * 1000.0).round() / 1000.0) },
            Value::Int(rank),
            Value::Str(name),
        ];
        features.push(SourceFeature { geometry, values });
    }
    SourceData { schema: schema(), features, skipped: Vec::new() }
}

/// A gap-free polygon tessellation resembling administrative boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TessellationConfig {
    pub cols: usize,
    pub rows: usize,
    pub seed: u64,
    pub bounds: [f64; 4],
    /// Interior points inserted along every shared edge.
    pub edge_points: usize,
}

impl Default for TessellationConfig {
    fn default() -> Self {
        Self { cols: 60, rows: 40, seed: 1, bounds: [-4.0, 40.0, 4.0, 48.0], edge_points: 12 }
    }
}

fn hash01(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f) ^ c);
    rng.random()
}

/// Generates `cols * rows` cells whose neighbors share identical, jagged
/// boundaries. Each cell carries the same four attributes as [`generate`].
pub fn tessellation(cfg: &TessellationConfig) -> SourceData {
    let [x0, y0, x1, y1] = cfg.bounds;
    let (dx, dy) = ((x1 - x0) / cfg.cols as f64, (y1 - y0) / cfg.rows as f64);
    let corner = |c: usize, r: usize| -> Coord {
        let jx = if c == 0 || c == cfg.cols { 0.0 } else { hash01(cfg.seed, c as u64, r as u64, 1) - 0.5 };
        let jy = if r == 0 || r == cfg.rows { 0.0 } else { hash01(cfg.seed, c as u64, r as u64, 2) - 0.5 };
        Coord::new(x0 + (c as f64 + 0.6 * jx) * dx, y0 + (r as f64 + 0.6 * jy) * dy)
    };
    // Points strictly between corners `a` and `b`, keyed so both neighbors
    // walk the same edge.
    let edge = |a: (usize, usize), b: (usize, usize)| -> Vec<Coord> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p, q) = (corner(lo.0, lo.1), corner(hi.0, hi.1));
        let border = (lo.0 == hi.0 && (lo.0 == 0 || lo.0 == cfg.cols)) || (lo.1 == hi.1 && (lo.1 == 0 || lo.1 == cfg.rows));
        let key = (lo.0 * 7919 + lo.1) as u64 * 104_729 + (hi.0 * 7919 + hi.1) as u64;
        let (nx, ny) = (-(q.y - p.y), q.x - p.x);
        let mut pts: Vec<Coord> = (1..=cfg.edge_points)
            .map(|k| {
                let t = k as f64 / (cfg.edge_points + 1) as f64;
                let w = if border { 0.0 } else { 0.12 * (hash01(cfg.seed, key, k as u64, 3) - 0.5) };
                Coord::new(p.x + t * (q.x - p.x) + w * nx, p.y + t * (q.y - p.y) + w * ny)
            })
            .collect();
        if lo != a {
            pts.reverse();
        }
        pts
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut features = Vec::with_capacity(cfg.cols * cfg.rows);
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let cs = [(c, r), (c + 1, r), (c + 1, r + 1), (c, r + 1)];
            let mut ring = Vec::new();
            for k in 0..4 {
                ring.push(corner(cs[k].0, cs[k].1));
                ring.extend(edge(cs[k], cs[(k + 1) % 4]));
            }
            ring.push(ring[0]);
            let k = r * cfg.cols + c;
            let (cx, cy) = (x0 + (c as f64 + 0.5) * dx, y0 + (r as f64 + 0.5) * dy);
            let class = class_of(&mut rng, cx, cy);
            let value = (cx - x0) / (x1 - x0) * 50.0 + rng.random_range(0.0..50.0);
            let values = vec![
                Value::from(CLASSES[class]),
                if rng.random::<f64>() < 0.05 { Value::Null } else { Value::Float((value * 1000.0).round() / 1000.0) },
                Value::Int(rng.random_range(0..60i64)),
                Value::Str(format!("{} county {}", CLASSES[class], k)),
            ];
            features.push(SourceFeature { geometry: Geometry::Polygon(vec![ring]), values });
        }
    }
    SourceData { schema: schema(), features, skipped: Vec::new() }
}
