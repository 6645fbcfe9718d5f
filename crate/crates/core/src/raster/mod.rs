//! Rasterization of tile geometries onto a square pixel grid.
//!
//! Coordinates are rounded to integer tile units first, so every coverage
//! decision is made in exact integer arithmetic. Pixels are half-open
//! squares `[c, c + 1) x [r, r + 1)` in pixel units; a polygon covers the
//! pixels whose centers fall inside (left and top edges included) plus the
//! pixels touched by its boundary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Coord, Geometry, Tile, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelGrid {
    pub side: u32,
    pub extent: u32,
}

impl Default for PixelGrid {
    fn default() -> Self {
        Self { side: 256, extent: 4096 }
    }
}

impl PixelGrid {
    pub fn new(side: u32, extent: u32) -> Self {
        assert!(side >= 1 && extent >= 1, "grid side and extent must be positive");
        Self { side, extent }
    }

    /// Total pixel count R.
    pub fn resolution(&self) -> usize {
        (self.side as usize) * (self.side as usize)
    }

    /// Pixel width in scaled units (see [`Self::scaled`]).
    fn w(&self) -> i64 {
        2 * self.extent as i64
    }

    /// Maps a coordinate to scaled integer units where one pixel spans
    /// `2 * extent` and pixel centers sit at odd multiples of `extent`.
    fn scaled(&self, c: Coord) -> (i64, i64) {
        let k = 2 * self.side as i64;
        (c.x.round() as i64 * k, c.y.round() as i64 * k)
    }

    fn index(&self, col: i64, row: i64) -> Option<u32> {
        let s = self.side as i64;
        ((0..s).contains(&col) && (0..s).contains(&row)).then(|| (row * s + col) as u32)
    }
}

fn ceil_div(n: i128, d: i128) -> i128 {
    debug_assert!(d > 0);
    -((-n).div_euclid(d))
}

/// Pixels containing at least one point of the segment.
fn stroke(grid: &PixelGrid, a: (i64, i64), b: (i64, i64), out: &mut Vec<u32>) {
    let w = grid.w();
    let side = grid.side as i64;
    let (p, q) = if a.1 <= b.1 { (a, b) } else { (b, a) };
    let (x0, y0) = (p.0 as i128, p.1 as i128);
    let (dx, dy) = ((q.0 - p.0) as i128, (q.1 - p.1) as i128);
    let wi = w as i128;
    let span = |lo: i128, hi: i128, row: i64, out: &mut Vec<u32>| {
        let lo = lo.max(0);
        let hi = hi.min(side as i128 - 1);
        for c in lo..=hi {
            if let Some(i) = grid.index(c as i64, row) {
                out.push(i);
            }
        }
    };
    if dy == 0 {
        let row = p.1.div_euclid(w);
        if !(0..side).contains(&row) {
            return;
        }
        let (l, h) = (p.0.min(q.0), p.0.max(q.0));
        span(l.div_euclid(w) as i128, h.div_euclid(w) as i128, row, out);
        return;
    }
    let r0 = p.1.div_euclid(w).max(0);
    let r1 = q.1.div_euclid(w).min(side - 1);
    for row in r0..=r1 {
        let top = row as i128 * wi;
        let bottom = top + wi;
        let y_lo = top.max(y0);
        let (y_hi, open) = if q.1 as i128 >= bottom { (bottom, true) } else { (q.1 as i128, false) };
        if open && y_hi <= y_lo {
            continue;
        }
        // X(Y) = (x0*dy + (Y - y0)*dx) / dy, with dy > 0.
        let num = |y: i128| x0 * dy + (y - y0) * dx;
        let den = dy * wi;
        let (na, nb) = (num(y_lo), num(y_hi));
        let ca = na.div_euclid(den);
        let mut cb = nb.div_euclid(den);
        if open && dx > 0 && nb.rem_euclid(den) == 0 {
            cb -= 1;
        }
        span(ca.min(cb), ca.max(cb), row, out);
    }
}

/// A crossing abscissa `num / den` with `den > 0`.
#[derive(Clone, Copy)]
struct Crossing {
    num: i128,
    den: i128,
}

fn fill(grid: &PixelGrid, rings: &[Vec<(i64, i64)>], out: &mut Vec<u32>) {
    let w = grid.w() as i128;
    let e = grid.extent as i128;
    let side = grid.side as i128;
    let (mut ymin, mut ymax) = (i64::MAX, i64::MIN);
    for r in rings {
        for p in r {
            ymin = ymin.min(p.1);
            ymax = ymax.max(p.1);
        }
    }
    if ymin >= ymax {
        return;
    }
    // Row r has its center at (2r + 1) * extent; rows whose center lies in
    // [ymin, ymax).
    let row_of = |y: i128| ceil_div(y - e, w);
    let r0 = row_of(ymin as i128).max(0);
    let r1 = (row_of(ymax as i128) - 1).min(side - 1);
    if r0 > r1 {
        return;
    }
    let mut buckets: Vec<Vec<Crossing>> = vec![Vec::new(); (r1 - r0 + 1) as usize];
    for r in rings {
        for seg in r.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if a.1 == b.1 {
                continue;
            }
            let (p, q) = if a.1 < b.1 { (a, b) } else { (b, a) };
            let lo = row_of(p.1 as i128).max(r0);
            let hi = (row_of(q.1 as i128) - 1).min(r1);
            let (x0, y0) = (p.0 as i128, p.1 as i128);
            let (dx, dy) = ((q.0 - p.0) as i128, (q.1 - p.1) as i128);
            for row in lo..=hi {
                let yc = (2 * row + 1) * e;
                buckets[(row - r0) as usize].push(Crossing { num: x0 * dy + (yc - y0) * dx, den: dy });
            }
        }
    }
    for (k, xs) in buckets.iter_mut().enumerate() {
        let row = r0 + k as i128;
        xs.sort_by(|a, b| (a.num * b.den).cmp(&(b.num * a.den)));
        for pair in xs.chunks_exact(2) {
            // Columns c with a <= (2c + 1) e < b.
            let (a, b) = (pair[0], pair[1]);
            let lo = ceil_div(a.num - e * a.den, w * a.den).max(0);
            let hi = (ceil_div(b.num - e * b.den, w * b.den) - 1).min(side - 1);
            for c in lo..=hi {
                out.push((row * side + c) as u32);
            }
        }
    }
}

fn path_stroke(grid: &PixelGrid, pts: &[(i64, i64)], out: &mut Vec<u32>) {
    match pts {
        [] => {}
        [p] => stroke(grid, *p, *p, out),
        _ => {
            for s in pts.windows(2) {
                stroke(grid, s[0], s[1], out);
            }
        }
    }
}

/// The sorted set of pixel indices covered by `g`.
pub fn rasterize(g: &Geometry, grid: &PixelGrid) -> Vec<u32> {
    let mut out = Vec::new();
    let scale = |pts: &[Coord]| pts.iter().map(|c| grid.scaled(*c)).collect::<Vec<_>>();
    for c in g.points() {
        let p = grid.scaled(c);
        stroke(grid, p, p, &mut out);
    }
    for l in g.lines() {
        path_stroke(grid, &scale(l), &mut out);
    }
    for poly in g.polygons() {
        let rings: Vec<Vec<(i64, i64)>> = poly
            .iter()
            .map(|r| {
                let mut s = scale(r);
                if s.len() > 1 && s.first() != s.last() {
                    s.push(s[0]);
                }
                s
            })
            .collect();
        fill(grid, &rings, &mut out);
        for r in &rings {
            path_stroke(grid, r, &mut out);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Painter's-order ownership of every pixel: the highest-index feature
/// covering a pixel owns it.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub grid: PixelGrid,
    /// Owner feature per pixel, `None` where uncovered.
    pub owner: Vec<Option<u32>>,
    /// Independent footprint |rasterize(g_i)| per feature.
    pub footprints: Vec<usize>,
    /// Pixels owned by each feature after occlusion.
    pub visible: Vec<usize>,
}

impl Coverage {
    pub fn new(tile: &Tile, grid: &PixelGrid) -> Self {
        let per_feature: Vec<Vec<u32>> = tile.features.iter().map(|f| rasterize(&f.geometry, grid)).collect();
        Self::from_pixel_sets(per_feature, grid)
    }

    pub fn from_pixel_sets(sets: Vec<Vec<u32>>, grid: &PixelGrid) -> Self {
        let mut owner = vec![None; grid.resolution()];
        for (i, px) in sets.iter().enumerate() {
            for &p in px {
                owner[p as usize] = Some(i as u32);
            }
        }
        let mut visible = vec![0usize; sets.len()];
        for o in owner.iter().flatten() {
            visible[*o as usize] += 1;
        }
        Self { grid: *grid, owner, footprints: sets.iter().map(Vec::len).collect(), visible }
    }

    pub fn uncovered(&self) -> usize {
        self.owner.iter().filter(|o| o.is_none()).count()
    }

    /// Pixel-weighted value counts of column `j` (`j >= 1`). Keys cover the
    /// tile's full domain of column `j`, including zero counts and null.
    pub fn counts(&self, tile: &Tile, j: usize) -> BTreeMap<Value, usize> {
        let mut out: BTreeMap<Value, usize> = tile.domain(j).into_iter().map(|v| (v, 0)).collect();
        *out.get_mut(&Value::Null).unwrap() += self.uncovered();
        for (f, &n) in tile.features.iter().zip(&self.visible) {
            *out.get_mut(f.value(j)).unwrap() += n;
        }
        out
    }
}

/// Attribute image of column `j`: each pixel holds the value of its owner, or
/// null where uncovered.
pub fn attribute_image(tile: &Tile, j: usize, grid: &PixelGrid) -> Vec<Value> {
    let cov = Coverage::new(tile, grid);
    cov.owner
        .iter()
        .map(|o| o.map_or(Value::Null, |i| tile.features[i as usize].value(j).clone()))
        .collect()
}

pub fn pixel_counts(tile: &Tile, j: usize, grid: &PixelGrid) -> BTreeMap<Value, usize> {
    Coverage::new(tile, grid).counts(tile, j)
}

pub fn pixel_footprints(tile: &Tile, grid: &PixelGrid) -> Vec<usize> {
    tile.features.iter().map(|f| rasterize(&f.geometry, grid).len()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Geometry {
        Geometry::Polygon(vec![vec![
            Coord::new(x0, y0),
            Coord::new(x1, y0),
            Coord::new(x1, y1),
            Coord::new(x0, y1),
            Coord::new(x0, y0),
        ]])
    }

    #[test]
    fn full_cover() {
        let grid = PixelGrid::new(8, 4096);
        assert_eq!(rasterize(&rect(0.0, 0.0, 4096.0, 4096.0), &grid).len(), 64);
    }

    #[test]
    fn center_point_is_one_pixel() {
        for side in [1, 7, 8, 256] {
            let grid = PixelGrid::new(side, 4096);
            assert_eq!(rasterize(&Geometry::Point(Coord::new(2048.0, 2048.0)), &grid).len(), 1);
        }
    }

    #[test]
    fn inset_rectangle_covers_its_pixels() {
        let grid = PixelGrid::new(8, 4096);
        let px = rasterize(&rect(64.0, 64.0, 3008.0, 1472.0), &grid);
        let expected: Vec<u32> = (0..3).flat_map(|r| (0..6).map(move |c| r * 8 + c)).collect();
        assert_eq!(px, expected);
    }

    #[test]
    fn edge_on_grid_line_touches_right_pixel_only() {
        let grid = PixelGrid::new(8, 4096);
        let line = Geometry::LineString(vec![Coord::new(512.0, 100.0), Coord::new(512.0, 400.0)]);
        assert_eq!(rasterize(&line, &grid), vec![1]);
    }

    #[test]
    fn diagonal_through_corner_skips_side_pixels() {
        let grid = PixelGrid::new(8, 4096);
        let line = Geometry::LineString(vec![Coord::new(100.0, 100.0), Coord::new(900.0, 900.0)]);
        assert_eq!(rasterize(&line, &grid), vec![0, 9]);
        let back = Geometry::LineString(vec![Coord::new(1000.0, 24.0), Coord::new(24.0, 1000.0)]);
        // (512, 512) belongs to pixel (1, 1) and is on this segment too.
        assert_eq!(rasterize(&back, &grid), vec![1, 8, 9]);
    }

    #[test]
    fn zero_area_ring_is_stroke_only() {
        let grid = PixelGrid::new(8, 4096);
        let flat = Geometry::Polygon(vec![vec![
            Coord::new(100.0, 100.0),
            Coord::new(1000.0, 100.0),
            Coord::new(100.0, 100.0),
        ]]);
        assert_eq!(rasterize(&flat, &grid), vec![0, 1]);
    }

    #[test]
    fn overlap_goes_to_later_feature() {
        use crate::model::{AttributeType, Feature, Schema, TileCoord};
        let grid = PixelGrid::new(8, 4096);
        let schema = Schema::new([("k".to_string(), AttributeType::Str)]);
        let t = Tile::new(
            schema,
            vec![
                Feature::new(rect(0.0, 0.0, 2048.0, 2048.0), vec![Value::from("a")]),
                Feature::new(rect(1024.0, 1024.0, 3072.0, 3072.0), vec![Value::from("b")]),
            ],
            TileCoord::default(),
        );
        let img = attribute_image(&t, 1, &grid);
        assert_eq!(img[2 * 8 + 2], Value::from("b"));
        assert_eq!(img[0], Value::from("a"));
        let counts = pixel_counts(&t, 1, &grid);
        assert_eq!(counts.values().sum::<usize>(), 64);
        let fp = pixel_footprints(&t, &grid);
        assert_eq!(counts[&Value::from("b")], fp[1]);
        assert!(counts[&Value::from("a")] < fp[0]);
    }

    #[test]
    fn empty_tile_is_all_null() {
        use crate::model::{AttributeType, Schema};
        let t = Tile::empty(Schema::new([("k".to_string(), AttributeType::Str)]));
        let grid = PixelGrid::new(8, 4096);
        assert!(attribute_image(&t, 1, &grid).iter().all(Value::is_null));
        assert_eq!(pixel_counts(&t, 1, &grid)[&Value::Null], 64);
    }
}
