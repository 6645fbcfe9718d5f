//! Clipping to the buffered tile square.

use crate::model::{Coord, Geometry, Ring};

#[derive(Debug, Clone, Copy)]
struct Rect {
    lo: f64,
    hi: f64,
}

impl Rect {
    fn contains(&self, c: Coord) -> bool {
        (self.lo..=self.hi).contains(&c.x) && (self.lo..=self.hi).contains(&c.y)
    }
}

/// Liang-Barsky: the parameter interval of `a + t (b - a)` inside the
/// rectangle, if any.
fn clip_segment(r: Rect, a: Coord, b: Coord) -> Option<(Coord, Coord)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-dx, a.x - r.lo), (dx, r.hi - a.x), (-dy, a.y - r.lo), (dy, r.hi - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    let at = |t: f64| if t == 0.0 { a } else if t == 1.0 { b } else { Coord::new(a.x + t * dx, a.y + t * dy) };
    Some((at(t0), at(t1)))
}

fn clip_line(r: Rect, line: &[Coord]) -> Vec<Vec<Coord>> {
    let mut parts: Vec<Vec<Coord>> = Vec::new();
    let mut cur: Vec<Coord> = Vec::new();
    for w in line.windows(2) {
        match clip_segment(r, w[0], w[1]) {
            Some((p, q)) => {
                if cur.last() != Some(&p) {
                    if cur.len() >= 2 {
                        parts.push(std::mem::take(&mut cur));
                    }
                    cur.clear();
                    cur.push(p);
                }
                cur.push(q);
                if q != w[1] {
                    parts.push(std::mem::take(&mut cur));
                }
            }
            None => {
                if cur.len() >= 2 {
                    parts.push(std::mem::take(&mut cur));
                }
                cur.clear();
            }
        }
    }
    if cur.len() >= 2 {
        parts.push(cur);
    }
    parts.retain(|p| p.len() >= 2);
    parts
}

/// Sutherland-Hodgman against the four half-planes of the rectangle.
fn clip_ring(r: Rect, ring: &[Coord]) -> Option<Ring> {
    let mut pts: Vec<Coord> = ring.to_vec();
    if pts.first() == pts.last() {
        pts.pop();
    }
    type Edge = (fn(Coord, f64) -> bool, fn(Coord, Coord, f64) -> Coord, f64);
    let ix = |a: Coord, b: Coord, x: f64| Coord::new(x, a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x));
    let iy = |a: Coord, b: Coord, y: f64| Coord::new(a.x + (b.x - a.x) * (y - a.y) / (b.y - a.y), y);
    let edges: [Edge; 4] = [
        (|c, v| c.x >= v, ix, r.lo),
        (|c, v| c.x <= v, ix, r.hi),
        (|c, v| c.y >= v, iy, r.lo),
        (|c, v| c.y <= v, iy, r.hi),
    ];
    for (inside, cut, v) in edges {
        if pts.is_empty() {
            return None;
        }
        let mut out = Vec::with_capacity(pts.len() + 4);
        for k in 0..pts.len() {
            let cur = pts[k];
            let prev = pts[(k + pts.len() - 1) % pts.len()];
            match (inside(prev, v), inside(cur, v)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cut(prev, cur, v)),
                (false, true) => {
                    out.push(cut(prev, cur, v));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
        pts = out;
    }
    pts.dedup();
    if pts.len() < 3 {
        return None;
    }
    pts.push(pts[0]);
    Some(pts)
}

/// Intersects `g` with `[-buffer, extent + buffer]^2`. Returns `None` when
/// nothing remains.
pub fn clip_to_tile(g: &Geometry, extent: f64, buffer: f64) -> Option<Geometry> {
    let r = Rect { lo: -buffer, hi: extent + buffer };
    if let Some(b) = g.bbox() {
        if b.min_x >= r.lo && b.min_y >= r.lo && b.max_x <= r.hi && b.max_y <= r.hi {
            return Some(g.clone());
        }
    }
    match g {
        Geometry::Point(c) => r.contains(*c).then(|| g.clone()),
        Geometry::MultiPoint(pts) => {
            let kept: Vec<Coord> = pts.iter().copied().filter(|c| r.contains(*c)).collect();
            match kept.len() {
                0 => None,
                1 => Some(Geometry::Point(kept[0])),
                _ => Some(Geometry::MultiPoint(kept)),
            }
        }
        Geometry::LineString(_) | Geometry::MultiLineString(_) => {
            let mut parts: Vec<Vec<Coord>> = g.lines().into_iter().flat_map(|l| clip_line(r, l)).collect();
            match parts.len() {
                0 => None,
                1 => Some(Geometry::LineString(parts.remove(0))),
                _ => Some(Geometry::MultiLineString(parts)),
            }
        }
        Geometry::Polygon(_) | Geometry::MultiPolygon(_) => {
            let mut polys: Vec<Vec<Ring>> = Vec::new();
            for poly in g.polygons() {
                let Some((ext, holes)) = poly.split_first() else { continue };
                let Some(e) = clip_ring(r, ext) else { continue };
                let mut rings = vec![e];
                rings.extend(holes.iter().filter_map(|h| clip_ring(r, h)));
                polys.push(rings);
            }
            match polys.len() {
                0 => None,
                1 => Some(Geometry::Polygon(polys.remove(0))),
                _ => Some(Geometry::MultiPolygon(polys)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inside_is_identity() {
        let g = Geometry::LineString(vec![Coord::new(10.0, 10.0), Coord::new(100.0, 50.0)]);
        assert_eq!(clip_to_tile(&g, 4096.0, 256.0), Some(g));
    }

    #[test]
    fn point_outside_buffer_is_empty() {
        assert_eq!(clip_to_tile(&Geometry::Point(Coord::new(-300.0, 5.0)), 4096.0, 256.0), None);
        assert!(clip_to_tile(&Geometry::Point(Coord::new(-200.0, 5.0)), 4096.0, 256.0).is_some());
    }

    #[test]
    fn crossing_line_is_cut_at_buffer() {
        let g = Geometry::LineString(vec![Coord::new(-1000.0, 100.0), Coord::new(1000.0, 100.0)]);
        let Some(Geometry::LineString(l)) = clip_to_tile(&g, 4096.0, 256.0) else { panic!() };
        assert_eq!(l, vec![Coord::new(-256.0, 100.0), Coord::new(1000.0, 100.0)]);
    }

    #[test]
    fn line_leaving_and_reentering_splits() {
        let g = Geometry::LineString(vec![
            Coord::new(0.0, 0.0),
            Coord::new(0.0, -1000.0),
            Coord::new(100.0, -1000.0),
            Coord::new(100.0, 0.0),
        ]);
        let Some(Geometry::MultiLineString(parts)) = clip_to_tile(&g, 4096.0, 256.0) else { panic!() };
        assert_eq!(parts.len(), 2);
    }

    #[test]
    fn big_polygon_becomes_buffer_square() {
        let s = 10_000.0;
        let g = Geometry::Polygon(vec![vec![
            Coord::new(-s, -s),
            Coord::new(s, -s),
            Coord::new(s, s),
            Coord::new(-s, s),
            Coord::new(-s, -s),
        ]]);
        let Some(Geometry::Polygon(rings)) = clip_to_tile(&g, 4096.0, 256.0) else { panic!() };
        let b = Geometry::Polygon(rings).bbox().unwrap();
        assert_eq!((b.min_x, b.max_x), (-256.0, 4352.0));
    }
}
