use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn rounded(self) -> Self {
        Self::new(self.x.round(), self.y.round())
    }
}

impl From<(f64, f64)> for Coord {
    fn from((x, y): (f64, f64)) -> Self {
        Self::new(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeometryKind {
    Point,
    MultiPoint,
    LineString,
    MultiLineString,
    Polygon,
    MultiPolygon,
}

/// A closed ring: first vertex equals last vertex.
pub type Ring = Vec<Coord>;

/// Feature geometry in tile-local units (or unit-square world units before
/// tiling). Polygons are a list of rings, exterior first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Point(Coord),
    MultiPoint(Vec<Coord>),
    LineString(Vec<Coord>),
    MultiLineString(Vec<Vec<Coord>>),
    Polygon(Vec<Ring>),
    MultiPolygon(Vec<Vec<Ring>>),
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }
}

/// Signed ring area with the surveyor's formula. Positive means clockwise on
/// screen (y pointing down), which is the exterior-ring winding of MVT.
pub fn signed_area(ring: &[Coord]) -> f64 {
    let mut acc = 0.0;
    for w in ring.windows(2) {
        acc += w[0].x * w[1].y - w[1].x * w[0].y;
    }
    if let (Some(first), Some(last)) = (ring.first(), ring.last()) {
        if first != last {
            acc += last.x * first.y - first.x * last.y;
        }
    }
    acc / 2.0
}

impl Geometry {
    pub fn kind(&self) -> GeometryKind {
        match self {
            Geometry::Point(_) => GeometryKind::Point,
            Geometry::MultiPoint(_) => GeometryKind::MultiPoint,
            Geometry::LineString(_) => GeometryKind::LineString,
            Geometry::MultiLineString(_) => GeometryKind::MultiLineString,
            Geometry::Polygon(_) => GeometryKind::Polygon,
            Geometry::MultiPolygon(_) => GeometryKind::MultiPolygon,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Geometry::Point(_) => false,
            Geometry::MultiPoint(p) => p.is_empty(),
            Geometry::LineString(l) => l.is_empty(),
            Geometry::MultiLineString(ls) => ls.iter().all(|l| l.is_empty()),
            Geometry::Polygon(rings) => rings.is_empty(),
            Geometry::MultiPolygon(polys) => polys.iter().all(|p| p.is_empty()),
        }
    }

    pub fn vertex_count(&self) -> usize {
        match self {
            Geometry::Point(_) => 1,
            Geometry::MultiPoint(p) | Geometry::LineString(p) => p.len(),
            Geometry::MultiLineString(ls) | Geometry::Polygon(ls) => ls.iter().map(Vec::len).sum(),
            Geometry::MultiPolygon(polys) => polys.iter().flatten().map(Vec::len).sum(),
        }
    }

    /// Every vertex, in storage order.
    pub fn coords(&self) -> Box<dyn Iterator<Item = Coord> + '_> {
        match self {
            Geometry::Point(c) => Box::new(std::iter::once(*c)),
            Geometry::MultiPoint(p) | Geometry::LineString(p) => Box::new(p.iter().copied()),
            Geometry::MultiLineString(ls) | Geometry::Polygon(ls) => {
                Box::new(ls.iter().flatten().copied())
            }
            Geometry::MultiPolygon(polys) => Box::new(polys.iter().flatten().flatten().copied()),
        }
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut it = self.coords();
        let first = it.next()?;
        let mut b = BBox::new(first.x, first.y, first.x, first.y);
        for c in it {
            b.min_x = b.min_x.min(c.x);
            b.min_y = b.min_y.min(c.y);
            b.max_x = b.max_x.max(c.x);
            b.max_y = b.max_y.max(c.y);
        }
        Some(b)
    }

    pub fn map_coords(&self, f: impl Fn(Coord) -> Coord) -> Geometry {
        let line = |l: &Vec<Coord>| l.iter().map(|c| f(*c)).collect::<Vec<_>>();
        match self {
            Geometry::Point(c) => Geometry::Point(f(*c)),
            Geometry::MultiPoint(p) => Geometry::MultiPoint(line(p)),
            Geometry::LineString(l) => Geometry::LineString(line(l)),
            Geometry::MultiLineString(ls) => Geometry::MultiLineString(ls.iter().map(line).collect()),
            Geometry::Polygon(rings) => Geometry::Polygon(rings.iter().map(line).collect()),
            Geometry::MultiPolygon(polys) => Geometry::MultiPolygon(
                polys.iter().map(|p| p.iter().map(line).collect()).collect(),
            ),
        }
    }

    /// Line parts as slices (points yield nothing).
    pub fn lines(&self) -> Vec<&[Coord]> {
        match self {
            Geometry::LineString(l) => vec![l.as_slice()],
            Geometry::MultiLineString(ls) => ls.iter().map(Vec::as_slice).collect(),
            _ => Vec::new(),
        }
    }

    /// Polygons as ring lists (non-polygon kinds yield nothing).
    pub fn polygons(&self) -> Vec<&[Ring]> {
        match self {
            Geometry::Polygon(rings) => vec![rings.as_slice()],
            Geometry::MultiPolygon(polys) => polys.iter().map(Vec::as_slice).collect(),
            _ => Vec::new(),
        }
    }

    pub fn points(&self) -> Vec<Coord> {
        match self {
            Geometry::Point(c) => vec![*c],
            Geometry::MultiPoint(p) => p.clone(),
            _ => Vec::new(),
        }
    }

    /// Canonical wire form: coordinates rounded to integers, repeated
    /// consecutive vertices merged, exterior rings
    /// wound with positive area and holes negative, zero-area and short rings
    /// removed (with their polygon, if it was the exterior), and single-part
    /// multi-geometries collapsed. Idempotent. Returns `None` if nothing
    /// encodable remains.
    pub fn canonical(&self) -> Option<Geometry> {
        match self {
            Geometry::Point(c) => Some(Geometry::Point(c.rounded())),
            Geometry::MultiPoint(p) => {
                let pts: Vec<Coord> = p.iter().map(|c| c.rounded()).collect();
                match pts.len() {
                    0 => None,
                    1 => Some(Geometry::Point(pts[0])),
                    _ => Some(Geometry::MultiPoint(pts)),
                }
            }
            Geometry::LineString(l) => canonical_line(l).map(Geometry::LineString),
            Geometry::MultiLineString(ls) => {
                let mut parts: Vec<Vec<Coord>> = ls.iter().filter_map(|l| canonical_line(l)).collect();
                match parts.len() {
                    0 => None,
                    1 => Some(Geometry::LineString(parts.remove(0))),
                    _ => Some(Geometry::MultiLineString(parts)),
                }
            }
            Geometry::Polygon(rings) => canonical_polygon(rings).map(Geometry::Polygon),
            Geometry::MultiPolygon(polys) => {
                let mut parts: Vec<Vec<Ring>> =
                    polys.iter().filter_map(|p| canonical_polygon(p)).collect();
                match parts.len() {
                    0 => None,
                    1 => Some(Geometry::Polygon(parts.remove(0))),
                    _ => Some(Geometry::MultiPolygon(parts)),
                }
            }
        }
    }
}

fn rounded_dedup(l: &[Coord]) -> Vec<Coord> {
    let mut out: Vec<Coord> = l.iter().map(|c| c.rounded()).collect();
    out.dedup();
    out
}

fn canonical_line(l: &[Coord]) -> Option<Vec<Coord>> {
    let out = rounded_dedup(l);
    (out.len() >= 2).then_some(out)
}

fn canonical_ring(ring: &[Coord], exterior: bool) -> Option<Ring> {
    let mut r = rounded_dedup(ring);
    while r.len() > 1 && r.first() == r.last() {
        r.pop();
    }
    if r.len() < 3 {
        return None;
    }
    r.push(r[0]);
    let area = signed_area(&r);
    if area == 0.0 {
        return None;
    }
    if (area > 0.0) != exterior {
        r.reverse();
    }
    Some(r)
}

fn canonical_polygon(rings: &[Ring]) -> Option<Vec<Ring>> {
    let (exterior, holes) = rings.split_first()?;
    let mut out = vec![canonical_ring(exterior, true)?];
    out.extend(holes.iter().filter_map(|h| canonical_ring(h, false)));
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, s: f64) -> Ring {
        vec![
            Coord::new(x0, y0),
            Coord::new(x0 + s, y0),
            Coord::new(x0 + s, y0 + s),
            Coord::new(x0, y0 + s),
            Coord::new(x0, y0),
        ]
    }

    #[test]
    fn clockwise_on_screen_is_positive() {
        // (0,0) -> (s,0) -> (s,s): rightwards then down the screen.
        assert!(signed_area(&square(0.0, 0.0, 10.0)) > 0.0);
    }

    #[test]
    fn canonical_fixes_winding_and_is_idempotent() {
        let mut ext = square(0.2, 0.2, 100.0);
        ext.reverse();
        let hole = square(10.0, 10.0, 5.0);
        let g = Geometry::MultiPolygon(vec![vec![ext, hole]]);
        let c = g.canonical().unwrap();
        let Geometry::Polygon(rings) = &c else { panic!("collapsed to polygon expected") };
        assert!(signed_area(&rings[0]) > 0.0);
        assert!(signed_area(&rings[1]) < 0.0);
        assert_eq!(c.canonical().unwrap(), c);
    }

    #[test]
    fn degenerate_ring_is_dropped() {
        let flat = vec![
            Coord::new(0.0, 0.0),
            Coord::new(5.0, 0.0),
            Coord::new(10.0, 0.0),
            Coord::new(0.0, 0.0),
        ];
        assert!(Geometry::Polygon(vec![flat]).canonical().is_none());
    }
}
