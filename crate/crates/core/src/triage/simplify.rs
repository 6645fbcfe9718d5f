//! Geometry simplification.

use serde::{Deserialize, Serialize};

use crate::model::{signed_area, Coord, Geometry, Ring};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimplifyMethod {
    DouglasPeucker,
    TopologyPreserving,
    GridSnap,
}

/// Result of a simplification. `degenerate` is set when some part collapsed
/// and was removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplified {
    pub geometry: Option<Geometry>,
    pub degenerate: bool,
}

/// Distance from `p` to the segment `ab`.
pub fn segment_distance(p: Coord, a: Coord, b: Coord) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()
}

/// Farthest interior vertex of `pts[lo..=hi]` from the chord, with distance.
fn farthest(pts: &[Coord], lo: usize, hi: usize) -> Option<(usize, f64)> {
    (lo + 1..hi)
        .map(|k| (k, segment_distance(pts[k], pts[lo], pts[hi])))
        .fold(None, |best, cur| match best {
            Some((_, d)) if d >= cur.1 => best,
            _ => Some(cur),
        })
}

/// Douglas-Peucker keep mask over `pts[lo..=hi]`.
fn dp_mask(pts: &[Coord], lo: usize, hi: usize, tol: f64, keep: &mut [bool]) {
    keep[lo] = true;
    keep[hi] = true;
    let mut stack = vec![(lo, hi)];
    while let Some((a, b)) = stack.pop() {
        if let Some((k, d)) = farthest(pts, a, b) {
            if d > tol {
                keep[k] = true;
                stack.push((a, k));
                stack.push((k, b));
            }
        }
    }
}

fn collect(pts: &[Coord], keep: &[bool]) -> Vec<Coord> {
    pts.iter().zip(keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect()
}

fn orient(a: Coord, b: Coord, c: Coord) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Coord, b: Coord, p: Coord) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Whether segments `ab` and `cd` share any point.
pub fn segments_intersect(a: Coord, b: Coord, c: Coord, d: Coord) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Kept-vertex chains: for each chain the original points and its mask.
struct Chains<'a> {
    pts: Vec<&'a [Coord]>,
    keep: Vec<Vec<bool>>,
    closed: Vec<bool>,
}

impl Chains<'_> {
    fn segments(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (c, keep) in self.keep.iter().enumerate() {
            let idx: Vec<usize> = (0..keep.len()).filter(|&k| keep[k]).collect();
            for w in idx.windows(2) {
                out.push((c, w[0], w[1]));
            }
        }
        out
    }

    fn adjacent(&self, s: (usize, usize, usize), t: (usize, usize, usize)) -> bool {
        if s.0 != t.0 {
            return false;
        }
        let last = self.pts[s.0].len() - 1;
        let shares = |x: usize, y: usize| x == y || (self.closed[s.0] && ((x == 0 && y == last) || (x == last && y == 0)));
        shares(s.1, t.1) || shares(s.1, t.2) || shares(s.2, t.1) || shares(s.2, t.2)
    }

    /// Re-inserts vertices until no two non-adjacent kept segments touch,
    /// or no vertex can be re-inserted.
    fn repair(&mut self) {
        loop {
            let segs = self.segments();
            let mut fix = None;
            'outer: for (n, &s) in segs.iter().enumerate() {
                for &t in &segs[n + 1..] {
                    if self.adjacent(s, t) {
                        continue;
                    }
                    let p = self.pts[s.0];
                    let q = self.pts[t.0];
                    if segments_intersect(p[s.1], p[s.2], q[t.1], q[t.2]) {
                        let cand = [s, t].into_iter().filter(|x| x.2 > x.1 + 1).max_by_key(|x| x.2 - x.1);
                        if let Some(c) = cand {
                            fix = Some(c);
                            break 'outer;
                        }
                    }
                }
            }
            let Some((c, lo, hi)) = fix else { return };
            let (k, _) = farthest(self.pts[c], lo, hi).expect("segment spans interior vertices");
            self.keep[c][k] = true;
        }
    }
}

fn ring_mask(ring: &[Coord], tol: f64) -> Vec<bool> {
    // Split the closed ring at the vertex farthest from its start so both
    // halves are open chains.
    let last = ring.len() - 1;
    let far = (1..last)
        .max_by(|&a, &b| {
            let da = (ring[a].x - ring[0].x).hypot(ring[a].y - ring[0].y);
            let db = (ring[b].x - ring[0].x).hypot(ring[b].y - ring[0].y);
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(1);
    let mut keep = vec![false; ring.len()];
    dp_mask(ring, 0, far, tol, &mut keep);
    dp_mask(ring, far, last, tol, &mut keep);
    if keep.iter().filter(|&&k| k).count() < 4 {
        // Keep a triangle: the start, the split vertex and the farthest
        // vertex from that chord.
        let (a, _) = farthest(ring, 0, far).unwrap_or((0, 0.0));
        let (b, _) = farthest(ring, far, last).unwrap_or((far, 0.0));
        let da = if a == 0 { -1.0 } else { segment_distance(ring[a], ring[0], ring[far]) };
        let db = if b == far { -1.0 } else { segment_distance(ring[b], ring[far], ring[last]) };
        keep[if da >= db { a } else { b }] = true;
    }
    keep
}

fn snap(c: Coord, tol: f64) -> Coord {
    Coord::new((c.x / tol).round() * tol, (c.y / tol).round() * tol)
}

fn snap_chain(pts: &[Coord], tol: f64) -> Vec<Coord> {
    let mut out: Vec<Coord> = pts.iter().map(|c| snap(*c, tol)).collect();
    out.dedup();
    out
}

fn valid_ring(r: &Ring) -> bool {
    r.len() >= 4 && r.first() == r.last() && signed_area(r) != 0.0
}

/// Simplifies `g` with the given tolerance in tile units.
pub fn simplify_geometry(g: &Geometry, method: SimplifyMethod, tol: f64) -> Simplified {
    if !(tol > 0.0) {
        return Simplified { geometry: Some(g.clone()), degenerate: false };
    }
    match g {
        Geometry::Point(_) => Simplified { geometry: Some(g.clone()), degenerate: false },
        Geometry::MultiPoint(p) => {
            let mut pts: Vec<Coord> = if method == SimplifyMethod::GridSnap {
                p.iter().map(|c| snap(*c, tol)).collect()
            } else {
                p.clone()
            };
            if method == SimplifyMethod::GridSnap {
                let mut seen = std::collections::HashSet::new();
                pts.retain(|c| seen.insert((c.x.to_bits(), c.y.to_bits())));
            }
            let geometry = match pts.len() {
                1 => Geometry::Point(pts[0]),
                _ => Geometry::MultiPoint(pts),
            };
            Simplified { geometry: Some(geometry), degenerate: false }
        }
        Geometry::LineString(_) | Geometry::MultiLineString(_) => {
            let lines = g.lines();
            let mut out: Vec<Vec<Coord>> = Vec::new();
            let mut degenerate = false;
            if method == SimplifyMethod::GridSnap {
                for l in lines {
                    let s = snap_chain(l, tol);
                    if s.len() >= 2 {
                        out.push(s);
                    } else {
                        degenerate = true;
                    }
                }
            } else {
                let owned: Vec<Vec<Coord>> = lines.iter().map(|l| {
                    let mut v = l.to_vec();
                    v.dedup();
                    v
                }).collect();
                let mut chains = Chains {
                    pts: owned.iter().map(Vec::as_slice).collect(),
                    keep: owned.iter().map(|l| vec![false; l.len()]).collect(),
                    closed: owned.iter().map(|l| l.len() > 2 && l.first() == l.last()).collect(),
                };
                for (c, l) in owned.iter().enumerate() {
                    if l.len() >= 2 {
                        dp_mask(l, 0, l.len() - 1, tol, &mut chains.keep[c]);
                    } else if !l.is_empty() {
                        chains.keep[c][0] = true;
                    }
                }
                if method == SimplifyMethod::TopologyPreserving {
                    chains.repair();
                }
                for (c, l) in owned.iter().enumerate() {
                    let s = collect(l, &chains.keep[c]);
                    if s.len() >= 2 {
                        out.push(s);
                    } else {
                        degenerate = true;
                    }
                }
            }
            let geometry = match out.len() {
                0 => None,
                1 => Some(Geometry::LineString(out.remove(0))),
                _ => Some(Geometry::MultiLineString(out)),
            };
            Simplified { geometry, degenerate }
        }
        Geometry::Polygon(_) | Geometry::MultiPolygon(_) => {
            let mut polys: Vec<Vec<Ring>> = Vec::new();
            let mut degenerate = false;
            for poly in g.polygons() {
                let rings: Vec<Ring> = poly
                    .iter()
                    .map(|r| {
                        let mut v = r.clone();
                        v.dedup();
                        if v.len() > 1 && v.first() != v.last() {
                            v.push(v[0]);
                        }
                        v
                    })
                    .collect();
                let simplified: Vec<Ring> = if method == SimplifyMethod::GridSnap {
                    rings.iter().map(|r| snap_chain(r, tol)).collect()
                } else {
                    let mut chains = Chains {
                        pts: rings.iter().map(Vec::as_slice).collect(),
                        keep: rings.iter().map(|r| if r.len() >= 4 { ring_mask(r, tol) } else { vec![true; r.len()] }).collect(),
                        closed: vec![true; rings.len()],
                    };
                    if method == SimplifyMethod::TopologyPreserving {
                        chains.repair();
                    }
                    rings.iter().enumerate().map(|(c, r)| collect(r, &chains.keep[c])).collect()
                };
                let mut it = simplified.into_iter();
                let Some(ext) = it.next() else { continue };
                if !valid_ring(&ext) {
                    degenerate = true;
                    continue;
                }
                let mut out = vec![ext];
                for h in it {
                    if valid_ring(&h) {
                        out.push(h);
                    } else {
                        degenerate = true;
                    }
                }
                polys.push(out);
            }
            let geometry = match polys.len() {
                0 => None,
                1 => Some(Geometry::Polygon(polys.remove(0))),
                _ => Some(Geometry::MultiPolygon(polys)),
            };
            Simplified { geometry, degenerate }
        }
    }
}
