//! Geometry command streams.

use super::wire::{unzigzag32, zigzag32};
use super::CodecError;
use crate::model::{signed_area, Coord, Geometry, Ring};

const MOVE_TO: u32 = 1;
const LINE_TO: u32 = 2;
const CLOSE_PATH: u32 = 7;

pub const TYPE_POINT: u64 = 1;
pub const TYPE_LINESTRING: u64 = 2;
pub const TYPE_POLYGON: u64 = 3;

fn command(id: u32, count: usize) -> u32 {
    id | ((count as u32) << 3)
}

struct Cursor {
    x: i32,
    y: i32,
    out: Vec<u32>,
}

impl Cursor {
    fn push(&mut self, c: Coord) {
        let (x, y) = (c.x as i32, c.y as i32);
        self.out.push(zigzag32(x - self.x));
        self.out.push(zigzag32(y - self.y));
        self.x = x;
        self.y = y;
    }

    fn path(&mut self, pts: &[Coord]) {
        self.out.push(command(MOVE_TO, 1));
        self.push(pts[0]);
        if pts.len() > 1 {
            self.out.push(command(LINE_TO, pts.len() - 1));
            for &c in &pts[1..] {
                self.push(c);
            }
        }
    }
}

/// Encodes a canonical geometry. Returns the MVT geometry type and command
/// integers.
pub fn encode(g: &Geometry) -> (u64, Vec<u32>) {
    let mut cur = Cursor { x: 0, y: 0, out: Vec::new() };
    let ty = match g {
        Geometry::Point(_) | Geometry::MultiPoint(_) => {
            let pts = g.points();
            cur.out.push(command(MOVE_TO, pts.len()));
            for c in pts {
                cur.push(c);
            }
            TYPE_POINT
        }
        Geometry::LineString(_) | Geometry::MultiLineString(_) => {
            for l in g.lines() {
                cur.path(l);
            }
            TYPE_LINESTRING
        }
        Geometry::Polygon(_) | Geometry::MultiPolygon(_) => {
            for ring in g.polygons().into_iter().flatten() {
                cur.path(&ring[..ring.len() - 1]);
                cur.out.push(command(CLOSE_PATH, 1));
            }
            TYPE_POLYGON
        }
    };
    (ty, cur.out)
}

/// Decodes a command stream into a geometry of the given MVT type.
pub fn decode(ty: u64, cmds: &[u32]) -> Result<Geometry, CodecError> {
    let (mut x, mut y) = (0i32, 0i32);
    let mut paths: Vec<Vec<Coord>> = Vec::new();
    let mut closed: Vec<bool> = Vec::new();
    let mut i = 0;
    while i < cmds.len() {
        let id = cmds[i] & 7;
        let count = (cmds[i] >> 3) as usize;
        i += 1;
        match id {
            MOVE_TO | LINE_TO => {
                if i + 2 * count > cmds.len() {
                    return Err(CodecError::Truncated);
                }
                for k in 0..count {
                    x = x.wrapping_add(unzigzag32(cmds[i + 2 * k]));
                    y = y.wrapping_add(unzigzag32(cmds[i + 2 * k + 1]));
                    let c = Coord::new(x as f64, y as f64);
                    if id == MOVE_TO && (ty != TYPE_POINT || paths.is_empty()) {
                        paths.push(Vec::new());
                        closed.push(false);
                    }
                    paths.last_mut().ok_or(CodecError::Malformed("LineTo before MoveTo"))?.push(c);
                }
                i += 2 * count;
            }
            CLOSE_PATH => {
                let last = paths.last_mut().ok_or(CodecError::Malformed("ClosePath before MoveTo"))?;
                let first = last[0];
                last.push(first);
                *closed.last_mut().unwrap() = true;
            }
            _ => return Err(CodecError::Malformed("unknown geometry command")),
        }
    }
    if paths.is_empty() {
        return Err(CodecError::Malformed("empty geometry"));
    }
    match ty {
        TYPE_POINT => {
            let mut pts = paths.remove(0);
            Ok(if pts.len() == 1 { Geometry::Point(pts.remove(0)) } else { Geometry::MultiPoint(pts) })
        }
        TYPE_LINESTRING => Ok(if paths.len() == 1 {
            Geometry::LineString(paths.remove(0))
        } else {
            Geometry::MultiLineString(paths)
        }),
        TYPE_POLYGON => {
            if closed.iter().any(|c| !c) {
                return Err(CodecError::Malformed("polygon ring without ClosePath"));
            }
            let mut polys: Vec<Vec<Ring>> = Vec::new();
            for ring in paths {
                let a = signed_area(&ring);
                if a > 0.0 || polys.is_empty() {
                    polys.push(vec![ring]);
                } else if a < 0.0 {
                    polys.last_mut().unwrap().push(ring);
                }
            }
            Ok(if polys.len() == 1 {
                Geometry::Polygon(polys.remove(0))
            } else {
                Geometry::MultiPolygon(polys)
            })
        }
        _ => Err(CodecError::Malformed("unknown geometry type")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_commands() {
        // MoveTo(1) at (25, 17).
        let (ty, cmds) = encode(&Geometry::Point(Coord::new(25.0, 17.0)));
        assert_eq!(ty, TYPE_POINT);
        assert_eq!(cmds, [9, 50, 34]);
    }

    #[test]
    fn linestring_commands() {
        let g = Geometry::LineString(vec![
            Coord::new(2.0, 2.0),
            Coord::new(2.0, 10.0),
            Coord::new(10.0, 10.0),
        ]);
        let (_, cmds) = encode(&g);
        assert_eq!(cmds, [9, 4, 4, 18, 0, 16, 16, 0]);
        assert_eq!(decode(TYPE_LINESTRING, &cmds).unwrap(), g);
    }

    #[test]
    fn polygon_commands() {
        let g = Geometry::Polygon(vec![vec![
            Coord::new(3.0, 6.0),
            Coord::new(8.0, 12.0),
            Coord::new(20.0, 34.0),
            Coord::new(3.0, 6.0),
        ]]);
        let (_, cmds) = encode(&g);
        assert_eq!(cmds, [9, 6, 12, 18, 10, 12, 24, 44, 15]);
        assert_eq!(decode(TYPE_POLYGON, &cmds).unwrap(), g);
    }
}
