//! Small hand-built tiles used in tests, docs and the CLI demo.

use crate::model::{AttributeType, Coord, Feature, Geometry, Schema, Tile, TileCoord, Value};
use crate::raster::PixelGrid;

/// The 8 x 8 grid the lake tiles are designed for.
pub fn lake_grid() -> PixelGrid {
    PixelGrid::new(8, 4096)
}

fn rect(col0: u32, row0: u32, cols: u32, rows: u32) -> Geometry {
    // Inset by 1/8 pixel so the outline stays inside the intended pixels.
    let px = 512.0;
    let inset = 64.0;
    let (x0, y0) = (col0 as f64 * px + inset, row0 as f64 * px + inset);
    let (x1, y1) = ((col0 + cols) as f64 * px - inset, (row0 + rows) as f64 * px - inset);
    Geometry::Polygon(vec![vec![
        Coord::new(x0, y0),
        Coord::new(x1, y0),
        Coord::new(x1, y1),
        Coord::new(x0, y1),
        Coord::new(x0, y0),
    ]])
}

/// Lake polygons G1..G4 covering 18, 14, 8 and 4 pixels of the 8 x 8 grid,
/// disjoint, 20 pixels left uncovered.
pub fn lake_geometries() -> [Geometry; 4] {
    [rect(0, 0, 6, 3), rect(0, 3, 7, 2), rect(0, 5, 4, 2), rect(5, 5, 2, 2)]
}

fn lake_schema() -> Schema {
    Schema::new([
        ("name".to_string(), AttributeType::Str),
        ("salinity".to_string(), AttributeType::Str),
    ])
}

fn lakes(salinity: [&str; 4]) -> Tile {
    let names = ["Azul", "Birch", "Cobalt", "Dune"];
    let features = lake_geometries()
        .into_iter()
        .zip(names.iter().zip(salinity))
        .map(|(g, (n, s))| Feature::new(g, vec![Value::from(*n), Value::from(s)]))
        .collect();
    Tile::new(lake_schema(), features, TileCoord::default())
}

/// The four-lake input tile with salinity `[f, s, s, f]`.
pub fn lakes_input() -> Tile {
    lakes(["f", "s", "s", "f"])
}

/// Four-lake input whose salinity `[f, f, s, s]` yields the pixel counts
/// fresh = 32 and salt = 12 on [`lake_grid`].
pub fn lakes_weighted_input() -> Tile {
    lakes(["f", "f", "s", "s"])
}

/// Output tile: names of lakes 3 and 4 and the salinity of lake 4 nulled.
pub fn lakes_output_of(input: &Tile) -> Tile {
    let mut t = input.clone();
    for (i, j) in [(2, 1), (3, 1), (3, 2)] {
        t.nullify_in_place(i, j).expect("indices are valid");
    }
    t
}
