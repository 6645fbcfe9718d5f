//! Solver-correctness oracle built from the knapsack reduction: every 0-1
//! knapsack instance maps to a tile whose sparsification optimum equals the
//! knapsack optimum.
//!
//! Item `i` becomes a feature drawn as a 1-pixel-wide horizontal line
//! covering exactly `v_i` pixels, with a unique integer attribute. Features
//! are laid out row-major without overlap and a filler feature with a null
//! attribute covers any leftover pixels, so no pixel is empty. Records cost
//! nothing, a kept cell costs `s_i`, and the value of keeping a cell is the
//! unsmoothed pixel mass its removal would move to null.

use std::collections::BTreeSet;

use super::solver::{self, Problem, RecordItem, SolverOptions};
use crate::metrics;
use crate::model::{AttributeType, Coord, Feature, Geometry, Schema, Tile, TileCoord, Value};
use crate::raster::{Coverage, PixelGrid};

/// Pixel size in tile units of the constructed grid.
const PX: f64 = 16.0;

/// Optimal 0-1 knapsack value by dynamic programming over capacity.
pub fn knapsack_dp(items: &[(u64, u64)], capacity: u64) -> u64 {
    let cap = capacity as usize;
    let mut best = vec![0u64; cap + 1];
    for &(s, v) in items {
        let s = s as usize;
        if s > cap {
            continue;
        }
        for c in (s..=cap).rev() {
            best[c] = best[c].max(best[c - s] + v);
        }
    }
    best[cap]
}

fn run(start: usize, len: usize, side: usize) -> Geometry {
    let mut parts = Vec::new();
    let mut pos = start;
    let end = start + len;
    while pos < end {
        let row = pos / side;
        let last = (end - 1).min((row + 1) * side - 1);
        let y = row as f64 * PX + PX / 2.0;
        let x0 = (pos % side) as f64 * PX + PX / 2.0;
        let x1 = (last % side) as f64 * PX + PX / 2.0;
        parts.push(vec![Coord::new(x0, y), Coord::new(x1, y)]);
        pos = last + 1;
    }
    if parts.len() == 1 {
        Geometry::LineString(parts.remove(0))
    } else {
        Geometry::MultiLineString(parts)
    }
}

/// The tile and grid for item values `values`.
pub fn knapsack_tile(values: &[u64]) -> (Tile, PixelGrid) {
    let total: usize = values.iter().map(|&v| v as usize).sum();
    let side = ((total as f64).sqrt().ceil() as usize).max(1);
    let grid = PixelGrid::new(side as u32, (side as f64 * PX) as u32);
    let schema = Schema::new([("item".to_string(), AttributeType::Int)]);
    let mut features = Vec::new();
    let mut pos = 0;
    for (i, &v) in values.iter().enumerate() {
        features.push(Feature::new(run(pos, v as usize, side), vec![Value::Int(i as i64)]));
        pos += v as usize;
    }
    if pos < side * side {
        features.push(Feature::new(run(pos, side * side - pos, side), vec![Value::Null]));
    }
    (Tile::new(schema, features, TileCoord::default()), grid)
}

/// Cell values of the constructed tile: `R * TV(p, p with cell i nulled)`
/// under unsmoothed distributions.
pub fn cell_values(tile: &Tile, grid: &PixelGrid) -> Vec<f64> {
    let cov = Coverage::new(tile, grid);
    let r = grid.resolution();
    let support: BTreeSet<Value> = tile.domain(1);
    let p = metrics::empirical(&cov.counts(tile, 1), &support, r).expect("counts cover the grid");
    (0..tile.n())
        .map(|i| {
            let t = tile.nullify(i, 1).expect("index in range");
            let q = metrics::empirical(&cov.counts(&t, 1), &support, r).expect("counts cover the grid");
            let tv: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
            (tv * r as f64).round()
        })
        .collect()
}

/// Solves `items` (`(size, value)`) through the tile reduction and returns
/// the total knapsack value of the retained cells.
pub fn solve_via_tile(items: &[(u64, u64)], capacity: u64) -> u64 {
    let values: Vec<u64> = items.iter().map(|i| i.1).collect();
    let (tile, grid) = knapsack_tile(&values);
    let util = cell_values(&tile, &grid);
    let records = items
        .iter()
        .enumerate()
        .map(|(i, &(s, _))| RecordItem { cost: 0.0, value: 0.0, cells: vec![(s as f64, util[i])] })
        .collect();
    let p = Problem { records, capacity: capacity as f64 };
    let sol = solver::solve(&p, &SolverOptions { gap: 0.0, node_limit: Some(10_000_000), time_limit: None });
    items
        .iter()
        .enumerate()
        .filter(|(i, _)| sol.keep_cell[*i][0])
        .map(|(_, it)| it.1)
        .sum()
}

/// Whether the sparsifier reaches the knapsack optimum on this instance.
pub fn knapsack_oracle_check(items: &[(u64, u64)], capacity: u64) -> bool {
    solve_via_tile(items, capacity) == knapsack_dp(items, capacity)
}
