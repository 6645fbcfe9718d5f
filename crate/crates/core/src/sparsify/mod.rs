//! Budgeted cell sparsification: build the selection model for a tile, solve
//! it, and materialize the reduced tile.

pub mod knapsack;
pub mod lp;
pub mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecConfig, CodecError, SizeEstimate};
use crate::metrics::{self, CellDivergence, MetricError};
use crate::model::{Tile, Value};
use crate::raster::{Coverage, PixelGrid};
pub use solver::{Problem, RecordItem, Solution, SolverOptions, SolverStatus};

#[derive(Debug, Error, PartialEq)]
pub enum SparsifyError {
    #[error("budget must be positive")]
    NonPositiveBudget,
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
    #[error("decision does not match the tile's dimensions")]
    DimensionMismatch,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparsifyParams {
    pub budget: usize,
    pub alpha: f64,
    pub lambda_rec: f64,
    pub exponent_p: f64,
    pub gap: f64,
    pub grid: PixelGrid,
    pub epsilon: f64,
    pub node_limit: Option<usize>,
    /// Re-solve rounds when the encoded result overshoots the budget.
    pub max_rounds: usize,
}

impl Default for SparsifyParams {
    fn default() -> Self {
        Self {
            budget: 256 * 1024,
            alpha: 0.5,
            lambda_rec: 1.0,
            exponent_p: 2.0,
            gap: 0.01,
            grid: PixelGrid::default(),
            epsilon: 1.0,
            node_limit: None,
            max_rounds: 5,
        }
    }
}

impl SparsifyParams {
    pub fn validate(&self) -> Result<(), SparsifyError> {
        if self.budget == 0 {
            return Err(SparsifyError::NonPositiveBudget);
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SparsifyError::InvalidParam("alpha must be in [0, 1]"));
        }
        if !(self.lambda_rec > 0.0) {
            return Err(SparsifyError::InvalidParam("lambda_rec must be positive"));
        }
        if !(self.exponent_p >= 1.0) {
            return Err(SparsifyError::InvalidParam("exponent p must be at least 1"));
        }
        if !(self.gap >= 0.0) {
            return Err(SparsifyError::InvalidParam("gap must be non-negative"));
        }
        if !(self.epsilon > 0.0) {
            return Err(SparsifyError::InvalidParam("epsilon must be positive"));
        }
        Ok(())
    }
}

/// `lambda * (pc_i / max pc)^p`; uniform `lambda` when every footprint is 0.
pub fn record_utility(footprints: &[usize], lambda_rec: f64, p: f64) -> Vec<f64> {
    let max = footprints.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![lambda_rec; footprints.len()];
    }
    footprints
        .iter()
        .map(|&pc| lambda_rec * (pc as f64 / max as f64).powf(p))
        .collect()
}

/// A cell decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellVar {
    pub i: usize,
    pub j: usize,
    pub utility: f64,
    pub cost: f64,
}

/// The selection model: utilities, costs and the variables instantiated for
/// a tile. `y` has one variable per record, `u` one per non-empty column and
/// `x` one per non-null cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifyModel {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub record_utility: Vec<f64>,
    pub record_cost: Vec<f64>,
    /// Columns with a `u` variable.
    pub columns: Vec<usize>,
    /// Non-null cells grouped by record, in row-major order.
    pub cells: Vec<CellVar>,
    pub capacity: f64,
}

impl SparsifyModel {
    pub fn var_count(&self) -> usize {
        self.n + self.columns.len() + self.cells.len()
    }

    pub fn problem(&self) -> Problem {
        let mut records: Vec<RecordItem> = (0..self.n)
            .map(|i| RecordItem {
                cost: self.record_cost[i],
                value: self.alpha * self.record_utility[i],
                cells: Vec::new(),
            })
            .collect();
        for c in &self.cells {
            records[c.i].cells.push((c.cost, (1.0 - self.alpha) * c.utility));
        }
        Problem { records, capacity: self.capacity }
    }

    /// Maps a solver solution onto full-size decision arrays.
    pub fn decision(&self, sol: &Solution) -> SparsifyDecision {
        let cols = self.d - 1;
        let mut x = vec![vec![false; cols]; self.n];
        let mut next = vec![0usize; self.n];
        for c in &self.cells {
            x[c.i][c.j - 1] = sol.keep_cell[c.i][next[c.i]];
            next[c.i] += 1;
        }
        let mut u = vec![false; cols];
        for row in &x {
            for (k, &keep) in row.iter().enumerate() {
                u[k] |= keep;
            }
        }
        SparsifyDecision {
            y: sol.keep_record.clone(),
            u,
            x,
            objective: sol.objective,
            achieved_estimate_bytes: sol.cost,
            status: sol.status,
        }
    }

    /// Model-size of a decision (left side of the size constraint).
    pub fn cost_of(&self, dec: &SparsifyDecision) -> f64 {
        let geom: f64 = (0..self.n).filter(|&i| dec.y[i]).map(|i| self.record_cost[i]).sum();
        let cells: f64 = self.cells.iter().filter(|c| dec.x[c.i][c.j - 1]).map(|c| c.cost).sum();
        geom + cells
    }

    pub fn objective_of(&self, dec: &SparsifyDecision) -> f64 {
        let rec: f64 = (0..self.n).filter(|&i| dec.y[i]).map(|i| self.record_utility[i]).sum();
        let cells: f64 = self.cells.iter().filter(|c| dec.x[c.i][c.j - 1]).map(|c| c.utility).sum();
        self.alpha * rec + (1.0 - self.alpha) * cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifyDecision {
    pub y: Vec<bool>,
    /// Per attribute column `j - 1`; false for columns without a variable.
    pub u: Vec<bool>,
    /// `x[i][j - 1]`; false for null cells.
    pub x: Vec<Vec<bool>>,
    pub objective: f64,
    pub achieved_estimate_bytes: f64,
    pub status: SolverStatus,
}

impl SparsifyDecision {
    pub fn keep_all(tile: &Tile) -> Self {
        let x: Vec<Vec<bool>> = tile.features.iter().map(|f| f.values.iter().map(|v| !v.is_null()).collect()).collect();
        let cols = tile.d() - 1;
        let u = (0..cols).map(|k| x.iter().any(|r| r[k])).collect();
        Self {
            y: vec![true; tile.n()],
            u,
            x,
            objective: 0.0,
            achieved_estimate_bytes: 0.0,
            status: SolverStatus::Optimal,
        }
    }

    /// Structural feasibility: every kept cell has its record and column.
    pub fn is_structural(&self) -> bool {
        self.x
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(k, &keep)| !keep || (self.y[i] && self.u[k])))
    }
}

pub fn build_model(
    tile: &Tile,
    params: &SparsifyParams,
    footprints: &[usize],
    divergences: &CellDivergence,
    estimate: &SizeEstimate,
) -> Result<SparsifyModel, SparsifyError> {
    params.validate()?;
    let record_utility = record_utility(footprints, params.lambda_rec, params.exponent_p);
    let cols = tile.d() - 1;
    let mut cells = Vec::new();
    let mut nonempty = vec![false; cols];
    for (i, f) in tile.features.iter().enumerate() {
        for (k, v) in f.values.iter().enumerate() {
            if v.is_null() {
                continue;
            }
            nonempty[k] = true;
            cells.push(CellVar {
                i,
                j: k + 1,
                utility: 1.0 - divergences.norm[i][k],
                cost: estimate.cell_cost(k + 1),
            });
        }
    }
    Ok(SparsifyModel {
        n: tile.n(),
        d: tile.d(),
        alpha: params.alpha,
        record_utility,
        record_cost: estimate.geom_bytes.clone(),
        columns: (1..=cols).filter(|&j| nonempty[j - 1]).collect(),
        cells,
        capacity: params.budget as f64 - estimate.fixed_bytes,
    })
}

pub fn solve(model: &SparsifyModel, opts: &SolverOptions) -> SparsifyDecision {
    model.decision(&solver::solve(&model.problem(), opts))
}

/// A reduced tile. `view` keeps every input row so that it aligns with the
/// input for metric computation; dropped rows hold only nulls.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub view: Tile,
    pub dropped: Vec<bool>,
}

impl Reduction {
    pub fn identity(tile: &Tile) -> Self {
        Self { view: tile.clone(), dropped: vec![false; tile.n()] }
    }

    /// The tile to encode: dropped rows removed.
    pub fn output(&self) -> Tile {
        let features = self
            .view
            .features
            .iter()
            .zip(&self.dropped)
            .filter(|(_, &d)| !d)
            .map(|(f, _)| f.clone())
            .collect();
        Tile::new(self.view.schema.clone(), features, self.view.coord)
    }
}

pub fn apply(tile: &Tile, dec: &SparsifyDecision) -> Result<Reduction, SparsifyError> {
    let cols = tile.d() - 1;
    if dec.y.len() != tile.n() || dec.u.len() != cols || dec.x.len() != tile.n() || dec.x.iter().any(|r| r.len() != cols)
    {
        return Err(SparsifyError::DimensionMismatch);
    }
    let mut view = tile.clone();
    for (i, f) in view.features.iter_mut().enumerate() {
        for (k, v) in f.values.iter_mut().enumerate() {
            if !(dec.y[i] && dec.u[k] && dec.x[i][k]) {
                *v = Value::Null;
            }
        }
    }
    Ok(Reduction { view, dropped: dec.y.iter().map(|y| !y).collect() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsifyOutcome {
    pub reduction: Reduction,
    pub decision: SparsifyDecision,
    pub measured_bytes: usize,
    pub rounds: usize,
    /// Whether the encoded output fits the budget.
    pub within_budget: bool,
}

/// Reduces `tile` to at most `params.budget` encoded bytes.
///
/// After each solve the result is encoded; on overshoot the model budget is
/// scaled by `min(0.9, B / measured)` and the model re-solved.
pub fn sparsify_tile(tile: &Tile, params: &SparsifyParams, codec_cfg: &CodecConfig) -> Result<SparsifyOutcome, SparsifyError> {
    params.validate()?;
    let measured = codec::measure(tile, codec_cfg)?.total_bytes;
    if measured <= params.budget {
        return Ok(SparsifyOutcome {
            reduction: Reduction::identity(tile),
            decision: SparsifyDecision::keep_all(tile),
            measured_bytes: measured,
            rounds: 0,
            within_budget: true,
        });
    }
    let cov = Coverage::new(tile, &params.grid);
    let div = metrics::cell_divergence_with_coverage(tile, &cov, params.epsilon)?;
    let est = codec::estimate(tile, codec_cfg);
    let mut model = build_model(tile, params, &cov.footprints, &div, &est)?;
    let opts = SolverOptions { gap: params.gap, node_limit: params.node_limit, time_limit: None };
    let full = model.capacity;
    let mut scale = 1.0;
    let mut rounds = 0;
    loop {
        rounds += 1;
        model.capacity = full * scale - est.fixed_bytes * (1.0 - scale);
        let decision = solve(&model, &opts);
        let reduction = apply(tile, &decision)?;
        let measured = codec::measure(&reduction.output(), codec_cfg)?.total_bytes;
        let within = measured <= params.budget;
        if within || rounds >= params.max_rounds.max(1) {
            return Ok(SparsifyOutcome { reduction, decision, measured_bytes: measured, rounds, within_budget: within });
        }
        scale *= (params.budget as f64 / measured as f64).min(0.9);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_utility_examples() {
        let u = record_utility(&[18, 14, 8, 4], 1.0, 1.0);
        let want = [1.0, 14.0 / 18.0, 8.0 / 18.0, 4.0 / 18.0];
        for (a, b) in u.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let u2 = record_utility(&[18, 14, 8, 4], 1.0, 2.0);
        for (a, b) in u2.iter().zip(&u) {
            assert!((a - b * b).abs() < 1e-12);
        }
        assert_eq!(record_utility(&[0, 0], 2.0, 2.0), vec![2.0, 2.0]);
    }

    #[test]
    fn params_are_validated() {
        let p = SparsifyParams { alpha: 1.5, ..Default::default() };
        assert!(p.validate().is_err());
        let p = SparsifyParams { budget: 0, ..Default::default() };
        assert_eq!(p.validate(), Err(SparsifyError::NonPositiveBudget));
    }
}
