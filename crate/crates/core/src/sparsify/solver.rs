//! Exact branch and bound for budgeted record/cell selection.
//!
//! The problem is a knapsack with one-level precedence: a cell can only be
//! kept together with its record. Bounds come from the exact LP relaxation,
//! which for this structure is a fractional knapsack over "bundle" pieces:
//! each free record contributes one piece made of the record and its
//! best-ratio prefix of cells, followed by its remaining cells as single
//! pieces.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordItem {
    pub cost: f64,
    pub value: f64,
    /// `(cost, value)` per cell.
    pub cells: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub records: Vec<RecordItem>,
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    GapReached,
    Timeout,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub gap: f64,
    /// Explored-node cap. `None` scales the cap with problem size so the
    /// total bounding work stays roughly constant.
    pub node_limit: Option<usize>,
    /// Wall-clock cap; makes results timing dependent when hit.
    pub time_limit: Option<Duration>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gap: 0.01, node_limit: None, time_limit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub keep_record: Vec<bool>,
    pub keep_cell: Vec<Vec<bool>>,
    pub objective: f64,
    pub cost: f64,
    pub bound: f64,
    pub status: SolverStatus,
    pub nodes: usize,
}

impl Problem {
    pub fn var_count(&self) -> usize {
        self.records.iter().map(|r| 1 + r.cells.len()).sum()
    }

    pub fn evaluate(&self, keep_record: &[bool], keep_cell: &[Vec<bool>]) -> (f64, f64) {
        let (mut obj, mut cost) = (0.0, 0.0);
        for (i, r) in self.records.iter().enumerate() {
            if keep_record[i] {
                obj += r.value;
                cost += r.cost;
            }
            for (k, &(c, v)) in r.cells.iter().enumerate() {
                if keep_cell[i][k] {
                    obj += v;
                    cost += c;
                }
            }
        }
        (obj, cost)
    }
}

const FREE: i8 = -1;

#[derive(Clone, Copy, Debug)]
enum Var {
    Rec(usize),
    Cell(usize, usize),
}

struct Fixing {
    rec: Vec<i8>,
    cell: Vec<Vec<i8>>,
}

impl Fixing {
    fn free(p: &Problem) -> Self {
        Self {
            rec: vec![FREE; p.records.len()],
            cell: p.records.iter().map(|r| vec![FREE; r.cells.len()]).collect(),
        }
    }

    fn apply(&mut self, v: Var, on: bool) {
        match (v, on) {
            (Var::Rec(i), true) => self.rec[i] = 1,
            (Var::Rec(i), false) => {
                self.rec[i] = 0;
                self.cell[i].iter_mut().for_each(|c| *c = 0);
            }
            (Var::Cell(i, k), true) => {
                self.rec[i] = 1;
                self.cell[i][k] = 1;
            }
            (Var::Cell(i, k), false) => self.cell[i][k] = 0,
        }
    }
}

/// A piece of the LP relaxation.
struct Piece {
    cost: f64,
    value: f64,
    rec: usize,
    /// `None` for a bundle (record plus `cells`), `Some(k)` for a lone cell.
    lone: Option<usize>,
    cells: Vec<usize>,
}

impl Piece {
    fn ratio(&self) -> f64 {
        if self.cost <= 0.0 {
            f64::INFINITY
        } else {
            self.value / self.cost
        }
    }
}

struct Relaxation {
    bound: f64,
    /// Pieces in greedy order and the index of the critical (fractional)
    /// piece, if any.
    pieces: Vec<Piece>,
    critical: Option<usize>,
    base_value: f64,
    base_cost: f64,
}

fn ratio_order(a: f64, b: f64) -> std::cmp::Ordering {
    b.partial_cmp(&a).unwrap_or(std::cmp::Ordering::Equal)
}

fn relax(p: &Problem, fx: &Fixing) -> Option<Relaxation> {
    let (mut base_value, mut base_cost) = (0.0, 0.0);
    let mut pieces = Vec::new();
    for (i, r) in p.records.iter().enumerate() {
        match fx.rec[i] {
            0 => continue,
            1 => {
                base_value += r.value;
                base_cost += r.cost;
            }
            _ => {}
        }
        let mut free: Vec<usize> = Vec::new();
        for (k, &(c, v)) in r.cells.iter().enumerate() {
            match fx.cell[i][k] {
                1 => {
                    base_value += v;
                    base_cost += c;
                }
                FREE => free.push(k),
                _ => {}
            }
        }
        let cr = |k: usize| {
            let (c, v) = r.cells[k];
            if c <= 0.0 {
                f64::INFINITY
            } else {
                v / c
            }
        };
        free.sort_by(|&a, &b| ratio_order(cr(a), cr(b)).then(a.cmp(&b)));
        let mut rest = &free[..];
        if fx.rec[i] == FREE {
            let (mut c, mut v) = (r.cost, r.value);
            let mut take = 0;
            for (n, &k) in free.iter().enumerate() {
                let (kc, kv) = r.cells[k];
                let cur = if c <= 0.0 { f64::INFINITY } else { v / c };
                if cr(k) > cur || (v <= 0.0 && kv > 0.0) {
                    c += kc;
                    v += kv;
                    take = n + 1;
                } else {
                    break;
                }
            }
            if v > 0.0 {
                pieces.push(Piece { cost: c, value: v, rec: i, lone: None, cells: free[..take].to_vec() });
            }
            rest = &free[take..];
        }
        for &k in rest {
            let (c, v) = r.cells[k];
            if v > 0.0 {
                pieces.push(Piece { cost: c, value: v, rec: i, lone: Some(k), cells: Vec::new() });
            }
        }
    }
    if base_cost > p.capacity + 1e-9 {
        return None;
    }
    pieces.sort_by(|a, b| ratio_order(a.ratio(), b.ratio()));
    let mut room = p.capacity - base_cost;
    let mut bound = base_value;
    let mut critical = None;
    for (n, pc) in pieces.iter().enumerate() {
        if pc.cost <= room {
            room -= pc.cost;
            bound += pc.value;
        } else {
            if pc.cost > 0.0 {
                bound += pc.value * (room / pc.cost);
            }
            critical = Some(n);
            break;
        }
    }
    Some(Relaxation { bound, pieces, critical, base_value, base_cost })
}

struct Rounding<'a> {
    p: &'a Problem,
    fx: &'a Fixing,
    rec: Vec<bool>,
    cell: Vec<Vec<bool>>,
    room: f64,
    value: f64,
}

impl Rounding<'_> {
    /// Switches on record `i` if needed and then `cells` while they fit;
    /// nothing changes unless the net gain is positive.
    fn take(&mut self, i: usize, cells: impl Iterator<Item = usize>) {
        let r = &self.p.records[i];
        let (mut used, mut gain) = (0.0, 0.0);
        if !self.rec[i] {
            if r.cost > self.room {
                return;
            }
            used += r.cost;
            gain += r.value;
        }
        let mut added = Vec::new();
        for k in cells {
            let (c, v) = r.cells[k];
            if self.fx.cell[i][k] == FREE && !self.cell[i][k] && v > 0.0 && used + c <= self.room {
                used += c;
                gain += v;
                added.push(k);
            }
        }
        if gain > 0.0 {
            self.rec[i] = true;
            for k in added {
                self.cell[i][k] = true;
            }
            self.room -= used;
            self.value += gain;
        }
    }
}

/// Greedy rounding of a relaxation followed by a completion pass. Only
/// variables that add positive objective value are switched on, so among
/// equally good selections the smallest is returned.
fn round(p: &Problem, fx: &Fixing, rel: &Relaxation) -> (Vec<bool>, Vec<Vec<bool>>, f64, f64) {
    let mut st = Rounding {
        p,
        fx,
        rec: fx.rec.iter().map(|&v| v == 1).collect(),
        cell: fx.cell.iter().map(|r| r.iter().map(|&v| v == 1).collect()).collect(),
        room: p.capacity - rel.base_cost,
        value: rel.base_value,
    };
    for pc in &rel.pieces {
        match pc.lone {
            None => st.take(pc.rec, pc.cells.iter().copied()),
            Some(k) => {
                if st.rec[pc.rec] {
                    st.take(pc.rec, std::iter::once(k));
                }
            }
        }
    }
    for i in 0..p.records.len() {
        if fx.rec[i] != 0 {
            st.take(i, 0..p.records[i].cells.len());
        }
    }
    (st.rec, st.cell, st.value, p.capacity - st.room)
}

/// Fractional variable to branch on: the one with the largest objective
/// coefficient in the critical piece, lowest index on ties.
fn branch_var(p: &Problem, rel: &Relaxation) -> Option<Var> {
    let pc = &rel.pieces[rel.critical?];
    match pc.lone {
        Some(k) => Some(Var::Cell(pc.rec, k)),
        None => {
            let mut best = (Var::Rec(pc.rec), p.records[pc.rec].value);
            for &k in &pc.cells {
                let v = p.records[pc.rec].cells[k].1;
                if v > best.1 || (v == best.1 && matches!(best.0, Var::Cell(_, b) if k < b)) {
                    best = (Var::Cell(pc.rec, k), v);
                }
            }
            Some(best.0)
        }
    }
}

fn default_node_limit(p: &Problem) -> usize {
    (20_000_000 / p.var_count().max(1)).clamp(64, 200_000)
}

pub fn solve(p: &Problem, opts: &SolverOptions) -> Solution {
    let start = Instant::now();
    let empty_rec = vec![false; p.records.len()];
    let empty_cell: Vec<Vec<bool>> = p.records.iter().map(|r| vec![false; r.cells.len()]).collect();
    if p.capacity < 0.0 {
        return Solution {
            keep_record: empty_rec,
            keep_cell: empty_cell,
            objective: 0.0,
            cost: 0.0,
            bound: 0.0,
            status: SolverStatus::Infeasible,
            nodes: 0,
        };
    }
    let node_limit = opts.node_limit.unwrap_or_else(|| default_node_limit(p));
    let mut best = (empty_rec, empty_cell, 0.0f64, 0.0f64);
    let mut stack: Vec<Vec<(Var, bool)>> = vec![Vec::new()];
    let mut nodes = 0usize;
    let mut root_bound = f64::INFINITY;
    // Largest bound among nodes pruned by the gap rule or left unexplored.
    let mut open_bound = f64::NEG_INFINITY;
    let mut limited = false;
    let prune = |bound: f64, inc: f64| bound <= inc + opts.gap * inc.abs() + 1e-12;

    while let Some(path) = stack.pop() {
        if nodes >= node_limit || opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            limited = true;
            stack.push(path);
            break;
        }
        nodes += 1;
        let mut fx = Fixing::free(p);
        for &(v, on) in &path {
            fx.apply(v, on);
        }
        let Some(rel) = relax(p, &fx) else { continue };
        if path.is_empty() {
            root_bound = rel.bound;
            best = round(p, &fx, &rel);
        }
        if prune(rel.bound, best.2) {
            if rel.bound > best.2 + 1e-12 {
                open_bound = open_bound.max(rel.bound);
            }
            continue;
        }
        let cand = round(p, &fx, &rel);
        if cand.2 > best.2 {
            best = cand;
        }
        if prune(rel.bound, best.2) {
            if rel.bound > best.2 + 1e-12 {
                open_bound = open_bound.max(rel.bound);
            }
            continue;
        }
        let Some(var) = branch_var(p, &rel) else { continue };
        let mut zero = path.clone();
        zero.push((var, false));
        let mut one = path;
        one.push((var, true));
        stack.push(zero);
        stack.push(one);
    }

    let status = if limited {
        SolverStatus::Timeout
    } else if open_bound > best.2 + 1e-12 {
        SolverStatus::GapReached
    } else {
        SolverStatus::Optimal
    };
    let bound = if limited { root_bound } else { open_bound.max(best.2) };
    Solution {
        keep_record: best.0,
        keep_cell: best.1,
        objective: best.2,
        cost: best.3,
        bound,
        status,
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(p: &Problem) -> f64 {
        let vars: Vec<Var> = p
            .records
            .iter()
            .enumerate()
            .flat_map(|(i, r)| std::iter::once(Var::Rec(i)).chain((0..r.cells.len()).map(move |k| Var::Cell(i, k))))
            .collect();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << vars.len()) {
            let mut rec = vec![false; p.records.len()];
            let mut cell: Vec<Vec<bool>> = p.records.iter().map(|r| vec![false; r.cells.len()]).collect();
            for (b, v) in vars.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    match *v {
                        Var::Rec(i) => rec[i] = true,
                        Var::Cell(i, k) => cell[i][k] = true,
                    }
                }
            }
            if cell.iter().enumerate().any(|(i, c)| !rec[i] && c.iter().any(|&x| x)) {
                continue;
            }
            let (o, c) = p.evaluate(&rec, &cell);
            if c <= p.capacity {
                best = best.max(o);
            }
        }
        best
    }

    fn toy() -> Problem {
        Problem {
            records: vec![
                RecordItem { cost: 5.0, value: 1.0, cells: vec![(3.0, 0.9), (2.0, 0.2)] },
                RecordItem { cost: 4.0, value: 0.6, cells: vec![(3.0, 0.1), (2.0, 0.7)] },
                RecordItem { cost: 2.0, value: 0.1, cells: vec![(3.0, 0.5)] },
            ],
            capacity: 14.0,
        }
    }

    #[test]
    fn matches_enumeration_on_small_problem() {
        let p = toy();
        let s = solve(&p, &SolverOptions { gap: 0.0, ..Default::default() });
        assert_eq!(s.status, SolverStatus::Optimal);
        assert!((s.objective - brute(&p)).abs() < 1e-12);
        let (o, c) = p.evaluate(&s.keep_record, &s.keep_cell);
        assert!((o - s.objective).abs() < 1e-12 && c <= p.capacity);
    }

    #[test]
    fn unconstrained_keeps_everything() {
        let mut p = toy();
        p.capacity = 1e9;
        let s = solve(&p, &SolverOptions::default());
        assert!(s.keep_record.iter().all(|&b| b));
        assert!(s.keep_cell.iter().flatten().all(|&b| b));
    }

    #[test]
    fn negative_capacity_is_infeasible() {
        let mut p = toy();
        p.capacity = -1.0;
        assert_eq!(solve(&p, &SolverOptions::default()).status, SolverStatus::Infeasible);
    }

    #[test]
    fn zero_capacity_keeps_nothing() {
        let mut p = toy();
        p.capacity = 0.0;
        let s = solve(&p, &SolverOptions { gap: 0.0, ..Default::default() });
        assert_eq!(s.objective, 0.0);
        assert!(s.keep_record.iter().all(|&b| !b));
    }
}
