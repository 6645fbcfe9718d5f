//! LP-file export of a [`SparsifyModel`] and import of an external solution.
//!
//! Variable names: `y<i>` for records, `u<j>` for columns and `x<i>_<j>` for
//! cells, with zero-based record and column indices as used elsewhere in the
//! crate.

use std::collections::HashMap;
use std::fmt::Write;

use super::{SparsifyDecision, SparsifyModel, SolverStatus};

fn push_terms(out: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut line_len = 0;
    for (n, (coef, name)) in terms.enumerate() {
        let sign = if n == 0 { if coef < 0.0 { "-" } else { "" } } else if coef < 0.0 { " - " } else { " + " };
        let term = format!("{sign}{} {name}", coef.abs());
        if line_len + term.len() > 200 {
            out.push_str("\n ");
            line_len = 0;
        }
        line_len += term.len();
        out.push_str(&term);
    }
}

/// Writes the model in CPLEX LP text format.
pub fn to_lp(m: &SparsifyModel) -> String {
    let mut out = String::new();
    out.push_str("\\ cell sparsification model\nMaximize\n obj: ");
    let obj = (0..m.n)
        .map(|i| (m.alpha * m.record_utility[i], format!("y{i}")))
        .chain(m.cells.iter().map(|c| ((1.0 - m.alpha) * c.utility, format!("x{}_{}", c.i, c.j))));
    push_terms(&mut out, obj);
    out.push_str("\nSubject To\n size: ");
    let size = (0..m.n)
        .map(|i| (m.record_cost[i], format!("y{i}")))
        .chain(m.cells.iter().map(|c| (c.cost, format!("x{}_{}", c.i, c.j))));
    push_terms(&mut out, size);
    let _ = writeln!(out, " <= {}", m.capacity);
    for c in &m.cells {
        let _ = writeln!(out, " ry{0}_{1}: x{0}_{1} - y{0} <= 0", c.i, c.j);
        let _ = writeln!(out, " cu{0}_{1}: x{0}_{1} - u{1} <= 0", c.i, c.j);
    }
    out.push_str("Binary\n");
    for i in 0..m.n {
        let _ = writeln!(out, " y{i}");
    }
    for j in &m.columns {
        let _ = writeln!(out, " u{j}");
    }
    for c in &m.cells {
        let _ = writeln!(out, " x{}_{}", c.i, c.j);
    }
    out.push_str("End\n");
    out
}

/// Reads a solution given as whitespace-separated `name value` lines. Lines
/// that do not name a model variable are ignored; missing variables are 0.
pub fn parse_solution(m: &SparsifyModel, text: &str) -> SparsifyDecision {
    let vals: HashMap<&str, f64> = text
        .lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let name = it.next()?;
            let v = it.next()?.parse().ok()?;
            Some((name, v))
        })
        .collect();
    let on = |name: &str| vals.get(name).is_some_and(|v| *v > 0.5);
    let cols = m.d - 1;
    let y: Vec<bool> = (0..m.n).map(|i| on(&format!("y{i}"))).collect();
    let u: Vec<bool> = (1..=cols).map(|j| m.columns.contains(&j) && on(&format!("u{j}"))).collect();
    let mut x = vec![vec![false; cols]; m.n];
    for c in &m.cells {
        x[c.i][c.j - 1] = on(&format!("x{}_{}", c.i, c.j));
    }
    let mut dec = SparsifyDecision { y, u, x, objective: 0.0, achieved_estimate_bytes: 0.0, status: SolverStatus::Optimal };
    dec.objective = m.objective_of(&dec);
    dec.achieved_estimate_bytes = m.cost_of(&dec);
    if !dec.is_structural() || dec.achieved_estimate_bytes > m.capacity + 1e-9 {
        dec.status = SolverStatus::Infeasible;
    }
    dec
}
