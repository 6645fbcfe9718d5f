use rand::Rng;
use tilereduce::sparsify::{CellVar, SparsifyModel};

/// Best objective over every assignment of `y`, `u` and `x` that satisfies
/// `x <= y`, `x <= u` and the size constraint.
pub fn exhaustive(m: &SparsifyModel) -> f64 {
    let cols = m.columns.len();
    let mut best = f64::NEG_INFINITY;
    for ym in 0u32..1 << m.n {
        let ycost: f64 = (0..m.n).filter(|i| ym >> i & 1 == 1).map(|i| m.record_cost[i]).sum();
        let yval: f64 = (0..m.n).filter(|i| ym >> i & 1 == 1).map(|i| m.record_utility[i]).sum();
        for um in 0u32..1 << cols {
            let allowed: Vec<&CellVar> = m
                .cells
                .iter()
                .filter(|c| ym >> c.i & 1 == 1 && um >> m.columns.iter().position(|&j| j == c.j).unwrap() & 1 == 1)
                .collect();
            for xm in 0u32..1 << allowed.len() {
                let picked = allowed.iter().enumerate().filter(|(k, _)| xm >> k & 1 == 1);
                let (cost, val) = picked.fold((ycost, 0.0), |(c, v), (_, cell)| (c + cell.cost, v + cell.utility));
                if cost <= m.capacity + 1e-9 {
                    best = best.max(m.alpha * yval + (1.0 - m.alpha) * val);
                }
            }
        }
    }
    best
}

pub fn random_model(seed: u64) -> SparsifyModel {
    let mut r = super::rng(seed);
    loop {
        let n = r.random_range(1..=6);
        let cols = r.random_range(1..=3);
        let mut cells = Vec::new();
        for i in 0..n {
            for j in 1..=cols {
                if r.random_bool(0.7) {
                    cells.push(CellVar { i, j, utility: r.random_range(0.0..1.0), cost: r.random_range(1.0..8.0) });
                }
            }
        }
        let columns: Vec<usize> = (1..=cols).filter(|j| cells.iter().any(|c| c.j == *j)).collect();
        let m = SparsifyModel {
            n,
            d: cols + 1,
            alpha: [0.0, 0.25, 0.5, 0.75, 1.0][r.random_range(0..5)],
            record_utility: (0..n).map(|_| r.random_range(0.0..1.0f64).powi(2)).collect(),
            record_cost: (0..n).map(|_| r.random_range(0.0..30.0)).collect(),
            columns,
            cells,
            capacity: r.random_range(0.0..80.0),
        };
        if m.var_count() <= 20 {
            return m;
        }
    }
}
