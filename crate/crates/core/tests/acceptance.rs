//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng;
use tilereduce::codec::{self, CodecConfig};
use tilereduce::fixtures;
use tilereduce::metrics::{self, tld, TldParams};
use tilereduce::model::Tile;
use tilereduce::pipeline::{build_each, process_tile, PipelineConfig, TileBuild};
use tilereduce::quality::{compare, spearman, StyleSpec};
use tilereduce::sparsify::knapsack::{knapsack_dp, solve_via_tile};
use tilereduce::sparsify::{self, sparsify_tile, SolverOptions, SolverStatus, SparsifyParams};
use tilereduce::synth::{generate, tessellation, SynthConfig, TessellationConfig};
use tilereduce::triage::{self, Priority};

const KB: usize = 1024;

const TOY_TOL: f64 = 1e-5;
const TOY_TIME: Duration = Duration::from_secs(1);
const CODEC_TILES: u64 = 500;
const CODEC_TIME: Duration = Duration::from_secs(30);
const SOLVER_INSTANCES: u64 = 200;
const SOLVER_MAX_VARS: usize = 20;
const SOLVER_TOL: f64 = 1e-9;
const SOLVER_TIME: Duration = Duration::from_secs(60);
const KNAPSACK_INSTANCES: u64 = 100;
const KNAPSACK_MAX_ITEMS: usize = 12;
const KNAPSACK_TIME: Duration = Duration::from_secs(60);
const BUDGET_FEATURES: usize = 100_000;
const BUDGET_ZOOMS: (u8, u8) = (0, 8);
const BUDGET_SIZES: [usize; 2] = [32 * KB, 256 * KB];
const BUDGET_TIME: Duration = Duration::from_secs(600);
const SWEEP_TILES: usize = 20;
const SWEEP_BUDGETS_KB: [usize; 5] = [32, 64, 128, 256, 512];
const SWEEP_GAIN: f64 = 2.0;
const ALPHA_BUDGET: usize = 128 * KB;
const ALPHAS: [f64; 3] = [0.0, 0.5, 1.0];
const MIN_ROWS: usize = 100;
const RHO_RMSE_MIN: f64 = 0.7;
const RHO_PSNR_MAX: f64 = -0.7;
const RHO_SSIM_MAX: f64 = -0.7;
const SCALING_CELLS: [usize; 2] = [50_000, 100_000];
const SCALING_TILES: u64 = 5;
const SCALING_RATIO_MAX: f64 = 3.0;
const BUDGET_INSENSITIVITY: f64 = 0.30;
const PRIORITY_TILES: usize = 5;
const PRIORITY_RHO_MIN: f64 = 0.7;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn close(got: f64, want: f64, what: &str) -> Result<(), String> {
    if (got - want).abs() <= TOY_TOL {
        Ok(())
    } else {
        Err(format!("{what}: {got:.6} vs {want:.6}"))
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.1?}, limit {limit:?}"))
    }
}

fn toy_example() -> Check {
    let t0 = Instant::now();
    let input = fixtures::lakes_weighted_input();
    let output = fixtures::lakes_output_of(&input);
    let params = TldParams { epsilon: 1.0, delta: 1e-9, gamma: 1.0, grid: fixtures::lake_grid() };
    let b = metrics::tld_breakdown(&input, &output, &params).map_err(|e| e.to_string())?;
    let grid = params.grid;
    let dist = |t: &Tile, j: usize| {
        let cov = tilereduce::raster::Coverage::new(t, &grid);
        let mut support = input.domain(j);
        support.extend(output.domain(j));
        metrics::column_distribution(t, &cov, j, &support, 1.0).unwrap()
    };
    let name_in = dist(&input, 1);
    let salt_out = dist(&output, 2);
    close(name_in.prob(&"Azul".into()).unwrap(), 0.275362, "P(Azul)")?;
    close(salt_out.prob(&"s".into()).unwrap(), 0.134328, "P_out(salt)")?;
    close(b.entropy_in[0], 2.170965, "H(name)")?;
    close(b.entropy_in[1], 1.486845, "H(salinity)")?;
    close(b.vad[0], 0.067751, "VAD(name)")?;
    close(b.vad[1], 0.005812, "VAD(salinity)")?;
    close(b.weights[0], 0.406485, "w(name)")?;
    close(b.weights[1], 0.593515, "w(salinity)")?;
    close(b.tld, 0.030989, "TLD")?;
    within(t0.elapsed(), TOY_TIME)?;
    Ok(format!("TLD {:.6}, all values within {TOY_TOL:e}", b.tld))
}

fn codec_round_trip() -> Check {
    let t0 = Instant::now();
    let cfg = CodecConfig::default();
    let mut features = 0;
    for seed in 0..CODEC_TILES {
        let tile = common::random_tile(seed, 30, 4, 4096);
        let bytes = codec::encode(&tile, &cfg).map_err(|e| e.to_string())?;
        let back = codec::decode_with_schema(&bytes, &tile.schema).map_err(|e| e.to_string())?;
        if back != tile {
            return Err(format!("tile {seed} differs after round trip"));
        }
        common::mvt::check_with_reader(&tile, &bytes, &cfg);
        features += tile.n();
    }
    within(t0.elapsed(), CODEC_TIME)?;
    Ok(format!("{CODEC_TILES} tiles, {features} features"))
}

fn solver_exactness() -> Check {
    let t0 = Instant::now();
    let opts = SolverOptions { gap: 0.0, node_limit: Some(10_000_000), time_limit: None };
    let mut worst: f64 = 0.0;
    let mut seed = 0;
    let mut done = 0;
    while done < SOLVER_INSTANCES {
        seed += 1;
        let m = common::exhaustive::random_model(seed);
        if m.var_count() > SOLVER_MAX_VARS {
            continue;
        }
        let dec = sparsify::solve(&m, &opts);
        if dec.status != SolverStatus::Optimal {
            return Err(format!("instance {seed}: status {:?}", dec.status));
        }
        worst = worst.max((m.objective_of(&dec) - common::exhaustive::exhaustive(&m)).abs());
        done += 1;
    }
    within(t0.elapsed(), SOLVER_TIME)?;
    ensure(worst <= SOLVER_TOL, format!("{done} instances, max gap {worst:.2e}"))
}

fn knapsack_oracle() -> Check {
    let t0 = Instant::now();
    let mut r = common::rng(4);
    for k in 0..KNAPSACK_INSTANCES {
        let n = r.random_range(1..=KNAPSACK_MAX_ITEMS);
        let items: Vec<(u64, u64)> = (0..n).map(|_| (r.random_range(1..20), r.random_range(1..30))).collect();
        let total: u64 = items.iter().map(|i| i.0).sum();
        let cap = r.random_range(0..=total);
        let (got, want) = (solve_via_tile(&items, cap), knapsack_dp(&items, cap));
        if got != want {
            return Err(format!("instance {k}: sparsifier {got}, dynamic program {want}"));
        }
    }
    within(t0.elapsed(), KNAPSACK_TIME)?;
    Ok(format!("{KNAPSACK_INSTANCES} instances equal the DP optimum"))
}

fn budget_enforcement() -> Check {
    let t0 = Instant::now();
    let data = generate(&SynthConfig { features: BUDGET_FEATURES, ..SynthConfig::default() });
    let mut parts = Vec::new();
    for b in BUDGET_SIZES {
        let cfg = PipelineConfig { zoom_min: BUDGET_ZOOMS.0, zoom_max: BUDGET_ZOOMS.1, budget: b, compute_tld: false, ..PipelineConfig::default() };
        let st = build_each(&data, &cfg, |b| Ok(b.status)).map_err(|e| e.to_string())?;
        let emitted: Vec<_> = st.iter().filter(|s| s.features_out > 0).collect();
        let over = emitted.iter().filter(|s| s.bytes > b).count();
        let flagged = emitted.iter().filter(|s| !s.within_budget).count();
        let max = emitted.iter().map(|s| s.bytes).max().unwrap_or(0);
        if over > 0 || flagged > 0 {
            return Err(format!("B={}KB: {over} over budget, {flagged} flagged", b / KB));
        }
        parts.push(format!("B={}KB {} tiles max {max}", b / KB, emitted.len()));
    }
    within(t0.elapsed(), BUDGET_TIME)?;
    Ok(parts.join("; "))
}

struct Sweep {
    /// Mean RMSE per budget for each style, alpha 0.5.
    by_budget: Vec<[f64; 2]>,
    /// Mean RMSE per alpha for each style at the alpha budget.
    by_alpha: Vec<[f64; 2]>,
    /// `(tld, rmse, psnr, ssim)` for every tile, style and budget at alpha 0.5.
    rows: Vec<(f64, f64, f64, f64)>,
}

fn styles() -> [StyleSpec; 2] {
    [StyleSpec::categorical("class"), StyleSpec::gradient("value", "#000000", "#ffffff")]
}

fn largest_tiles() -> Vec<Tile> {
    let data = tessellation(&TessellationConfig { cols: 141, rows: 141, ..TessellationConfig::default() });
    let cfg = PipelineConfig::default();
    let mut sized: Vec<(usize, Tile)> = common::source_tiles(&data, &cfg, 0..=8)
        .into_iter()
        .map(|raw| {
            let prep = triage::prepare(&raw, &cfg.triage, &cfg.sparsify.grid, &cfg.codec).tile;
            (codec::measure(&prep, &cfg.codec).map_or(0, |m| m.total_bytes), raw)
        })
        .collect();
    sized.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.coord.cmp(&b.1.coord)));
    sized.into_iter().take(SWEEP_TILES).map(|s| s.1).collect()
}

fn run_config(tiles: &[Tile], budget: usize, alpha: f64, rows: Option<&mut Vec<(f64, f64, f64, f64)>>) -> [f64; 2] {
    let mut cfg = PipelineConfig { budget, ..PipelineConfig::default() };
    cfg.sparsify.alpha = alpha;
    let params = TldParams::default();
    let mut sum = [0.0; 2];
    let mut out = Vec::new();
    for raw in tiles {
        let b: TileBuild = process_tile(raw, &cfg).expect("tile builds");
        let t = tld(&b.prepared, &b.view, &params).expect("tld");
        for (k, s) in styles().iter().enumerate() {
            let (rmse, psnr, ssim) = compare(&b.prepared, &b.output, s, &cfg.sparsify.grid).expect("styled");
            sum[k] += rmse;
            out.push((t, rmse, psnr, ssim));
        }
    }
    if let Some(r) = rows {
        r.extend(out);
    }
    sum.map(|s| s / tiles.len() as f64)
}

fn sweep() -> Sweep {
    let tiles = largest_tiles();
    let mut rows = Vec::new();
    let by_budget = SWEEP_BUDGETS_KB.iter().map(|kb| run_config(&tiles, kb * KB, 0.5, Some(&mut rows))).collect();
    let by_alpha = ALPHAS.iter().map(|&a| run_config(&tiles, ALPHA_BUDGET, a, None)).collect();
    Sweep { by_budget, by_alpha, rows }
}

fn fmt_means(v: &[[f64; 2]], k: usize) -> String {
    v.iter().map(|m| format!("{:.2}", m[k])).collect::<Vec<_>>().join(" ")
}

fn budget_fidelity(s: &Sweep) -> Check {
    let mut msg = Vec::new();
    let mut ok = true;
    for (k, name) in ["class", "value"].iter().enumerate() {
        let m: Vec<f64> = s.by_budget.iter().map(|r| r[k]).collect();
        let monotone = m.windows(2).all(|w| w[1] <= w[0]);
        let gain = m[m.len() - 1] * SWEEP_GAIN < m[0];
        ok &= monotone && gain;
        msg.push(format!("{name} RMSE {}", fmt_means(&s.by_budget, k)));
    }
    ensure(ok, msg.join("; "))
}

fn alpha_sweep(s: &Sweep) -> Check {
    let mut msg = Vec::new();
    let mut ok = true;
    for (k, name) in ["class", "value"].iter().enumerate() {
        let (a0, a5, a1) = (s.by_alpha[0][k], s.by_alpha[1][k], s.by_alpha[2][k]);
        ok &= a0 >= a5 && a1 >= a5;
        msg.push(format!("{name} RMSE at alpha 0/0.5/1: {a0:.2} {a5:.2} {a1:.2}"));
    }
    ensure(ok, msg.join("; "))
}

fn tld_correlation(s: &Sweep) -> Check {
    let col = |f: fn(&(f64, f64, f64, f64)) -> f64| s.rows.iter().map(f).collect::<Vec<_>>();
    let t = col(|r| r.0);
    let rho = |v: Vec<f64>| spearman(&t, &v).unwrap_or(f64::NAN);
    let (r1, r2, r3) = (rho(col(|r| r.1)), rho(col(|r| r.2)), rho(col(|r| r.3)));
    ensure(
        s.rows.len() >= MIN_ROWS && r1 >= RHO_RMSE_MIN && r2 <= RHO_PSNR_MAX && r3 <= RHO_SSIM_MAX,
        format!("{} rows, rho RMSE {r1:.3} PSNR {r2:.3} SSIM {r3:.3}", s.rows.len()),
    )
}

/// A prepared polygon tile truncated to exactly `cells` cells or just over.
fn cell_tile(seed: u64, cells: usize) -> Tile {
    let mut t = common::polygon_tile(seed, cells / 3, 4, 4096);
    let mut total = 0;
    let keep = t
        .features
        .iter()
        .take_while(|f| {
            let go = total < cells;
            total += 1 + f.nonnull_count();
            go
        })
        .count();
    t.features.truncate(keep);
    t
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn timed_sparsify(tile: &Tile, budget: usize) -> f64 {
    let params = SparsifyParams { budget, ..SparsifyParams::default() };
    let t0 = Instant::now();
    let out = sparsify_tile(tile, &params, &CodecConfig::default()).expect("sparsifies");
    assert!(out.rounds > 0, "tile already under budget");
    t0.elapsed().as_secs_f64()
}

fn runtime_scaling() -> Check {
    let mut med = Vec::new();
    let mut at_small = Vec::new();
    for (k, &cells) in SCALING_CELLS.iter().enumerate() {
        let tiles: Vec<Tile> = (0..SCALING_TILES).map(|s| cell_tile(100 + s, cells)).collect();
        med.push(median(tiles.iter().map(|t| timed_sparsify(t, BUDGET_SIZES[0])).collect()));
        if k == 1 {
            at_small = vec![med[1]];
            at_small.push(median(tiles.iter().map(|t| timed_sparsify(t, BUDGET_SIZES[1])).collect()));
        }
    }
    let ratio = med[1] / med[0];
    let budget_ratio = at_small[1] / at_small[0];
    ensure(
        ratio <= SCALING_RATIO_MAX && (budget_ratio - 1.0).abs() <= BUDGET_INSENSITIVITY,
        format!(
            "median {:.3}s at 50k cells, {:.3}s at 100k (x{ratio:.2}); 256KB/32KB time ratio {budget_ratio:.2}",
            med[0], med[1]
        ),
    )
}

fn priority_correlation() -> Check {
    let cfg = PipelineConfig::default();
    let data = generate(&SynthConfig { features: 3000, mix: [1.0, 0.0, 0.0], ..SynthConfig::default() });
    let mut rhos = Vec::new();
    for tile in common::source_tiles(&data, &cfg, 8..=8).iter().take(PRIORITY_TILES) {
        let prep = triage::prepare(tile, &cfg.triage, &cfg.sparsify.grid, &cfg.codec).tile;
        let pr = |p: Priority| triage::priorities(&prep, p, 0, &cfg.sparsify.grid, &cfg.codec);
        rhos.push(spearman(&pr(Priority::Vertices), &pr(Priority::PixelSize)).unwrap_or(f64::NAN));
    }
    let min = rhos.iter().copied().fold(f64::INFINITY, f64::min);
    let list = rhos.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" ");
    ensure(min >= PRIORITY_RHO_MIN, format!("rho per tile {list}"))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &dyn Fn() -> Check| {
        let t0 = Instant::now();
        let r = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (tag, msg) = match r {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("criterion {n:>2} {tag} {name}: {msg} [{:.1?}]", t0.elapsed());
    };
    report(1, "toy tile divergences", &toy_example);
    report(2, "codec round trip", &codec_round_trip);
    report(3, "solver exactness", &solver_exactness);
    report(4, "knapsack oracle", &knapsack_oracle);
    report(5, "budget enforcement", &budget_enforcement);
    let t0 = Instant::now();
    let s = sweep();
    println!("corpus sweep for criteria 6-8: {} rows [{:.1?}]", s.rows.len(), t0.elapsed());
    report(6, "budget-fidelity trend", &|| budget_fidelity(&s));
    report(7, "alpha sweep", &|| alpha_sweep(&s));
    report(8, "TLD correlation", &|| tld_correlation(&s));
    report(9, "sparsifier runtime scaling", &runtime_scaling);
    report(10, "vertex and pixel priorities", &priority_correlation);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
