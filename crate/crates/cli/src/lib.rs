//! The `tilereduce` command line.

pub mod server;
pub mod units;

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use tilereduce::metrics::TldParams;
use tilereduce::model::TileCoord;
use tilereduce::pipeline::{self, Metadata, PipelineConfig};
use tilereduce::quality;
use tilereduce::synth::{self, SynthConfig, TessellationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tilereduce", version, about = "Build and reduce vector tile pyramids under a byte budget")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Clustered star polygons, lines and points.
    Stars,
    /// Gap-free grid cells with shared jagged edges.
    Tessellation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a tile pyramid from a GeoJSON-lines or CSV+WKT file.
    Build {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// JSON pipeline configuration; flags override it.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Per-tile byte budget, e.g. 256KB.
        #[arg(short, long, value_parser = units::parse_bytes)]
        budget: Option<usize>,
        /// Zoom range, e.g. 0..8.
        #[arg(short, long, value_parser = units::parse_zooms)]
        zooms: Option<(u8, u8)>,
        #[arg(short, long)]
        workers: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        layer: Option<String>,
    },
    /// Reduce a single encoded tile to a budget.
    Reduce {
        #[arg(short, long)]
        tile: PathBuf,
        #[arg(short, long, value_parser = units::parse_bytes)]
        budget: Option<usize>,
        /// Output file; defaults to `<tile>.reduced.mvt`.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Tile coordinate z/x/y; inferred from the file name when possible.
        #[arg(long, value_parser = units::parse_coord)]
        coord: Option<TileCoord>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Per-zoom size and TLD summary of a tileset.
    Stats {
        tileset: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Compare a reduced tileset against its baseline.
    Eval {
        #[arg(short, long)]
        baseline: PathBuf,
        #[arg(short, long)]
        reduced: PathBuf,
        /// StyleSpec JSON file holding one style or a list.
        #[arg(short, long)]
        styles: PathBuf,
        /// Per-tile CSV report; a JSON summary is written next to it.
        #[arg(short, long, default_value = "quality.csv")]
        out: PathBuf,
    },
    /// Serve tilesets over HTTP.
    Serve {
        /// Tileset directories as `name=path` or `path`.
        #[arg(required = true)]
        tilesets: Vec<String>,
        #[arg(short, long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of static viewer assets served at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Write a synthetic dataset as GeoJSON lines.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(short, long, default_value_t = 10_000)]
        features: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SynthKind::Stars)]
        kind: SynthKind,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    match path {
        Some(p) => {
            let text = fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_slice(&text).with_context(|| format!("parsing config {}", p.display()))
        }
        None => Ok(PipelineConfig::default()),
    }
}

#[allow(clippy::too_many_arguments)]
fn build(
    input: &Path,
    output: &Path,
    config: Option<&Path>,
    budget: Option<usize>,
    zooms: Option<(u8, u8)>,
    workers: Option<usize>,
    alpha: Option<f64>,
    layer: Option<String>,
) -> anyhow::Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(b) = budget {
        cfg.budget = b;
    }
    if let Some((lo, hi)) = zooms {
        cfg.zoom_min = lo;
        cfg.zoom_max = hi;
    }
    if workers.is_some() {
        cfg.worker_count = workers;
    }
    if let Some(a) = alpha {
        cfg.sparsify.alpha = a;
    }
    if let Some(l) = layer {
        cfg.codec.layer_name = l;
    }
    cfg.validate()?;
    let data = pipeline::read_features(input, &cfg.input)?;
    log::info!("read {} features, skipped {}", data.features.len(), data.skipped.len());
    let meta = pipeline::build(&data, &cfg, output)?;
    let over = meta.tile_status.iter().filter(|s| !s.within_budget).count();
    println!(
        "{} tiles written to {} ({} features read, {} skipped, {} over budget)",
        meta.tile_status.len(),
        output.display(),
        data.features.len(),
        data.skipped.len(),
        over
    );
    Ok(())
}

fn reduce(
    tile: &Path,
    budget: Option<usize>,
    out: Option<PathBuf>,
    config: Option<&Path>,
    coord: Option<TileCoord>,
    alpha: Option<f64>,
) -> anyhow::Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(b) = budget {
        cfg.budget = b;
    }
    if let Some(a) = alpha {
        cfg.sparsify.alpha = a;
    }
    let bytes = fs::read(tile).with_context(|| format!("reading {}", tile.display()))?;
    let coord = coord.or_else(|| units::coord_from_path(tile)).unwrap_or_default();
    let b = pipeline::reduce_encoded(&bytes, &cfg, coord)?;
    let out = out.unwrap_or_else(|| tile.with_extension("reduced.mvt"));
    fs::write(&out, b.bytes.as_deref().unwrap_or_default()).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", serde_json::to_string_pretty(&serde_json::json!({
        "output": out,
        "bytes_in": bytes.len(),
        "status": b.status,
    }))?);
    Ok(())
}

const TLD_BUCKETS: [f64; 5] = [0.0, 0.01, 0.05, 0.1, 0.25];

fn bucket_label(k: usize) -> String {
    match TLD_BUCKETS.get(k + 1) {
        Some(hi) => format!("<{hi}"),
        None => format!(">={}", TLD_BUCKETS[k]),
    }
}

fn zoom_stats(meta: &Metadata) -> Vec<serde_json::Value> {
    let mut out = Vec::new();
    for z in meta.zooms[0]..=meta.zooms[1] {
        let tiles: Vec<_> = meta.tile_status.iter().filter(|s| s.z == z).collect();
        if tiles.is_empty() {
            continue;
        }
        let total: usize = tiles.iter().map(|s| s.bytes).sum();
        let tlds: Vec<f64> = tiles.iter().filter_map(|s| s.tld).collect();
        let mut hist = vec![0usize; TLD_BUCKETS.len()];
        for t in &tlds {
            let k = TLD_BUCKETS.iter().rposition(|lo| t >= lo).unwrap_or(0);
            hist[k] += 1;
        }
        let histogram: serde_json::Map<String, serde_json::Value> =
            hist.iter().enumerate().map(|(k, n)| (bucket_label(k), (*n).into())).collect();
        out.push(serde_json::json!({
            "z": z,
            "tiles": tiles.len(),
            "bytes_total": total,
            "bytes_mean": total as f64 / tiles.len() as f64,
            "bytes_max": tiles.iter().map(|s| s.bytes).max().unwrap_or(0),
            "reduced": tiles.iter().filter(|s| s.triaged || s.sparsified).count(),
            "over_budget": tiles.iter().filter(|s| !s.within_budget).count(),
            "tld_mean": (!tlds.is_empty()).then(|| tlds.iter().sum::<f64>() / tlds.len() as f64),
            "tld_histogram": histogram,
        }));
    }
    out
}

fn stats(root: &Path, json: bool) -> anyhow::Result<()> {
    let meta = pipeline::read_metadata(root)?;
    let rows = zoom_stats(&meta);
    if json {
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "budget_bytes": meta.budget_bytes, "zooms": rows }))?);
        return Ok(());
    }
    println!("budget {} bytes, layer {}", meta.budget_bytes, meta.layer);
    let labels: Vec<String> = (0..TLD_BUCKETS.len()).map(bucket_label).collect();
    println!(
        "{:>4} {:>7} {:>12} {:>10} {:>9} {:>8} {:>5} {:>9}  tld {}",
        "z", "tiles", "bytes", "mean", "max", "reduced", "over", "tld_mean", labels.join(" ")
    );
    for r in rows {
        let hist: Vec<String> = labels.iter().map(|l| r["tld_histogram"][l].to_string()).collect();
        println!(
            "{:>4} {:>7} {:>12} {:>10.0} {:>9} {:>8} {:>5} {:>9}  {}",
            r["z"],
            r["tiles"],
            r["bytes_total"],
            r["bytes_mean"].as_f64().unwrap_or(0.0),
            r["bytes_max"],
            r["reduced"],
            r["over_budget"],
            r["tld_mean"].as_f64().map_or("-".to_string(), |t| format!("{t:.4}")),
            hist.join(" ")
        );
    }
    Ok(())
}

fn eval(baseline: &Path, reduced: &Path, styles: &Path, out: &Path) -> anyhow::Result<()> {
    let styles = quality::read_styles(styles)?;
    let meta = pipeline::read_metadata(baseline)?;
    let cfg: PipelineConfig = serde_json::from_value(meta.config).unwrap_or_default();
    let params = TldParams { epsilon: cfg.sparsify.epsilon, grid: cfg.sparsify.grid, ..TldParams::default() };
    let report = quality::evaluate(baseline, reduced, &styles, &params)?;
    report.write_csv(out)?;
    let summary = report.summary_json();
    fs::write(out.with_extension("json"), serde_json::to_vec_pretty(&summary)?)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn synth_data(output: &Path, features: usize, seed: u64, kind: SynthKind) -> anyhow::Result<()> {
    let data = match kind {
        SynthKind::Stars => synth::generate(&SynthConfig { features, seed, ..SynthConfig::default() }),
        SynthKind::Tessellation => {
            let cols = ((features as f64).sqrt() as usize).max(1);
            synth::tessellation(&TessellationConfig { cols, rows: (features / cols).max(1), seed, ..TessellationConfig::default() })
        }
    };
    let file = fs::File::create(output).with_context(|| format!("creating {}", output.display()))?;
    pipeline::write_geojson(&data, BufWriter::new(file))?;
    println!("{} features written to {}", data.features.len(), output.display());
    Ok(())
}

pub fn execute(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Build { input, output, config, budget, zooms, workers, alpha, layer } => {
            build(&input, &output, config.as_deref(), budget, zooms, workers, alpha, layer)
        }
        Command::Reduce { tile, budget, out, config, coord, alpha } => {
            reduce(&tile, budget, out, config.as_deref(), coord, alpha)
        }
        Command::Stats { tileset, json } => stats(&tileset, json),
        Command::Eval { baseline, reduced, styles, out } => eval(&baseline, &reduced, &styles, &out),
        Command::Serve { tilesets, port, host, assets } => {
            let args = tilesets.iter().map(|s| server::parse_tileset_arg(s)).collect::<anyhow::Result<Vec<_>>>()?;
            let sets = server::load_all(&args)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(sets, assets, &format!("{host}:{port}")))
        }
        Command::Synth { output, features, seed, kind } => synth_data(&output, features, seed, kind),
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("TILEREDUCE_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}
