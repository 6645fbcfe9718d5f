//! Styled rasterization of tiles and image-quality measures.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec;
use crate::metrics::{self, TldParams};
use crate::model::{Tile, TileCoord, Value};
use crate::pipeline::{self, PipelineError};
use crate::raster::{Coverage, PixelGrid};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("attribute {0} is not in the schema")]
    MissingAttribute(String),
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("image smaller than the {0}x{0} window")]
    TooSmall(usize),
    #[error("invalid style: {0}")]
    InvalidStyle(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StyleMode {
    Categorical,
    Gradient,
}

pub type Rgb = [u8; 3];

/// Twelve high-contrast colors used when a style gives no palette.
pub const DEFAULT_PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#e7ba52",
];

fn default_palette() -> Vec<String> {
    DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect()
}

fn default_null() -> String {
    "#d9d9d9".into()
}

fn default_background() -> String {
    "#ffffff".into()
}

/// Styling shared with the viewer. Gradient styles use the first and last
/// palette entries as ramp endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleSpec {
    pub mode: StyleMode,
    pub attribute: String,
    #[serde(default = "default_palette")]
    pub palette: Vec<String>,
    #[serde(default = "default_null")]
    pub null_color: String,
    #[serde(default = "default_background")]
    pub background_color: String,
}

impl StyleSpec {
    pub fn categorical(attribute: impl Into<String>) -> Self {
        Self {
            mode: StyleMode::Categorical,
            attribute: attribute.into(),
            palette: default_palette(),
            null_color: default_null(),
            background_color: default_background(),
        }
    }

    pub fn gradient(attribute: impl Into<String>, from: &str, to: &str) -> Self {
        Self {
            mode: StyleMode::Gradient,
            attribute: attribute.into(),
            palette: vec![from.into(), to.into()],
            null_color: default_null(),
            background_color: default_background(),
        }
    }
}

/// Reads a JSON file holding one style or a list of styles.
pub fn read_styles(path: &Path) -> Result<Vec<StyleSpec>, QualityError> {
    let v: serde_json::Value = serde_json::from_slice(&fs::read(path)?)?;
    if v.is_array() {
        Ok(serde_json::from_value(v)?)
    } else {
        Ok(vec![serde_json::from_value(v)?])
    }
}

pub fn parse_color(s: &str) -> Result<Rgb, QualityError> {
    let h = s.strip_prefix('#').unwrap_or(s);
    let bad = || QualityError::InvalidStyle(format!("bad color {s}"));
    if h.len() != 6 || !h.is_ascii() {
        return Err(bad());
    }
    let c = |k: usize| u8::from_str_radix(&h[k..k + 2], 16).map_err(|_| bad());
    Ok([c(0)?, c(2)?, c(4)?])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, c: Rgb) -> Self {
        Self { width, height, data: c.repeat(width * height) }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let k = 3 * (y * self.width + x);
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    /// Binary PPM encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// A style bound to a baseline tile: category ranks and the gradient range
/// are taken from the baseline so the reduced tile is drawn identically.
#[derive(Debug, Clone)]
pub struct ResolvedStyle {
    pub mode: StyleMode,
    pub attribute: String,
    palette: Vec<Rgb>,
    null_color: Rgb,
    background: Rgb,
    ranks: HashMap<Value, usize>,
    range: Option<(f64, f64)>,
}

impl ResolvedStyle {
    pub fn new(style: &StyleSpec, baseline: &Tile) -> Result<Self, QualityError> {
        if style.palette.is_empty() {
            return Err(QualityError::InvalidStyle("empty palette".into()));
        }
        let j = baseline
            .schema
            .index_of(&style.attribute)
            .filter(|&j| j > 0)
            .ok_or_else(|| QualityError::MissingAttribute(style.attribute.clone()))?;
        let mut ranks = HashMap::new();
        let mut range: Option<(f64, f64)> = None;
        for f in &baseline.features {
            let v = f.value(j);
            if v.is_null() {
                continue;
            }
            let n = ranks.len();
            ranks.entry(v.clone()).or_insert(n);
            if let Some(x) = v.as_f64() {
                range = Some(range.map_or((x, x), |(a, b)| (a.min(x), b.max(x))));
            }
        }
        Ok(Self {
            mode: style.mode,
            attribute: style.attribute.clone(),
            palette: style.palette.iter().map(|c| parse_color(c)).collect::<Result<_, _>>()?,
            null_color: parse_color(&style.null_color)?,
            background: parse_color(&style.background_color)?,
            ranks,
            range,
        })
    }

    fn color(&self, v: &Value, extra: &mut HashMap<Value, usize>) -> Rgb {
        if v.is_null() {
            return self.null_color;
        }
        match self.mode {
            StyleMode::Categorical => {
                let rank = match self.ranks.get(v) {
                    Some(r) => *r,
                    None => {
                        let n = self.ranks.len() + extra.len();
                        *extra.entry(v.clone()).or_insert(n)
                    }
                };
                self.palette[rank % self.palette.len()]
            }
            StyleMode::Gradient => {
                let (Some(x), Some((lo, hi))) = (v.as_f64(), self.range) else { return self.null_color };
                let t = if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
                let a = self.palette[0];
                let b = self.palette[self.palette.len() - 1];
                let mix = |k: usize| (a[k] as f64 + t * (b[k] as f64 - a[k] as f64)).round() as u8;
                [mix(0), mix(1), mix(2)]
            }
        }
    }

    /// Draws `tile`; a tile without the attribute is drawn as all-null.
    pub fn render(&self, tile: &Tile, grid: &PixelGrid) -> RgbImage {
        let side = grid.side as usize;
        let cov = Coverage::new(tile, grid);
        let j = tile.schema.index_of(&self.attribute).filter(|&j| j > 0);
        let mut extra = HashMap::new();
        let mut img = RgbImage::filled(side, side, self.background);
        for (p, o) in cov.owner.iter().enumerate() {
            let Some(i) = o else { continue };
            let v = j.map_or(&Value::Null, |j| tile.features[*i as usize].value(j));
            let c = self.color(v, &mut extra);
            img.data[3 * p..3 * p + 3].copy_from_slice(&c);
        }
        img
    }
}

/// Renders `tile` with `style` resolved against the tile itself.
pub fn render(tile: &Tile, style: &StyleSpec, grid: &PixelGrid) -> Result<RgbImage, QualityError> {
    Ok(ResolvedStyle::new(style, tile)?.render(tile, grid))
}

fn same_dims(a: &RgbImage, b: &RgbImage) -> Result<(), QualityError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(QualityError::DimensionMismatch((a.width, a.height), (b.width, b.height)));
    }
    Ok(())
}

pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64, QualityError> {
    same_dims(a, b)?;
    let s: u64 = a.data.iter().zip(&b.data).map(|(x, y)| (*x as i64 - *y as i64).pow(2) as u64).sum();
    Ok(s as f64 / a.data.len() as f64)
}

pub fn rmse(a: &RgbImage, b: &RgbImage) -> Result<f64, QualityError> {
    mse(a, b).map(f64::sqrt)
}

/// Peak signal-to-noise ratio in dB; infinite for identical images.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64, QualityError> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { 20.0 * 255f64.log10() - 10.0 * m.log10() })
}

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

struct Integral {
    w: usize,
    t: Vec<f64>,
}

impl Integral {
    fn new(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut t = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(x, y);
                t[(y + 1) * (w + 1) + x + 1] = t[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w: w + 1, t }
    }

    fn sum(&self, x: usize, y: usize, n: usize) -> f64 {
        let at = |x: usize, y: usize| self.t[y * self.w + x];
        at(x + n, y + n) - at(x, y + n) - at(x + n, y) + at(x, y)
    }
}

/// Mean structural similarity over all 7 x 7 windows and channels, with
/// uniform weights and population statistics.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64, QualityError> {
    same_dims(a, b)?;
    let (w, h, n) = (a.width, a.height, SSIM_WINDOW);
    if w < n || h < n {
        return Err(QualityError::TooSmall(n));
    }
    let c1 = (SSIM_K1 * 255.0).powi(2);
    let c2 = (SSIM_K2 * 255.0).powi(2);
    let np = (n * n) as f64;
    let mut total = 0.0;
    for ch in 0..3 {
        let px = |img: &RgbImage, x: usize, y: usize| img.data[3 * (y * w + x) + ch] as f64;
        let sx = Integral::new(w, h, |x, y| px(a, x, y));
        let sy = Integral::new(w, h, |x, y| px(b, x, y));
        let sxx = Integral::new(w, h, |x, y| px(a, x, y).powi(2));
        let syy = Integral::new(w, h, |x, y| px(b, x, y).powi(2));
        let sxy = Integral::new(w, h, |x, y| px(a, x, y) * px(b, x, y));
        for y in 0..=h - n {
            for x in 0..=w - n {
                let mx = sx.sum(x, y, n) / np;
                let my = sy.sum(x, y, n) / np;
                let vx = (sxx.sum(x, y, n) / np - mx * mx).max(0.0);
                let vy = (syy.sum(x, y, n) / np - my * my).max(0.0);
                let cxy = sxy.sum(x, y, n) / np - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
    }
    Ok((total / (3 * (w - n + 1) * (h - n + 1)) as f64).clamp(-1.0, 1.0))
}

/// Average ranks starting at 1, ties sharing their mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && xs[idx[e + 1]].total_cmp(&xs[idx[k]]).is_eq() {
            e += 1;
        }
        let r = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            out[i] = r;
        }
        k = e + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; `None` for fewer than three points, unequal
/// lengths or a constant input.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    pearson(&ranks(xs), &ranks(ys))
}

/// Aligns `reduced` with `baseline` row by row, assuming its features are a
/// subsequence of the baseline's with equal geometries. Unmatched baseline
/// rows become all-null. `None` when the reduced tile is not such a
/// subsequence.
pub fn align(baseline: &Tile, reduced: &Tile) -> Option<Tile> {
    let mut view = baseline.clone();
    let mut k = 0;
    for f in &mut view.features {
        let matched = reduced.features.get(k).is_some_and(|r| r.geometry == f.geometry);
        let vals: Vec<Value> = (1..baseline.d())
            .map(|j| {
                let name = baseline.schema.name(j);
                match (matched, reduced.schema.index_of(name)) {
                    (true, Some(rj)) if rj > 0 => reduced.features[k].value(rj).clone(),
                    _ => Value::Null,
                }
            })
            .collect();
        f.values = vals;
        if matched {
            k += 1;
        }
    }
    (k == reduced.n()).then_some(view)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub z: u8,
    pub x: u32,
    pub y: u32,
    pub style: String,
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub tld: f64,
    pub bytes_in: usize,
    pub bytes_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomSummary {
    pub z: u8,
    pub rows: usize,
    pub mean_rmse: f64,
    /// Mean over rows with finite PSNR.
    pub mean_psnr: Option<f64>,
    pub mean_ssim: f64,
    pub mean_tld: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub rows: Vec<QualityRow>,
    pub per_zoom: Vec<ZoomSummary>,
    pub spearman_tld_rmse: Option<f64>,
    pub spearman_tld_psnr: Option<f64>,
    pub spearman_tld_ssim: Option<f64>,
    /// Tile/style pairs without a counterpart or attribute.
    pub skipped: usize,
}

impl QualityReport {
    pub fn from_rows(rows: Vec<QualityRow>, skipped: usize) -> Self {
        let mut by_zoom: BTreeMap<u8, Vec<&QualityRow>> = BTreeMap::new();
        for r in &rows {
            by_zoom.entry(r.z).or_default().push(r);
        }
        let mean = |v: &[f64]| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
        let per_zoom = by_zoom
            .into_iter()
            .map(|(z, rs)| {
                let col = |f: fn(&QualityRow) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
                let psnr: Vec<f64> = col(|r| r.psnr).into_iter().filter(|p| p.is_finite()).collect();
                ZoomSummary {
                    z,
                    rows: rs.len(),
                    mean_rmse: mean(&col(|r| r.rmse)).unwrap_or(0.0),
                    mean_psnr: mean(&psnr),
                    mean_ssim: mean(&col(|r| r.ssim)).unwrap_or(1.0),
                    mean_tld: mean(&col(|r| r.tld)).unwrap_or(0.0),
                }
            })
            .collect();
        let tld: Vec<f64> = rows.iter().map(|r| r.tld).collect();
        let of = |f: fn(&QualityRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        Self {
            spearman_tld_rmse: spearman(&tld, &of(|r| r.rmse)),
            spearman_tld_psnr: spearman(&tld, &of(|r| r.psnr)),
            spearman_tld_ssim: spearman(&tld, &of(|r| r.ssim)),
            rows,
            per_zoom,
            skipped,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), QualityError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON summary: everything except the rows.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rows": self.rows.len(),
            "skipped": self.skipped,
            "per_zoom": self.per_zoom,
            "spearman_tld_rmse": self.spearman_tld_rmse,
            "spearman_tld_psnr": self.spearman_tld_psnr,
            "spearman_tld_ssim": self.spearman_tld_ssim,
        })
    }
}

/// Image metrics of one tile pair under one style.
pub fn compare(
    baseline: &Tile,
    reduced: &Tile,
    style: &StyleSpec,
    grid: &PixelGrid,
) -> Result<(f64, f64, f64), QualityError> {
    let rs = ResolvedStyle::new(style, baseline)?;
    let a = rs.render(baseline, grid);
    let b = rs.render(reduced, grid);
    Ok((rmse(&a, &b)?, psnr(&a, &b)?, ssim(&a, &b)?))
}

/// Rows for one decoded tile pair, one per applicable style.
pub fn evaluate_pair(
    coord: TileCoord,
    baseline: &Tile,
    reduced: &Tile,
    sizes: (usize, usize),
    styles: &[StyleSpec],
    params: &TldParams,
) -> (Vec<QualityRow>, usize) {
    let tld = align(baseline, reduced).and_then(|v| metrics::tld(baseline, &v, params).ok());
    let mut rows = Vec::new();
    let mut skipped = 0;
    for s in styles {
        match (tld, compare(baseline, reduced, s, &params.grid)) {
            (Some(tld), Ok((rmse, psnr, ssim))) => rows.push(QualityRow {
                z: coord.z,
                x: coord.x,
                y: coord.y,
                style: s.attribute.clone(),
                rmse,
                psnr,
                ssim,
                tld,
                bytes_in: sizes.0,
                bytes_out: sizes.1,
            }),
            _ => skipped += 1,
        }
    }
    (rows, skipped)
}

/// Compares every tile of the `baseline` tileset with its counterpart in
/// `reduced`.
pub fn evaluate(
    baseline: &Path,
    reduced: &Path,
    styles: &[StyleSpec],
    params: &TldParams,
) -> Result<QualityReport, QualityError> {
    let meta = pipeline::read_metadata(baseline)?;
    let coords: Vec<TileCoord> =
        meta.tile_status.iter().map(|s| TileCoord::new(s.z, s.x, s.y)).collect();
    let results: Vec<(Vec<QualityRow>, usize)> = coords
        .par_iter()
        .map(|&c| {
            let (Ok(a), Ok(b)) = (fs::read(pipeline::tile_path(baseline, c)), fs::read(pipeline::tile_path(reduced, c)))
            else {
                return (Vec::new(), styles.len());
            };
            match (codec::decode(&a), codec::decode(&b)) {
                (Ok(ta), Ok(tb)) => evaluate_pair(c, &ta, &tb, (a.len(), b.len()), styles, params),
                _ => (Vec::new(), styles.len()),
            }
        })
        .collect();
    let skipped = results.iter().map(|r| r.1).sum();
    Ok(QualityReport::from_rows(results.into_iter().flat_map(|r| r.0).collect(), skipped))
}
