//! Parsing of human-friendly budgets, zoom ranges and tile coordinates.

use tilereduce::model::TileCoord;

/// Parses a byte count such as `32768`, `32KB`, `1.5 MB` or `256k`.
/// Units are powers of 1024.
pub fn parse_bytes(s: &str) -> Result<usize, String> {
    let t = s.trim();
    let split = t.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let n: f64 = num.parse().map_err(|_| format!("invalid size {s:?}"))?;
    let mult = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1u64,
        "k" | "kb" | "kib" => 1 << 10,
        "m" | "mb" | "mib" => 1 << 20,
        "g" | "gb" | "gib" => 1 << 30,
        _ => return Err(format!("unknown size unit in {s:?}")),
    };
    let bytes = n * mult as f64;
    if !bytes.is_finite() || bytes < 1.0 || bytes.fract() != 0.0 {
        return Err(format!("size {s:?} is not a positive whole number of bytes"));
    }
    Ok(bytes as usize)
}

/// Parses `lo..hi`, `lo-hi` or a single zoom.
pub fn parse_zooms(s: &str) -> Result<(u8, u8), String> {
    let parts: Vec<&str> = if s.contains("..") { s.split("..").collect() } else { s.split('-').collect() };
    let z = |p: &str| p.trim().parse::<u8>().map_err(|_| format!("invalid zoom range {s:?}"));
    let (lo, hi) = match parts.as_slice() {
        [one] => (z(one)?, z(one)?),
        [a, b] => (z(a)?, z(b.trim_start_matches('='))?),
        _ => return Err(format!("invalid zoom range {s:?}")),
    };
    if lo > hi {
        return Err(format!("zoom range {s:?} is empty"));
    }
    Ok((lo, hi))
}

/// Parses `z/x/y`.
pub fn parse_coord(s: &str) -> Result<TileCoord, String> {
    let parts: Vec<&str> = s.split('/').collect();
    let bad = || format!("invalid tile coordinate {s:?}, expected z/x/y");
    let [z, x, y] = parts.as_slice() else { return Err(bad()) };
    Ok(TileCoord::new(z.parse().map_err(|_| bad())?, x.parse().map_err(|_| bad())?, y.parse().map_err(|_| bad())?))
}

/// Recovers a coordinate from names like `z8x41y98.mvt` or `.../8/41/98.mvt`.
pub fn coord_from_path(path: &std::path::Path) -> Option<TileCoord> {
    let stem = path.file_stem()?.to_str()?;
    if let Some(rest) = stem.strip_prefix('z') {
        let (z, rest) = rest.split_once('x')?;
        let (x, y) = rest.split_once('y')?;
        return Some(TileCoord::new(z.parse().ok()?, x.parse().ok()?, y.parse().ok()?));
    }
    let y: u32 = stem.parse().ok()?;
    let x_dir = path.parent()?;
    let x: u32 = x_dir.file_name()?.to_str()?.parse().ok()?;
    let z: u8 = x_dir.parent()?.file_name()?.to_str()?.parse().ok()?;
    Some(TileCoord::new(z, x, y))
}
