//! Newline-delimited GeoJSON and CSV+WKT readers.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{AttributeType, Coord, Geometry, Schema, Value};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    GeoJson,
    Csv,
}

impl InputFormat {
    /// Format implied by a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "geojson" | "geojsonl" | "geojsons" | "ndjson" | "jsonl" | "json" => Some(Self::GeoJson),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputOptions {
    /// Detected from the file extension when absent.
    pub format: Option<InputFormat>,
    /// CSV column holding WKT geometries.
    pub wkt_column: String,
    /// Records used for schema inference.
    pub schema_sample: usize,
}

impl Default for InputOptions {
    fn default() -> Self {
        Self { format: None, wkt_column: "geometry".into(), schema_sample: 1000 }
    }
}

/// A feature in longitude/latitude degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFeature {
    pub geometry: Geometry,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceData {
    pub schema: Schema,
    pub features: Vec<SourceFeature>,
    pub skipped: Vec<SkippedRecord>,
}

type RawRecord = (Geometry, Vec<(String, Value)>);

fn rank(v: &Value) -> Option<u8> {
    match v {
        Value::Null => None,
        Value::Bool(_) => Some(0),
        Value::Int(_) => Some(1),
        Value::Float(_) => Some(2),
        Value::Str(_) => Some(3),
    }
}

fn type_of_rank(r: Option<u8>) -> AttributeType {
    match r {
        Some(0) => AttributeType::Bool,
        Some(1) => AttributeType::Int,
        Some(2) => AttributeType::Float,
        _ => AttributeType::Str,
    }
}

/// Converts `v` to a value admitted by `ty`, or null when impossible.
pub fn coerce(v: Value, ty: AttributeType) -> Value {
    match (ty, v) {
        (_, Value::Null) => Value::Null,
        (AttributeType::Str, Value::Str(s)) => Value::Str(s),
        (AttributeType::Str, v) => Value::Str(v.to_string()),
        (AttributeType::Float, Value::Float(x)) => Value::Float(x),
        (AttributeType::Float, Value::Int(i)) => Value::Float(i as f64),
        (AttributeType::Float, Value::Bool(b)) => Value::Float(b as u8 as f64),
        (AttributeType::Int, Value::Int(i)) => Value::Int(i),
        (AttributeType::Int, Value::Bool(b)) => Value::Int(b as i64),
        (AttributeType::Int, Value::Float(x)) if x.fract() == 0.0 && x.abs() < 9.0e15 => Value::Int(x as i64),
        (AttributeType::Bool, Value::Bool(b)) => Value::Bool(b),
        _ => Value::Null,
    }
}

fn assemble(records: Vec<(usize, RawRecord)>, skipped: Vec<SkippedRecord>, sample: usize) -> SourceData {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ranks: Vec<Option<u8>> = Vec::new();
    for (_, (_, props)) in records.iter().take(sample) {
        for (k, v) in props {
            let j = *index.entry(k.clone()).or_insert_with(|| {
                names.push(k.clone());
                ranks.push(None);
                names.len() - 1
            });
            ranks[j] = ranks[j].max(rank(v));
        }
    }
    let types: Vec<AttributeType> = ranks.iter().map(|r| type_of_rank(*r)).collect();
    let schema = Schema::new(names.iter().cloned().zip(types.iter().copied()));
    let features = records
        .into_iter()
        .map(|(_, (geometry, props))| {
            let mut values = vec![Value::Null; names.len()];
            for (k, v) in props {
                if let Some(&j) = index.get(&k) {
                    values[j] = coerce(v, types[j]);
                }
            }
            SourceFeature { geometry, values }
        })
        .collect();
    SourceData { schema, features, skipped }
}

fn position(p: &geojson::Position) -> Result<Coord, String> {
    let s = p.as_slice();
    if s.len() < 2 || !s[0].is_finite() || !s[1].is_finite() {
        return Err("invalid position".into());
    }
    Ok(Coord::new(s[0], s[1]))
}

fn positions(ps: &[geojson::Position]) -> Result<Vec<Coord>, String> {
    ps.iter().map(position).collect()
}

fn rings(rs: &[Vec<geojson::Position>]) -> Result<Vec<Vec<Coord>>, String> {
    rs.iter().map(|r| positions(r)).collect()
}

fn from_geojson(g: &geojson::GeometryValue) -> Result<Geometry, String> {
    use geojson::GeometryValue as G;
    Ok(match g {
        G::Point { coordinates } => Geometry::Point(position(coordinates)?),
        G::MultiPoint { coordinates } => Geometry::MultiPoint(positions(coordinates)?),
        G::LineString { coordinates } => Geometry::LineString(positions(coordinates)?),
        G::MultiLineString { coordinates } => Geometry::MultiLineString(rings(coordinates)?),
        G::Polygon { coordinates } => Geometry::Polygon(rings(coordinates)?),
        G::MultiPolygon { coordinates } => {
            Geometry::MultiPolygon(coordinates.iter().map(|p| rings(p)).collect::<Result<_, _>>()?)
        }
        G::GeometryCollection { .. } => return Err("geometry collections are not supported".into()),
    })
}

fn json_value(v: &serde_json::Value) -> Value {
    match v {
        serde_json::Value::Null => Value::Null,
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Value::Int(i),
            None => n.as_f64().map(Value::Float).unwrap_or(Value::Null),
        },
        serde_json::Value::String(s) => Value::Str(s.clone()),
        other => Value::Str(other.to_string()),
    }
}

fn parse_geojson_line(line: &str) -> Result<RawRecord, String> {
    let f: geojson::Feature = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let g = f.geometry.ok_or("feature has no geometry")?;
    let geometry = from_geojson(&g.value)?;
    let props = f
        .properties
        .map(|p| p.iter().map(|(k, v)| (k.clone(), json_value(v))).collect())
        .unwrap_or_default();
    Ok((geometry, props))
}

fn to_position(c: &Coord) -> geojson::Position {
    vec![c.x, c.y].into()
}

fn to_positions(cs: &[Coord]) -> Vec<geojson::Position> {
    cs.iter().map(to_position).collect()
}

fn to_rings(rs: &[Vec<Coord>]) -> Vec<Vec<geojson::Position>> {
    rs.iter().map(|r| to_positions(r)).collect()
}

fn to_geojson(g: &Geometry) -> geojson::GeometryValue {
    use geojson::GeometryValue as G;
    match g {
        Geometry::Point(c) => G::Point { coordinates: to_position(c) },
        Geometry::MultiPoint(p) => G::MultiPoint { coordinates: to_positions(p) },
        Geometry::LineString(l) => G::LineString { coordinates: to_positions(l) },
        Geometry::MultiLineString(ls) => G::MultiLineString { coordinates: to_rings(ls) },
        Geometry::Polygon(r) => G::Polygon { coordinates: to_rings(r) },
        Geometry::MultiPolygon(ps) => G::MultiPolygon { coordinates: ps.iter().map(|p| to_rings(p)).collect() },
    }
}

fn to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Null => serde_json::Value::Null,
        Value::Bool(b) => (*b).into(),
        Value::Int(i) => (*i).into(),
        Value::Float(x) => serde_json::Number::from_f64(*x).map_or(serde_json::Value::Null, Into::into),
        Value::Str(s) => s.clone().into(),
    }
}

/// Writes `data` as newline-delimited GeoJSON features.
pub fn write_geojson(data: &SourceData, mut w: impl Write) -> Result<(), PipelineError> {
    for f in &data.features {
        let props: serde_json::Map<String, serde_json::Value> = data.schema.attributes[1..]
            .iter()
            .zip(&f.values)
            .map(|(a, v)| (a.name.clone(), to_json(v)))
            .collect();
        let feature = geojson::Feature {
            geometry: Some(geojson::Geometry::new(to_geojson(&f.geometry))),
            properties: Some(props),
            ..Default::default()
        };
        serde_json::to_writer(&mut w, &feature)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads newline-delimited GeoJSON features.
pub fn read_geojson(reader: impl Read, opts: &InputOptions) -> Result<SourceData, PipelineError> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match parse_geojson_line(trimmed) {
            Ok(r) => records.push((k + 1, r)),
            Err(reason) => {
                log::warn!("line {}: {reason}", k + 1);
                skipped.push(SkippedRecord { line: k + 1, reason });
            }
        }
    }
    Ok(assemble(records, skipped, opts.schema_sample))
}

fn wkt_coord(c: &wkt::types::Coord<f64>) -> Coord {
    Coord::new(c.x, c.y)
}

fn wkt_line(l: &wkt::types::LineString<f64>) -> Vec<Coord> {
    l.coords().iter().map(wkt_coord).collect()
}

fn wkt_polygon(p: &wkt::types::Polygon<f64>) -> Vec<Vec<Coord>> {
    p.rings().iter().map(wkt_line).collect()
}

fn from_wkt(w: &wkt::Wkt<f64>) -> Result<Geometry, String> {
    use wkt::Wkt as W;
    let g = match w {
        W::Point(p) => Geometry::Point(wkt_coord(p.coord().ok_or("empty point")?)),
        W::MultiPoint(m) => Geometry::MultiPoint(m.points().iter().filter_map(|p| p.coord().map(wkt_coord)).collect()),
        W::LineString(l) => Geometry::LineString(wkt_line(l)),
        W::MultiLineString(m) => Geometry::MultiLineString(m.line_strings().iter().map(wkt_line).collect()),
        W::Polygon(p) => Geometry::Polygon(wkt_polygon(p)),
        W::MultiPolygon(m) => Geometry::MultiPolygon(m.polygons().iter().map(wkt_polygon).collect()),
        W::GeometryCollection(_) => return Err("geometry collections are not supported".into()),
    };
    if g.is_empty() {
        return Err("empty geometry".into());
    }
    Ok(g)
}

/// Parses a CSV cell: empty is null, then bool, integer, float and string.
pub fn parse_cell(s: &str) -> Value {
    let t = s.trim();
    if t.is_empty() {
        return Value::Null;
    }
    match t {
        "true" | "TRUE" | "True" => return Value::Bool(true),
        "false" | "FALSE" | "False" => return Value::Bool(false),
        _ => {}
    }
    if let Ok(i) = t.parse::<i64>() {
        return Value::Int(i);
    }
    match t.parse::<f64>() {
        Ok(x) if x.is_finite() => Value::Float(x),
        _ => Value::Str(s.to_string()),
    }
}

/// Reads CSV records with a WKT geometry column.
pub fn read_csv(reader: impl Read, opts: &InputOptions) -> Result<SourceData, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| PipelineError::Input(e.to_string()))?.clone();
    let gcol = headers
        .iter()
        .position(|h| h == opts.wkt_column)
        .ok_or_else(|| PipelineError::Input(format!("no column named {}", opts.wkt_column)))?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|r| {
            if r.len() != headers.len() {
                return Err(format!("expected {} fields, found {}", headers.len(), r.len()));
            }
            let w = wkt::Wkt::<f64>::from_str(&r[gcol]).map_err(|e| e.to_string())?;
            let g = from_wkt(&w)?;
            let props = headers
                .iter()
                .zip(r.iter())
                .enumerate()
                .filter(|(c, _)| *c != gcol)
                .map(|(_, (h, v))| (h.to_string(), parse_cell(v)))
                .collect();
            Ok((g, props))
        });
        match parsed {
            Ok(r) => records.push((line, r)),
            Err(reason) => {
                log::warn!("line {line}: {reason}");
                skipped.push(SkippedRecord { line, reason });
            }
        }
    }
    Ok(assemble(records, skipped, opts.schema_sample))
}

/// Reads a feature file, choosing the format from options or extension.
pub fn read_features(path: &Path, opts: &InputOptions) -> Result<SourceData, PipelineError> {
    let format = opts
        .format
        .or_else(|| InputFormat::from_path(path))
        .ok_or_else(|| PipelineError::Input(format!("cannot infer input format of {}", path.display())))?;
    let file = File::open(path)?;
    match format {
        InputFormat::GeoJson => read_geojson(file, opts),
        InputFormat::Csv => read_csv(file, opts),
    }
}
