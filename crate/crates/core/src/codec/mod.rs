//! Mapbox Vector Tile 2.1 encoding, exact size attribution and the linear
//! size model.

mod geom;
mod wire;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AttributeType, Feature, Geometry, Schema, Tile, TileCoord, Value};
use wire::{Field, Reader, FIXED32, FIXED64, LEN, VARINT};

/// Per-cell tag cost assumed by the linear size model.
pub const B_PTR: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub layer_name: String,
    pub extent: u32,
    pub buffer: u32,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self { layer_name: "features".into(), extent: 4096, buffer: 256 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("feature {feature} has coordinate ({x}, {y}) outside the buffered extent")]
    CoordinateOverflow { feature: usize, x: f64, y: f64 },
    #[error("truncated input")]
    Truncated,
    #[error("malformed tile: {0}")]
    Malformed(&'static str),
    #[error("expected one layer, found {0}")]
    MultipleLayers(usize),
    #[error("value cannot be represented: {0}")]
    UnsupportedValue(&'static str),
}

/// Exact byte attribution of an encoded tile. Column 0 carries the
/// geometry, feature framing and layer header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBreakdown {
    pub total_bytes: usize,
    pub per_column_bytes: Vec<usize>,
    pub dict_bytes: Vec<usize>,
    pub ptr_bytes_per_cell: usize,
}

/// Inputs of the linear size model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub geom_bytes: Vec<f64>,
    /// Indexed by column; entry 0 is unused.
    pub dict_bytes: Vec<f64>,
    pub nonnull_counts: Vec<usize>,
    pub ptr_cost: f64,
    /// Layer overhead outside the per-feature and per-cell terms.
    pub fixed_bytes: f64,
}

impl SizeEstimate {
    /// Amortized cost of one kept cell in column `j`.
    pub fn cell_cost(&self, j: usize) -> f64 {
        let n = self.nonnull_counts[j].max(1) as f64;
        self.ptr_cost + self.dict_bytes[j] / n
    }

    /// Model size with everything kept, excluding `fixed_bytes`.
    pub fn total(&self) -> f64 {
        let geom: f64 = self.geom_bytes.iter().sum();
        let cells: f64 = (1..self.dict_bytes.len())
            .map(|j| self.nonnull_counts[j] as f64 * self.cell_cost(j))
            .sum();
        geom + cells
    }
}

fn value_payload(v: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    match v {
        Value::Null => {}
        Value::Str(s) => wire::put_bytes(&mut out, 1, s.as_bytes()),
        Value::Float(x) => {
            let f = *x as f32;
            if f as f64 == *x || x.is_nan() {
                wire::put_key(&mut out, 2, FIXED32);
                out.extend_from_slice(&f.to_le_bytes());
            } else {
                wire::put_key(&mut out, 3, FIXED64);
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Value::Int(i) if *i >= 0 => {
            wire::put_key(&mut out, 5, VARINT);
            wire::put_varint(&mut out, *i as u64);
        }
        Value::Int(i) => {
            wire::put_key(&mut out, 6, VARINT);
            wire::put_varint(&mut out, wire::zigzag64(*i));
        }
        Value::Bool(b) => {
            wire::put_key(&mut out, 7, VARINT);
            wire::put_varint(&mut out, *b as u64);
        }
    }
    out
}

struct EncodedFeature {
    ty: u64,
    cmds: Vec<u32>,
    tags: Vec<(usize, u32, u32)>,
}

fn packed_len(vals: impl IntoIterator<Item = u32>) -> usize {
    vals.into_iter().map(|v| wire::varint_len(v as u64)).sum()
}

fn check_range(tile: &Tile, cfg: &CodecConfig) -> Result<(), CodecError> {
    let lo = -(cfg.buffer as f64);
    let hi = (cfg.extent + cfg.buffer) as f64;
    for (i, f) in tile.features.iter().enumerate() {
        for c in f.geometry.coords() {
            let (x, y) = (c.x.round(), c.y.round());
            if !(lo..=hi).contains(&x) || !(lo..=hi).contains(&y) {
                return Err(CodecError::CoordinateOverflow { feature: i, x: c.x, y: c.y });
            }
        }
    }
    Ok(())
}

fn write(tile: &Tile, cfg: &CodecConfig) -> Result<(Vec<u8>, SizeBreakdown), CodecError> {
    check_range(tile, cfg)?;
    let d = tile.d();
    let mut per_col = vec![0usize; d];
    let mut dict_bytes = vec![0usize; d];

    let mut key_index: Vec<Option<u32>> = vec![None; d];
    let mut keys = Vec::new();
    for j in 1..d {
        if tile.features.iter().any(|f| !f.value(j).is_null()) {
            key_index[j] = Some(keys.len() as u32);
            keys.push(j);
        }
    }

    let mut dict: Vec<(Value, usize)> = Vec::new();
    let mut dict_index: HashMap<&Value, u32> = HashMap::new();
    let mut feats = Vec::new();
    for f in &tile.features {
        let Some(g) = f.geometry.canonical() else { continue };
        let (ty, cmds) = geom::encode(&g);
        let mut tags = Vec::new();
        for j in 1..d {
            let v = f.value(j);
            if v.is_null() {
                continue;
            }
            let idx = match dict_index.get(v) {
                Some(&k) => {
                    let owner = &mut dict[k as usize].1;
                    *owner = (*owner).min(j);
                    k
                }
                None => {
                    let k = dict.len() as u32;
                    dict.push((v.clone(), j));
                    dict_index.insert(v, k);
                    k
                }
            };
            tags.push((j, key_index[j].unwrap(), idx));
        }
        feats.push(EncodedFeature { ty, cmds, tags });
    }

    let mut layer = Vec::new();
    let mut col0 = 0usize;

    let start = layer.len();
    wire::put_bytes(&mut layer, 1, cfg.layer_name.as_bytes());
    col0 += layer.len() - start;

    for f in &feats {
        let tag_payload = packed_len(f.tags.iter().flat_map(|t| [t.1, t.2]));
        let geom_payload = packed_len(f.cmds.iter().copied());
        let mut body = Vec::new();
        if !f.tags.is_empty() {
            wire::put_key(&mut body, 2, LEN);
            wire::put_varint(&mut body, tag_payload as u64);
            col0 += body.len();
            for &(j, k, v) in &f.tags {
                let before = body.len();
                wire::put_varint(&mut body, k as u64);
                wire::put_varint(&mut body, v as u64);
                per_col[j] += body.len() - before;
            }
        }
        let before = body.len();
        wire::put_key(&mut body, 3, VARINT);
        wire::put_varint(&mut body, f.ty);
        wire::put_key(&mut body, 4, LEN);
        wire::put_varint(&mut body, geom_payload as u64);
        for &c in &f.cmds {
            wire::put_varint(&mut body, c as u64);
        }
        col0 += body.len() - before;
        let before = layer.len();
        wire::put_key(&mut layer, 2, LEN);
        wire::put_varint(&mut layer, body.len() as u64);
        col0 += layer.len() - before;
        layer.extend_from_slice(&body);
    }

    for &j in &keys {
        let before = layer.len();
        wire::put_bytes(&mut layer, 3, tile.schema.name(j).as_bytes());
        per_col[j] += layer.len() - before;
    }
    for (v, owner) in &dict {
        let before = layer.len();
        wire::put_bytes(&mut layer, 4, &value_payload(v));
        let n = layer.len() - before;
        per_col[*owner] += n;
        dict_bytes[*owner] += n;
    }

    let before = layer.len();
    wire::put_key(&mut layer, 5, VARINT);
    wire::put_varint(&mut layer, cfg.extent as u64);
    wire::put_key(&mut layer, 15, VARINT);
    wire::put_varint(&mut layer, 2);
    col0 += layer.len() - before;

    let mut out = Vec::with_capacity(layer.len() + 4);
    wire::put_bytes(&mut out, 3, &layer);
    col0 += out.len() - layer.len();
    per_col[0] = col0;

    let breakdown = SizeBreakdown {
        total_bytes: out.len(),
        per_column_bytes: per_col,
        dict_bytes,
        ptr_bytes_per_cell: B_PTR,
    };
    debug_assert_eq!(breakdown.per_column_bytes.iter().sum::<usize>(), breakdown.total_bytes);
    Ok((out, breakdown))
}

/// Encodes `tile` as a single-layer MVT. Features whose geometry is
/// degenerate after quantization are skipped.
pub fn encode(tile: &Tile, cfg: &CodecConfig) -> Result<Vec<u8>, CodecError> {
    write(tile, cfg).map(|(b, _)| b)
}

/// Exact encoded size with per-column attribution.
pub fn measure(tile: &Tile, cfg: &CodecConfig) -> Result<SizeBreakdown, CodecError> {
    write(tile, cfg).map(|(_, s)| s)
}

/// Inputs of the linear size model for `tile`.
pub fn estimate(tile: &Tile, cfg: &CodecConfig) -> SizeEstimate {
    let d = tile.d();
    let geom_bytes = tile
        .features
        .iter()
        .map(|f| {
            let Some(g) = f.geometry.canonical() else { return 0.0 };
            let (_, cmds) = geom::encode(&g);
            let gp = packed_len(cmds);
            let mut body = 2 + wire::len_field_size(4, gp);
            if f.nonnull_count() > 0 {
                body += 2;
            }
            (1 + wire::varint_len(body as u64) + body) as f64
        })
        .collect();
    let mut dict_bytes = vec![0.0; d];
    let mut nonnull_counts = vec![0usize; d];
    for j in 1..d {
        let mut seen = std::collections::HashSet::new();
        for f in &tile.features {
            let v = f.value(j);
            if v.is_null() {
                continue;
            }
            nonnull_counts[j] += 1;
            if seen.insert(v) {
                dict_bytes[j] += wire::len_field_size(4, value_payload(v).len()) as f64;
            }
        }
        if nonnull_counts[j] > 0 {
            dict_bytes[j] += wire::len_field_size(3, tile.schema.name(j).len()) as f64;
        }
    }
    let header = wire::len_field_size(1, cfg.layer_name.len()) + 1 + wire::varint_len(cfg.extent as u64) + 2;
    SizeEstimate {
        geom_bytes,
        dict_bytes,
        nonnull_counts,
        ptr_cost: B_PTR as f64,
        fixed_bytes: (header + 4) as f64,
    }
}

/// The tile as it reads back after one encode/decode pass: geometries in
/// canonical form and degenerate features removed.
pub fn quantize(tile: &Tile) -> Tile {
    let features = tile
        .features
        .iter()
        .filter_map(|f| f.geometry.canonical().map(|g| Feature::new(g, f.values.clone())))
        .collect();
    Tile::new(tile.schema.clone(), features, tile.coord)
}

struct RawLayer {
    name: String,
    extent: u32,
    keys: Vec<String>,
    values: Vec<Value>,
    features: Vec<(Geometry, Vec<(u32, u32)>)>,
}

fn read_value(bytes: &[u8]) -> Result<Value, CodecError> {
    let mut r = Reader::new(bytes);
    let mut out = Value::Null;
    while !r.done() {
        out = match r.field()? {
            (1, Field::Bytes(b)) => Value::Str(
                String::from_utf8(b.to_vec()).map_err(|_| CodecError::Malformed("invalid UTF-8"))?,
            ),
            (2, Field::Fixed32(b)) => Value::Float(f32::from_bits(b) as f64),
            (3, Field::Fixed64(b)) => Value::Float(f64::from_bits(b)),
            (4, Field::Varint(v)) => Value::Int(v as i64),
            (5, Field::Varint(v)) => {
                Value::Int(i64::try_from(v).map_err(|_| CodecError::UnsupportedValue("uint above i64 range"))?)
            }
            (6, Field::Varint(v)) => Value::Int(wire::unzigzag64(v)),
            (7, Field::Varint(v)) => Value::Bool(v != 0),
            _ => continue,
        };
    }
    if out.is_null() {
        return Err(CodecError::Malformed("empty value message"));
    }
    Ok(out)
}

fn read_layer(bytes: &[u8]) -> Result<RawLayer, CodecError> {
    let mut r = Reader::new(bytes);
    let mut layer = RawLayer { name: String::new(), extent: 4096, keys: vec![], values: vec![], features: vec![] };
    while !r.done() {
        match r.field()? {
            (1, Field::Bytes(b)) => {
                layer.name = String::from_utf8(b.to_vec()).map_err(|_| CodecError::Malformed("invalid UTF-8"))?
            }
            (2, Field::Bytes(b)) => {
                let mut fr = Reader::new(b);
                let (mut ty, mut cmds, mut tags) = (0u64, Vec::new(), Vec::new());
                while !fr.done() {
                    match fr.field()? {
                        (2, Field::Bytes(t)) => tags = wire::packed_u32(t)?,
                        (3, Field::Varint(t)) => ty = t,
                        (4, Field::Bytes(g)) => cmds = wire::packed_u32(g)?,
                        _ => {}
                    }
                }
                if tags.len() % 2 != 0 {
                    return Err(CodecError::Malformed("odd tag count"));
                }
                let g = geom::decode(ty, &cmds)?;
                layer.features.push((g, tags.chunks(2).map(|c| (c[0], c[1])).collect()));
            }
            (3, Field::Bytes(b)) => layer
                .keys
                .push(String::from_utf8(b.to_vec()).map_err(|_| CodecError::Malformed("invalid UTF-8"))?),
            (4, Field::Bytes(b)) => layer.values.push(read_value(b)?),
            (5, Field::Varint(e)) => {
                layer.extent = u32::try_from(e).map_err(|_| CodecError::Malformed("extent"))?
            }
            _ => {}
        }
    }
    Ok(layer)
}

fn read_single_layer(bytes: &[u8]) -> Result<Option<RawLayer>, CodecError> {
    let mut r = Reader::new(bytes);
    let mut layers = Vec::new();
    while !r.done() {
        if let (3, Field::Bytes(b)) = r.field()? {
            layers.push(b);
        }
    }
    match layers.len() {
        0 => Ok(None),
        1 => read_layer(layers[0]).map(Some),
        n => Err(CodecError::MultipleLayers(n)),
    }
}

fn infer_type(vals: impl Iterator<Item = Value>) -> AttributeType {
    let mut ty: Option<AttributeType> = None;
    for v in vals {
        let t = match v {
            Value::Null => continue,
            Value::Str(_) => AttributeType::Str,
            Value::Int(_) => AttributeType::Int,
            Value::Float(_) => AttributeType::Float,
            Value::Bool(_) => AttributeType::Bool,
        };
        ty = Some(match (ty, t) {
            (None, t) => t,
            (Some(a), b) if a == b => a,
            (Some(AttributeType::Int), AttributeType::Float) | (Some(AttributeType::Float), AttributeType::Int) => {
                AttributeType::Float
            }
            _ => AttributeType::Str,
        });
    }
    ty.unwrap_or(AttributeType::Str)
}

fn assemble(layer: RawLayer, schema: Schema, col_of_key: Vec<usize>) -> Result<Tile, CodecError> {
    let d = schema.d();
    let mut features = Vec::with_capacity(layer.features.len());
    for (g, tags) in layer.features {
        let mut values = vec![Value::Null; d - 1];
        for (k, v) in tags {
            let j = *col_of_key.get(k as usize).ok_or(CodecError::Malformed("key index out of range"))?;
            let val = layer.values.get(v as usize).ok_or(CodecError::Malformed("value index out of range"))?;
            values[j - 1] = val.clone();
        }
        features.push(Feature::new(g, values));
    }
    Ok(Tile::new(schema, features, TileCoord::default()))
}

/// Decodes a single-layer MVT. The schema is inferred from the layer keys
/// and value types. Mixed-type columns other than Int/Float decode as Str
/// typed but keep their original values.
pub fn decode(bytes: &[u8]) -> Result<Tile, CodecError> {
    let Some(layer) = read_single_layer(bytes)? else { return Ok(Tile::empty(Schema::new([]))) };
    let mut typed: Vec<Vec<Value>> = vec![Vec::new(); layer.keys.len()];
    for (_, tags) in &layer.features {
        for &(k, v) in tags {
            if let (Some(col), Some(val)) = (typed.get_mut(k as usize), layer.values.get(v as usize)) {
                col.push(val.clone());
            }
        }
    }
    let schema = Schema::new(
        layer.keys.iter().zip(typed).map(|(k, vals)| (k.clone(), infer_type(vals.into_iter()))),
    );
    let col_of_key = (1..=layer.keys.len()).collect();
    assemble(layer, schema, col_of_key)
}

/// Decodes against a known schema, matching keys by name. Keys absent from
/// the schema are an error; schema columns absent from the layer decode as
/// all-null.
pub fn decode_with_schema(bytes: &[u8], schema: &Schema) -> Result<Tile, CodecError> {
    let Some(layer) = read_single_layer(bytes)? else { return Ok(Tile::empty(schema.clone())) };
    let col_of_key = layer
        .keys
        .iter()
        .map(|k| match schema.index_of(k) {
            Some(j) if j > 0 => Ok(j),
            _ => Err(CodecError::Malformed("layer key not in schema")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    assemble(layer, schema.clone(), col_of_key)
}

/// Layer name and extent of an encoded tile.
pub fn layer_info(bytes: &[u8]) -> Result<Option<(String, u32)>, CodecError> {
    Ok(read_single_layer(bytes)?.map(|l| (l.name, l.extent)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coord, Schema};

    fn lakes() -> Tile {
        let schema = Schema::new([
            ("name".to_string(), AttributeType::Str),
            ("salinity".to_string(), AttributeType::Str),
        ]);
        let rows = [("Azul", "f"), ("Birch", "s"), ("Cobalt", "s"), ("Dune", "f")];
        let features = rows
            .iter()
            .enumerate()
            .map(|(i, (n, s))| {
                Feature::new(
                    Geometry::Point(Coord::new(500.0 * i as f64 + 100.0, 700.0)),
                    vec![Value::from(*n), Value::from(*s)],
                )
            })
            .collect();
        Tile::new(schema, features, TileCoord::default())
    }

    #[test]
    fn lake_tile_round_trips() {
        let cfg = CodecConfig::default();
        let t = lakes();
        let bytes = encode(&t, &cfg).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back, t);
        let m = measure(&t, &cfg).unwrap();
        assert_eq!(m.total_bytes, bytes.len());
        assert_eq!(m.per_column_bytes.iter().sum::<usize>(), bytes.len());
    }

    #[test]
    fn empty_tile_is_header_only() {
        let cfg = CodecConfig::default();
        let t = Tile::empty(lakes().schema);
        let bytes = encode(&t, &cfg).unwrap();
        let m = measure(&t, &cfg).unwrap();
        assert_eq!(m.per_column_bytes[0], bytes.len());
        let fixed = estimate(&t, &cfg).fixed_bytes as usize;
        assert!(fixed >= bytes.len() && fixed <= bytes.len() + 2);
        assert_eq!(decode(&bytes).unwrap().n(), 0);
    }

    #[test]
    fn nulling_a_column_shrinks_it() {
        let cfg = CodecConfig::default();
        let t = lakes();
        let mut u = t.clone();
        for i in 0..4 {
            u.nullify_in_place(i, 1).unwrap();
        }
        let (a, b) = (measure(&t, &cfg).unwrap(), measure(&u, &cfg).unwrap());
        assert!(b.per_column_bytes[1] < a.per_column_bytes[1]);
        assert_eq!(b.per_column_bytes[1], 0);
        assert!(b.total_bytes < a.total_bytes);
    }

    #[test]
    fn overflow_is_rejected() {
        let mut t = lakes();
        t.features[0].geometry = Geometry::Point(Coord::new(5000.0, 0.0));
        assert!(matches!(encode(&t, &CodecConfig::default()), Err(CodecError::CoordinateOverflow { .. })));
    }

    #[test]
    fn truncated_bytes_fail() {
        let bytes = encode(&lakes(), &CodecConfig::default()).unwrap();
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn numeric_values_keep_their_type() {
        let schema = Schema::new([
            ("i".to_string(), AttributeType::Int),
            ("f".to_string(), AttributeType::Float),
            ("b".to_string(), AttributeType::Bool),
        ]);
        let vals = [
            vec![Value::Int(-5), Value::Float(0.1), Value::Bool(true)],
            vec![Value::Int(7), Value::Float(2.5), Value::Null],
        ];
        let features = vals
            .iter()
            .map(|v| Feature::new(Geometry::Point(Coord::new(1.0, 1.0)), v.clone()))
            .collect();
        let t = Tile::new(schema, features, TileCoord::default());
        let back = decode(&encode(&t, &CodecConfig::default()).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
