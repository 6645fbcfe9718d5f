use tilereduce::codec::CodecConfig;
use tilereduce::model::{Geometry, Tile, Value};

mod pb {
    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Tile {
        #[prost(message, repeated, tag = "3")]
        pub layers: Vec<Layer>,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Layer {
        #[prost(uint32, required, tag = "15")]
        pub version: u32,
        #[prost(string, required, tag = "1")]
        pub name: String,
        #[prost(message, repeated, tag = "2")]
        pub features: Vec<Feature>,
        #[prost(string, repeated, tag = "3")]
        pub keys: Vec<String>,
        #[prost(message, repeated, tag = "4")]
        pub values: Vec<Value>,
        #[prost(uint32, optional, tag = "5")]
        pub extent: Option<u32>,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Feature {
        #[prost(uint64, optional, tag = "1")]
        pub id: Option<u64>,
        #[prost(uint32, repeated, packed = "true", tag = "2")]
        pub tags: Vec<u32>,
        #[prost(int32, optional, tag = "3")]
        pub r#type: Option<i32>,
        #[prost(uint32, repeated, packed = "true", tag = "4")]
        pub geometry: Vec<u32>,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Value {
        #[prost(string, optional, tag = "1")]
        pub string_value: Option<String>,
        #[prost(float, optional, tag = "2")]
        pub float_value: Option<f32>,
        #[prost(double, optional, tag = "3")]
        pub double_value: Option<f64>,
        #[prost(int64, optional, tag = "4")]
        pub int_value: Option<i64>,
        #[prost(uint64, optional, tag = "5")]
        pub uint_value: Option<u64>,
        #[prost(sint64, optional, tag = "6")]
        pub sint_value: Option<i64>,
        #[prost(bool, optional, tag = "7")]
        pub bool_value: Option<bool>,
    }
}

type Paths = Vec<Vec<(i64, i64)>>;

/// Command-stream decoding straight from the MVT rules: every MoveTo starts
/// a new path, ClosePath repeats the first vertex.
fn read_commands(cmds: &[u32]) -> Paths {
    let (mut x, mut y) = (0i64, 0i64);
    let mut paths: Paths = Vec::new();
    let mut i = 0;
    let unzz = |v: u32| ((v >> 1) as i64) ^ -((v & 1) as i64);
    while i < cmds.len() {
        let (id, count) = (cmds[i] & 7, cmds[i] >> 3);
        i += 1;
        match id {
            1 | 2 => {
                for _ in 0..count {
                    x += unzz(cmds[i]);
                    y += unzz(cmds[i + 1]);
                    i += 2;
                    if id == 1 {
                        paths.push(Vec::new());
                    }
                    paths.last_mut().expect("MoveTo first").push((x, y));
                }
            }
            7 => {
                let p = paths.last_mut().expect("open path");
                p.push(p[0]);
            }
            other => panic!("unknown command {other}"),
        }
    }
    paths
}

fn paths_of(g: &Geometry) -> (i32, Paths) {
    let pts = |cs: &[tilereduce::model::Coord]| cs.iter().map(|c| (c.x as i64, c.y as i64)).collect::<Vec<_>>();
    match g {
        Geometry::Point(c) => (1, vec![pts(&[*c])]),
        Geometry::MultiPoint(p) => (1, p.iter().map(|c| pts(&[*c])).collect()),
        Geometry::LineString(l) => (2, vec![pts(l)]),
        Geometry::MultiLineString(ls) => (2, ls.iter().map(|l| pts(l)).collect()),
        Geometry::Polygon(r) => (3, r.iter().map(|l| pts(l)).collect()),
        Geometry::MultiPolygon(ps) => (3, ps.iter().flatten().map(|l| pts(l)).collect()),
    }
}

fn pb_value(v: &pb::Value) -> Value {
    if let Some(s) = &v.string_value {
        Value::Str(s.clone())
    } else if let Some(f) = v.float_value {
        Value::Float(f as f64)
    } else if let Some(f) = v.double_value {
        Value::Float(f)
    } else if let Some(i) = v.int_value.or(v.sint_value) {
        Value::Int(i)
    } else if let Some(u) = v.uint_value {
        Value::Int(u as i64)
    } else if let Some(b) = v.bool_value {
        Value::Bool(b)
    } else {
        panic!("empty value message")
    }
}

/// Checks `bytes` against `tile` using only the protobuf schema.
pub fn check_with_reader(tile: &Tile, bytes: &[u8], cfg: &CodecConfig) {
    use prost::Message;
    let t = pb::Tile::decode(bytes).expect("valid protobuf");
    if tile.n() == 0 {
        assert!(t.layers.len() <= 1);
        return;
    }
    assert_eq!(t.layers.len(), 1);
    let layer = &t.layers[0];
    assert_eq!(layer.version, 2);
    assert_eq!(layer.name, cfg.layer_name);
    assert_eq!(layer.extent.unwrap_or(4096), cfg.extent);
    assert_eq!(layer.features.len(), tile.n());
    for (f, want) in layer.features.iter().zip(&tile.features) {
        assert_eq!(f.tags.len() % 2, 0);
        let (ty, paths) = paths_of(&want.geometry);
        assert_eq!(f.r#type, Some(ty));
        assert_eq!(read_commands(&f.geometry), paths);
        let mut seen = vec![Value::Null; tile.d() - 1];
        for kv in f.tags.chunks(2) {
            let key = &layer.keys[kv[0] as usize];
            let j = tile.schema.index_of(key).expect("known key");
            seen[j - 1] = pb_value(&layer.values[kv[1] as usize]);
        }
        assert_eq!(seen, want.values);
    }
}
