//! Schemas, features and tiles.
//!
//! Column indices are zero-based and column 0 is always the geometry. A
//! feature stores its geometry separately from its attribute values, so
//! `feature.values[j - 1]` holds column `j` for `j >= 1`. Feature identity is
//! positional.

mod geometry;
mod value;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{signed_area, BBox, Coord, Geometry, GeometryKind, Ring};
pub use value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttributeType {
    Geometry,
    Str,
    Int,
    Float,
    Bool,
}

impl AttributeType {
    /// Whether `v` may be stored in a column of this type. Null is always
    /// admissible and Float columns also accept Int values.
    pub fn admits(self, v: &Value) -> bool {
        matches!(
            (self, v),
            (_, Value::Null)
                | (AttributeType::Str, Value::Str(_))
                | (AttributeType::Int, Value::Int(_))
                | (AttributeType::Float, Value::Float(_) | Value::Int(_))
                | (AttributeType::Bool, Value::Bool(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub ty: AttributeType,
}

impl Attribute {
    pub fn new(name: impl Into<String>, ty: AttributeType) -> Self {
        Self { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
}

impl Schema {
    /// Builds a schema with the geometry column prepended.
    pub fn new(attrs: impl IntoIterator<Item = (String, AttributeType)>) -> Self {
        let mut attributes = vec![Attribute::new("geometry", AttributeType::Geometry)];
        attributes.extend(attrs.into_iter().map(|(n, t)| Attribute::new(n, t)));
        Self { attributes }
    }

    /// Number of columns including geometry.
    pub fn d(&self) -> usize {
        self.attributes.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn name(&self, j: usize) -> &str {
        &self.attributes[j].name
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub geometry: Geometry,
    pub values: Vec<Value>,
}

impl Feature {
    pub fn new(geometry: Geometry, values: Vec<Value>) -> Self {
        Self { geometry, values }
    }

    /// Attribute value of column `j >= 1`.
    pub fn value(&self, j: usize) -> &Value {
        &self.values[j - 1]
    }

    pub fn nonnull_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_null()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct TileCoord {
    pub z: u8,
    pub x: u32,
    pub y: u32,
}

impl TileCoord {
    pub fn new(z: u8, x: u32, y: u32) -> Self {
        Self { z, x, y }
    }
}

impl fmt::Display for TileCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.z, self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub schema: Schema,
    pub features: Vec<Feature>,
    pub coord: TileCoord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    GeometryColumn,
    Arity,
    Type,
    RingOpen,
    RingTooShort,
    LineTooShort,
    EmptyGeometry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub feature: Option<usize>,
    pub column: usize,
    pub rule: Rule,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("feature index {0} out of range (N = {1})")]
    FeatureOutOfRange(usize, usize),
    #[error("column index {0} out of range (d = {1})")]
    ColumnOutOfRange(usize, usize),
    #[error("the geometry column cannot be nulled")]
    GeometryColumn,
}

impl Tile {
    pub fn new(schema: Schema, features: Vec<Feature>, coord: TileCoord) -> Self {
        Self { schema, features, coord }
    }

    pub fn empty(schema: Schema) -> Self {
        Self::new(schema, Vec::new(), TileCoord::default())
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn d(&self) -> usize {
        self.schema.d()
    }

    /// Column `j` in feature order. Column 0 yields nothing useful as a
    /// value and is rejected.
    pub fn column_values(&self, j: usize) -> Result<Vec<Value>, ModelError> {
        if j == 0 || j >= self.d() {
            return Err(ModelError::ColumnOutOfRange(j, self.d()));
        }
        Ok(self.features.iter().map(|f| f.value(j).clone()).collect())
    }

    /// The distinct values of column `j`, always including null.
    pub fn domain(&self, j: usize) -> BTreeSet<Value> {
        let mut dom: BTreeSet<Value> = self.features.iter().map(|f| f.value(j).clone()).collect();
        dom.insert(Value::Null);
        dom
    }

    pub fn nullify(&self, i: usize, j: usize) -> Result<Tile, ModelError> {
        let mut t = self.clone();
        t.nullify_in_place(i, j)?;
        Ok(t)
    }

    pub fn nullify_in_place(&mut self, i: usize, j: usize) -> Result<(), ModelError> {
        if j == 0 {
            return Err(ModelError::GeometryColumn);
        }
        if j >= self.d() {
            return Err(ModelError::ColumnOutOfRange(j, self.d()));
        }
        if i >= self.n() {
            return Err(ModelError::FeatureOutOfRange(i, self.n()));
        }
        self.features[i].values[j - 1] = Value::Null;
        Ok(())
    }

    pub fn nonnull_cells(&self) -> usize {
        self.features.iter().map(Feature::nonnull_count).sum()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let attrs = &self.schema.attributes;
        if attrs.first().map(|a| a.ty) != Some(AttributeType::Geometry) {
            out.push(Violation { feature: None, column: 0, rule: Rule::GeometryColumn });
        }
        for (j, a) in attrs.iter().enumerate().skip(1) {
            if a.ty == AttributeType::Geometry {
                out.push(Violation { feature: None, column: j, rule: Rule::GeometryColumn });
            }
        }
        for (i, f) in self.features.iter().enumerate() {
            let v = |column, rule| Violation { feature: Some(i), column, rule };
            if f.values.len() + 1 != attrs.len() {
                out.push(v(0, Rule::Arity));
            }
            for (k, val) in f.values.iter().enumerate() {
                if let Some(a) = attrs.get(k + 1) {
                    if !a.ty.admits(val) {
                        out.push(v(k + 1, Rule::Type));
                    }
                }
            }
            if f.geometry.is_empty() {
                out.push(v(0, Rule::EmptyGeometry));
            }
            for line in f.geometry.lines() {
                if line.len() < 2 {
                    out.push(v(0, Rule::LineTooShort));
                }
            }
            for ring in f.geometry.polygons().into_iter().flatten() {
                if ring.len() < 4 {
                    out.push(v(0, Rule::RingTooShort));
                }
                if ring.first() != ring.last() {
                    out.push(v(0, Rule::RingOpen));
                }
            }
        }
        out
    }
}
