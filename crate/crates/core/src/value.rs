//! Values, records and data sets.
//!
//! A record is a fixed-arity tuple of tagged values. Data sets are bags of
//! records together with a layout that names each position with a global
//! attribute id. Bag equality is defined by canonical sorting, so two data
//! sets compare equal regardless of record order but respecting
//! multiplicities.
//!
//! Equality on floats is bitwise on the stored payload: `0.0 != -0.0` and a
//! NaN equals an identical NaN. This keeps record comparison total and
//! deterministic, which the bag comparison below relies on.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ValueError;

/// Scalar value tags. The order in this enum fixes the canonical tag order
/// used when sorting records: Absent < Bool < Int < Float < Str.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ValueTag {
    Absent,
    Bool,
    Int,
    Float,
    Str,
}

impl fmt::Display for ValueTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueTag::Absent => "absent",
            ValueTag::Bool => "bool",
            ValueTag::Int => "int",
            ValueTag::Float => "float",
            ValueTag::Str => "string",
        };
        f.write_str(s)
    }
}

impl ValueTag {
    pub fn parse(s: &str) -> Result<ValueTag, ValueError> {
        match s {
            "int" | "int64" => Ok(ValueTag::Int),
            "float" | "float64" => Ok(ValueTag::Float),
            "string" | "str" => Ok(ValueTag::Str),
            "bool" => Ok(ValueTag::Bool),
            other => Err(ValueError::UnknownType(other.to_string())),
        }
    }
}

/// A single field value. `Absent` marks a slot that no operator has produced
/// (or that was explicitly projected away); it compares equal only to itself.
#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Absent,
}

impl Value {
    pub fn tag(&self) -> ValueTag {
        match self {
            Value::Int(_) => ValueTag::Int,
            Value::Float(_) => ValueTag::Float,
            Value::Str(_) => ValueTag::Str,
            Value::Bool(_) => ValueTag::Bool,
            Value::Absent => ValueTag::Absent,
        }
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, Value::Absent)
    }

    /// Parses a CSV cell according to a declared tag. The literal `\N`
    /// denotes an absent value for every tag.
    pub fn parse_csv(cell: &str, tag: ValueTag) -> Result<Value, ValueError> {
        if cell == "\\N" {
            return Ok(Value::Absent);
        }
        let bad = || ValueError::BadCell {
            cell: cell.to_string(),
            tag,
        };
        match tag {
            ValueTag::Int => Ok(Value::Int(cell.parse::<i64>().map_err(|_| bad())?)),
            ValueTag::Float => Ok(Value::Float(cell.parse::<f64>().map_err(|_| bad())?)),
            ValueTag::Str => Ok(Value::Str(cell.to_string())),
            ValueTag::Bool => match cell {
                "true" => Ok(Value::Bool(true)),
                "false" => Ok(Value::Bool(false)),
                _ => Err(ValueError::BadCell {
                    cell: cell.to_string(),
                    tag,
                }),
            },
            ValueTag::Absent => Err(ValueError::BadCell {
                cell: cell.to_string(),
                tag,
            }),
        }
    }

    /// Renders the value as a CSV cell; inverse of `parse_csv`.
    pub fn to_csv(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(x) => {
                // Keep a trailing ".0" so the cell re-parses as a float.
                let s = x.to_string();
                if s.contains(['.', 'e', 'E']) || s == "NaN" || s.contains("inf") {
                    s
                } else {
                    format!("{s}.0")
                }
            }
            Value::Str(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Absent => "\\N".to_string(),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Absent, Value::Absent) => true,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Value) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    /// Total order: first by tag, then by payload. Floats use the IEEE total
    /// order, which is consistent with bitwise equality.
    fn cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Absent, Value::Absent) => Ordering::Equal,
            _ => self.tag().cmp(&other.tag()),
        }
    }
}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.tag().hash(state);
        match self {
            Value::Int(i) => i.hash(state),
            Value::Float(x) => x.to_bits().hash(state),
            Value::Str(s) => s.hash(state),
            Value::Bool(b) => b.hash(state),
            Value::Absent => {}
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Absent => f.write_str("\\N"),
        }
    }
}

/// A record: a fixed-arity tuple of values.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Record(pub Vec<Value>);

impl Record {
    pub fn new(values: Vec<Value>) -> Record {
        Record(values)
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, n: usize) -> Option<&Value> {
        self.0.get(n)
    }

    /// Grows the record with absent slots so that position `n` exists, then
    /// writes it.
    pub fn set_growing(&mut self, n: usize, v: Value) {
        if n >= self.0.len() {
            self.0.resize(n + 1, Value::Absent);
        }
        self.0[n] = v;
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(">")
    }
}

/// True iff both records have the same arity and are position-wise equal.
pub fn records_equal(a: &Record, b: &Record) -> bool {
    a == b
}

/// Global attribute identifier. Attributes are assigned once per flow: every
/// position of every base data set and every attribute created by an operator
/// gets a fresh id. Display names live in [`GlobalRecord`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeId(pub u32);

impl fmt::Display for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// Where an attribute comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttrOrigin {
    /// Position `pos` of a base data set.
    Base { dataset: String, pos: usize },
    /// Output position `pos` of operator `op` beyond its input arity.
    Created { op: String, pos: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttributeInfo {
    pub name: String,
    pub origin: AttrOrigin,
    /// Declared value tag; `None` for created attributes, whose type is not
    /// known statically.
    pub tag: Option<ValueTag>,
}

/// The global record: the set of all attributes of a flow plus the
/// redirection map taking (data set id, position) to the attribute carried in
/// that position. Data set ids are source names and operator ids.
#[derive(Clone, Debug, Default)]
pub struct GlobalRecord {
    attrs: Vec<AttributeInfo>,
    redirection: std::collections::BTreeMap<(String, usize), AttributeId>,
}

impl GlobalRecord {
    pub fn new() -> GlobalRecord {
        GlobalRecord::default()
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn add_attr(&mut self, info: AttributeInfo) -> AttributeId {
        let id = AttributeId(self.attrs.len() as u32);
        self.attrs.push(info);
        id
    }

    pub fn info(&self, id: AttributeId) -> &AttributeInfo {
        &self.attrs[id.0 as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (AttributeId, &AttributeInfo)> {
        self.attrs
            .iter()
            .enumerate()
            .map(|(i, a)| (AttributeId(i as u32), a))
    }

    pub fn redirect(&mut self, dataset: &str, pos: usize, id: AttributeId) {
        self.redirection.insert((dataset.to_string(), pos), id);
    }

    /// Looks up the attribute carried in position `n` of data set `dataset`.
    pub fn resolve(&self, dataset: &str, n: usize) -> Result<AttributeId, ValueError> {
        self.redirection
            .get(&(dataset.to_string(), n))
            .copied()
            .ok_or_else(|| ValueError::NoSuchPosition {
                dataset: dataset.to_string(),
                pos: n,
            })
    }

    /// Display name of an attribute; qualified with its origin data set when
    /// the bare name is ambiguous in this global record.
    pub fn display(&self, id: AttributeId) -> String {
        let info = self.info(id);
        let dup = self
            .attrs
            .iter()
            .filter(|a| a.name == info.name)
            .take(2)
            .count()
            > 1;
        if dup {
            match &info.origin {
                AttrOrigin::Base { dataset, .. } => format!("{dataset}.{}", info.name),
                AttrOrigin::Created { op, .. } => format!("{op}.{}", info.name),
            }
        } else {
            info.name.clone()
        }
    }

    /// Resolves an attribute by name. Accepts bare names when unambiguous and
    /// `dataset.name` qualified forms; `scope` restricts the candidates when
    /// given.
    pub fn lookup(&self, name: &str, scope: Option<&[AttributeId]>) -> Result<AttributeId, ValueError> {
        let matches: Vec<AttributeId> = self
            .iter()
            .filter(|(id, info)| {
                if let Some(scope) = scope {
                    if !scope.contains(id) {
                        return false;
                    }
                }
                if info.name == name {
                    return true;
                }
                let qualified = match &info.origin {
                    AttrOrigin::Base { dataset, .. } => format!("{dataset}.{}", info.name),
                    AttrOrigin::Created { op, .. } => format!("{op}.{}", info.name),
                };
                qualified == name
            })
            .map(|(id, _)| id)
            .collect();
        match matches.len() {
            0 => Err(ValueError::UnknownAttribute(name.to_string())),
            1 => Ok(matches[0]),
            _ => Err(ValueError::AmbiguousAttribute(name.to_string())),
        }
    }
}

/// A bag of records with a layout mapping each position to a global
/// attribute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataSet {
    pub layout: Vec<AttributeId>,
    pub records: Vec<Record>,
}

impl DataSet {
    pub fn new(layout: Vec<AttributeId>, records: Vec<Record>) -> Result<DataSet, ValueError> {
        for r in &records {
            if r.arity() != layout.len() {
                return Err(ValueError::ArityMismatch {
                    expected: layout.len(),
                    got: r.arity(),
                });
            }
        }
        Ok(DataSet { layout, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records sorted canonically; the basis for bag comparison.
    pub fn canonical_records(&self) -> Vec<Record> {
        let mut rs = self.records.clone();
        rs.sort();
        rs
    }
}

/// Bag equality of two data sets sharing a layout. Callers must align layouts
/// first; a mismatch is an error rather than `false` so that accidental
/// comparisons across shapes cannot pass silently.
pub fn datasets_equal(a: &DataSet, b: &DataSet) -> Result<bool, ValueError> {
    if a.layout != b.layout {
        return Err(ValueError::LayoutMismatch);
    }
    if a.records.len() != b.records.len() {
        return Ok(false);
    }
    Ok(a.canonical_records() == b.canonical_records())
}

/// Projects a record laid out as `layout` onto `attrs`, in the order given by
/// `attrs`. Every requested attribute must appear in the layout.
pub fn project(record: &Record, layout: &[AttributeId], attrs: &[AttributeId]) -> Result<Record, ValueError> {
    if record.arity() != layout.len() {
        return Err(ValueError::ArityMismatch {
            expected: layout.len(),
            got: record.arity(),
        });
    }
    let mut out = Vec::with_capacity(attrs.len());
    for a in attrs {
        let pos = layout
            .iter()
            .position(|x| x == a)
            .ok_or(ValueError::AttributeNotInLayout(*a))?;
        out.push(record.0[pos].clone());
    }
    Ok(Record(out))
}

/// Concatenates two records; the result has the arities summed.
pub fn concat(left: &Record, right: &Record) -> Record {
    let mut vals = left.0.clone();
    vals.extend(right.0.iter().cloned());
    Record(vals)
}
