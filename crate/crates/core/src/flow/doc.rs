//! On-disk flow document format (TOML).
//!
//! A flow document declares CSV-backed sources, a tree of operators, and one
//! sink. Attribute references are names, resolved against the referring
//! operator's input scope; `dataset.name` qualifies ambiguous names.

use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDoc {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub sources: Vec<SourceDoc>,
    #[serde(default)]
    pub operators: Vec<OperatorDoc>,
    pub sink: SinkDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDoc {
    pub id: String,
    /// CSV file, relative to the flow document.
    pub path: String,
    /// `[name, type]` pairs in position order.
    pub attributes: Vec<(String, String)>,
    /// Declared unique keys (each a set of attribute names).
    #[serde(default)]
    pub unique: Vec<Vec<String>>,
    /// Declared to hold exactly one record.
    #[serde(default)]
    pub singleton: bool,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKeyDoc>,
}

/// `from` (attributes of the declaring source) references the `to` attributes
/// of `to_source`, which must be one of that source's declared unique keys.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForeignKeyDoc {
    pub from: Vec<String>,
    pub to_source: String,
    pub to: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDoc {
    pub id: String,
    /// One of `map`, `reduce`, `cross`, `match`, `cogroup`.
    pub kind: String,
    pub inputs: Vec<String>,
    /// UDF source file, relative to the flow document. Optional when an
    /// annotation supplies the properties instead (such an operator can be
    /// analyzed and enumerated but not executed).
    #[serde(default)]
    pub udf: Option<String>,
    /// Grouping key (reduce).
    #[serde(default)]
    pub key: Vec<String>,
    /// Join/grouping keys per side (match, cogroup); positionally paired.
    #[serde(default)]
    pub key_left: Vec<String>,
    #[serde(default)]
    pub key_right: Vec<String>,
    /// Names of attributes this operator appends beyond its inputs, in
    /// output-position order.
    #[serde(default)]
    pub adds: Vec<String>,
    #[serde(default)]
    pub annotation: Option<AnnotationDoc>,
}

/// Manually supplied operator properties; shape-checked, content trusted.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationDoc {
    pub read: Vec<String>,
    pub write: Vec<String>,
    /// Fewest records one invocation emits.
    #[serde(default)]
    pub emit_lower: u64,
    /// Most records one invocation emits; omitted = unbounded.
    #[serde(default)]
    pub emit_upper: Option<u64>,
    /// Key sets for which key-group preservation is asserted. Preservation
    /// is monotone: any key containing a listed set inherits the guarantee,
    /// so `[[]]` asserts it for every key.
    #[serde(default)]
    pub kgp: Vec<Vec<String>>,
    /// Input indexes whose record every emission carries (as a copy or part
    /// of a concatenation). Such emissions preserve all attributes of that
    /// record, including ones outside the operator's own scope.
    #[serde(default)]
    pub anchors: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkDoc {
    pub input: String,
    /// Output CSV path, relative to the flow document; optional for flows
    /// that are only analyzed.
    #[serde(default)]
    pub path: Option<String>,
}
