//! Flow documents: sources, operators, sink, and the global attribute space.
//!
//! Loading a document resolves everything positional into global
//! [`AttributeId`]s exactly once: each source position and each created
//! output position gets a fresh id, and every operator records which
//! attribute each of its local input/output positions carries. Reordering
//! later never rewrites UDFs or layouts — operators keep their attribute
//! bindings and the executor carries full-width records, so an operator
//! finds its attributes wherever its inputs now come from.

pub mod doc;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::FlowError;
use crate::sca::{analyze_udf, UdfAnalysis};
use crate::tac::parse::parse_udf;
use crate::tac::{InputKind, UdfProgram};
use crate::value::{AttrOrigin, AttributeId, AttributeInfo, GlobalRecord, ValueTag};

/// The five operator kinds between sources and the sink.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Map,
    Reduce,
    Cross,
    Match,
    CoGroup,
}

impl OpKind {
    pub fn parse(s: &str) -> Option<OpKind> {
        match s {
            "map" => Some(OpKind::Map),
            "reduce" => Some(OpKind::Reduce),
            "cross" => Some(OpKind::Cross),
            "match" => Some(OpKind::Match),
            "cogroup" => Some(OpKind::CoGroup),
            _ => None,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            OpKind::Map | OpKind::Reduce => 1,
            OpKind::Cross | OpKind::Match | OpKind::CoGroup => 2,
        }
    }

    /// Key-at-a-time kinds invoke their UDF once per key group; the others
    /// once per record (or pair).
    pub fn is_kat(self) -> bool {
        matches!(self, OpKind::Reduce | OpKind::CoGroup)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpKind::Map => "map",
            OpKind::Reduce => "reduce",
            OpKind::Cross => "cross",
            OpKind::Match => "match",
            OpKind::CoGroup => "cogroup",
        })
    }
}

/// The shape of a plan: which operator consumes which sub-results. Operators
/// and sources are referenced by id; their definitions live in the [`Flow`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlanNode {
    Source(String),
    Op { id: String, inputs: Vec<PlanNode> },
}

impl PlanNode {
    pub fn op_ids(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect(&mut out, &mut BTreeSet::new());
        out
    }

    pub fn source_ids(&self) -> BTreeSet<String> {
        let mut ops = BTreeSet::new();
        let mut sources = BTreeSet::new();
        self.collect(&mut ops, &mut sources);
        sources
    }

    fn collect(&self, ops: &mut BTreeSet<String>, sources: &mut BTreeSet<String>) {
        match self {
            PlanNode::Source(s) => {
                sources.insert(s.clone());
            }
            PlanNode::Op { id, inputs } => {
                ops.insert(id.clone());
                for i in inputs {
                    i.collect(ops, sources);
                }
            }
        }
    }

    /// The root operator id, if the node is not a bare source.
    pub fn root_op(&self) -> Option<&str> {
        match self {
            PlanNode::Source(_) => None,
            PlanNode::Op { id, .. } => Some(id),
        }
    }
}

/// Canonical form: `op(child)` / `op(left,right)`, sources by name. Two plans
/// are the same alternative iff their canonical forms are equal.
impl fmt::Display for PlanNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanNode::Source(s) => f.write_str(s),
            PlanNode::Op { id, inputs } => {
                write!(f, "{id}(")?;
                for (i, input) in inputs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{input}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForeignKey {
    /// Attributes of the declaring source.
    pub from: Vec<AttributeId>,
    pub to_source: String,
    /// The referenced unique key of `to_source`, positionally paired with
    /// `from`.
    pub to: Vec<AttributeId>,
}

#[derive(Clone, Debug)]
pub struct SourceDecl {
    pub id: String,
    pub path: String,
    /// Layout: attribute carried at each position.
    pub attrs: Vec<AttributeId>,
    pub tags: Vec<ValueTag>,
    pub unique: Vec<BTreeSet<AttributeId>>,
    pub singleton: bool,
    pub foreign_keys: Vec<ForeignKey>,
}

/// Resolved manual annotation.
#[derive(Clone, Debug)]
pub struct Annotation {
    pub read: BTreeSet<AttributeId>,
    pub write: BTreeSet<AttributeId>,
    pub emit_lower: u64,
    pub emit_upper: Option<u64>,
    pub kgp: Vec<BTreeSet<AttributeId>>,
    /// Inputs whose record every emission carries.
    pub anchors: BTreeSet<usize>,
}

#[derive(Clone, Debug)]
pub struct OpDef {
    pub id: String,
    pub kind: OpKind,
    /// Original input dataset ids (source or operator ids). Fixes the
    /// operator's positional layout; the current shape lives in the plan.
    pub inputs: Vec<String>,
    pub udf: Option<UdfProgram>,
    /// Grouping key (reduce).
    pub key: Vec<AttributeId>,
    /// Per-side keys (match, cogroup), positionally paired.
    pub key_left: Vec<AttributeId>,
    pub key_right: Vec<AttributeId>,
    /// Attribute carried at each input position, per input.
    pub in_attrs: Vec<Vec<AttributeId>>,
    /// Output layout: concatenated inputs, then created attributes.
    pub out_attrs: Vec<AttributeId>,
    pub created: Vec<AttributeId>,
    pub annotation: Option<Annotation>,
}

impl OpDef {
    pub fn in_arities(&self) -> Vec<usize> {
        self.in_attrs.iter().map(Vec::len).collect()
    }

    /// All grouping/join key attributes of this operator.
    pub fn key_attrs(&self) -> BTreeSet<AttributeId> {
        self.key
            .iter()
            .chain(&self.key_left)
            .chain(&self.key_right)
            .copied()
            .collect()
    }

    /// The attribute carried at `(input, position)`.
    pub fn attr_of(&self, input: usize, pos: usize) -> Option<AttributeId> {
        self.in_attrs.get(input)?.get(pos).copied()
    }

    /// Where `attr` sits in the operator's input space.
    pub fn pos_of(&self, attr: AttributeId) -> Option<(usize, usize)> {
        for (i, attrs) in self.in_attrs.iter().enumerate() {
            if let Some(n) = attrs.iter().position(|&a| a == attr) {
                return Some((i, n));
            }
        }
        None
    }
}

/// A loaded, validated flow.
#[derive(Clone, Debug)]
pub struct Flow {
    pub name: String,
    pub global: GlobalRecord,
    pub sources: BTreeMap<String, SourceDecl>,
    pub ops: BTreeMap<String, OpDef>,
    /// The original plan (the tree feeding the sink).
    pub root: PlanNode,
    pub sink_layout: Vec<AttributeId>,
    pub sink_path: Option<String>,
    /// Directory of the flow document; CSV paths resolve against it.
    pub base_dir: PathBuf,
}

impl Flow {
    pub fn op(&self, id: &str) -> &OpDef {
        &self.ops[id]
    }

    /// All attributes present in the output of a plan node: source attributes
    /// plus everything created inside the subtree.
    pub fn plan_attrs(&self, node: &PlanNode) -> BTreeSet<AttributeId> {
        match node {
            PlanNode::Source(s) => self.sources[s].attrs.iter().copied().collect(),
            PlanNode::Op { id, inputs } => {
                let mut set: BTreeSet<AttributeId> = BTreeSet::new();
                for input in inputs {
                    set.extend(self.plan_attrs(input));
                }
                set.extend(self.ops[id].created.iter().copied());
                set
            }
        }
    }

    /// Display names for a set of attributes, sorted.
    pub fn attr_names(&self, attrs: &BTreeSet<AttributeId>) -> Vec<String> {
        attrs.iter().map(|&a| self.global.display(a)).collect()
    }
}

/// Loads and validates a flow document from disk.
pub fn load_flow(path: &Path) -> Result<Flow, FlowError> {
    let text = std::fs::read_to_string(path).map_err(|e| FlowError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "flow".to_string());
    parse_flow(&text, &base, &name)
}

/// Parses and validates a flow document given as text. `base_dir` anchors
/// relative UDF and CSV paths.
pub fn parse_flow(text: &str, base_dir: &Path, default_name: &str) -> Result<Flow, FlowError> {
    let doc: doc::FlowDoc =
        toml::from_str(text).map_err(|e| FlowError::Document(e.to_string()))?;
    build(doc, base_dir, default_name)
}

fn document(msg: impl Into<String>) -> FlowError {
    FlowError::Document(msg.into())
}

fn op_err(op: &str, msg: impl Into<String>) -> FlowError {
    FlowError::Operator { op: op.to_string(), msg: msg.into() }
}

fn build(d: doc::FlowDoc, base_dir: &Path, default_name: &str) -> Result<Flow, FlowError> {
    if d.sources.is_empty() {
        return Err(document("flow declares no sources"));
    }

    // Unique ids across sources and operators.
    let mut ids: BTreeSet<&str> = BTreeSet::new();
    for id in d.sources.iter().map(|s| s.id.as_str()).chain(d.operators.iter().map(|o| o.id.as_str()))
    {
        if !ids.insert(id) {
            return Err(document(format!("duplicate id {id:?}")));
        }
    }

    let source_docs: BTreeMap<&str, &doc::SourceDoc> =
        d.sources.iter().map(|s| (s.id.as_str(), s)).collect();
    let op_docs: BTreeMap<&str, &doc::OperatorDoc> =
        d.operators.iter().map(|o| (o.id.as_str(), o)).collect();

    // Tree shape: every data set feeds exactly one consumer.
    let mut consumers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for o in &d.operators {
        let arity = OpKind::parse(&o.kind)
            .ok_or_else(|| op_err(&o.id, format!("unknown kind {:?}", o.kind)))?
            .arity();
        if o.inputs.len() != arity {
            return Err(op_err(
                &o.id,
                format!("kind {} takes {} input(s), got {}", o.kind, arity, o.inputs.len()),
            ));
        }
        for input in &o.inputs {
            consumers.entry(input.as_str()).or_default().push(o.id.as_str());
        }
    }
    consumers.entry(d.sink.input.as_str()).or_default().push("sink");
    for (id, cs) in &consumers {
        if !source_docs.contains_key(id) && !op_docs.contains_key(id) {
            return Err(document(format!("unknown input {id:?} (consumed by {})", cs.join(", "))));
        }
        if cs.len() > 1 {
            return Err(document(format!(
                "data set {id:?} feeds multiple consumers ({}); flows are trees",
                cs.join(", ")
            )));
        }
    }

    // Build the plan tree from the sink; a repeat on the path is a cycle.
    fn subtree<'a>(
        id: &'a str,
        source_docs: &BTreeMap<&str, &doc::SourceDoc>,
        op_docs: &BTreeMap<&'a str, &'a doc::OperatorDoc>,
        path: &mut Vec<&'a str>,
    ) -> Result<PlanNode, FlowError> {
        if path.contains(&id) {
            return Err(document(format!("cycle through {id:?}")));
        }
        if source_docs.contains_key(id) {
            return Ok(PlanNode::Source(id.to_string()));
        }
        let o = op_docs[id];
        path.push(id);
        let inputs = o
            .inputs
            .iter()
            .map(|i| subtree(i.as_str(), source_docs, op_docs, path))
            .collect::<Result<Vec<_>, _>>()?;
        path.pop();
        Ok(PlanNode::Op { id: id.to_string(), inputs })
    }
    let root = subtree(d.sink.input.as_str(), &source_docs, &op_docs, &mut Vec::new())?;

    // Coverage: everything declared takes part in the tree.
    let tree_ops = root.op_ids();
    let tree_sources = root.source_ids();
    for o in &d.operators {
        if !tree_ops.contains(&o.id) {
            return Err(op_err(&o.id, "not connected to the sink"));
        }
    }
    for s in &d.sources {
        if !tree_sources.contains(&s.id) {
            return Err(document(format!("source {:?} not consumed by any operator", s.id)));
        }
    }

    // Global record: source attributes first, in document order.
    let mut global = GlobalRecord::new();
    let mut sources: BTreeMap<String, SourceDecl> = BTreeMap::new();
    for s in &d.sources {
        let mut attrs = Vec::with_capacity(s.attributes.len());
        let mut tags = Vec::with_capacity(s.attributes.len());
        for (pos, (name, ty)) in s.attributes.iter().enumerate() {
            let tag = ValueTag::parse(ty)?;
            let id = global.add_attr(AttributeInfo {
                name: name.clone(),
                origin: AttrOrigin::Base { dataset: s.id.clone(), pos },
                tag: Some(tag),
            });
            global.redirect(&s.id, pos, id);
            attrs.push(id);
            tags.push(tag);
        }
        sources.insert(
            s.id.clone(),
            SourceDecl {
                id: s.id.clone(),
                path: s.path.clone(),
                attrs,
                tags,
                unique: Vec::new(),
                singleton: s.singleton,
                foreign_keys: Vec::new(),
            },
        );
    }

    // Unique keys and foreign keys, now that every source attribute exists.
    for s in &d.sources {
        let scope: Vec<AttributeId> = sources[&s.id].attrs.clone();
        let mut unique = Vec::new();
        for key in &s.unique {
            if key.is_empty() {
                return Err(document(format!("source {:?}: empty unique key", s.id)));
            }
            let set = key
                .iter()
                .map(|n| global.lookup(n, Some(&scope)))
                .collect::<Result<BTreeSet<_>, _>>()?;
            unique.push(set);
        }
        let mut fks = Vec::new();
        for fk in &s.foreign_keys {
            let target = sources.get(&fk.to_source).ok_or_else(|| {
                document(format!("source {:?}: foreign key to unknown source {:?}", s.id, fk.to_source))
            })?;
            if fk.from.is_empty() || fk.from.len() != fk.to.len() {
                return Err(document(format!(
                    "source {:?}: foreign key must pair equally many attributes",
                    s.id
                )));
            }
            let from = fk
                .from
                .iter()
                .map(|n| global.lookup(n, Some(&scope)))
                .collect::<Result<Vec<_>, _>>()?;
            let to = fk
                .to
                .iter()
                .map(|n| global.lookup(n, Some(&target.attrs)))
                .collect::<Result<Vec<_>, _>>()?;
            let to_set: BTreeSet<AttributeId> = to.iter().copied().collect();
            if !unique_declared(&d, &sources, &global, &fk.to_source, &to_set)? {
                return Err(document(format!(
                    "source {:?}: foreign key target in {:?} is not a declared unique key",
                    s.id, fk.to_source
                )));
            }
            fks.push(ForeignKey { from, to_source: fk.to_source.clone(), to });
        }
        let decl = sources.get_mut(&s.id).expect("registered above");
        decl.unique = unique;
        decl.foreign_keys = fks;
    }

    // Operators in dependency order: inputs resolve before consumers.
    let mut order: Vec<&str> = Vec::new();
    fn postorder<'a>(node: &'a PlanNode, out: &mut Vec<&'a str>) {
        if let PlanNode::Op { id, inputs } = node {
            for i in inputs {
                postorder(i, out);
            }
            out.push(id);
        }
    }
    postorder(&root, &mut order);

    let mut layouts: BTreeMap<String, Vec<AttributeId>> =
        sources.iter().map(|(id, s)| (id.clone(), s.attrs.clone())).collect();
    let mut ops: BTreeMap<String, OpDef> = BTreeMap::new();

    for id in order {
        let o = op_docs[id];
        let kind = OpKind::parse(&o.kind).expect("validated above");
        let in_attrs: Vec<Vec<AttributeId>> =
            o.inputs.iter().map(|i| layouts[i].clone()).collect();
        let total: usize = in_attrs.iter().map(Vec::len).sum();

        let mut created = Vec::with_capacity(o.adds.len());
        for (k, name) in o.adds.iter().enumerate() {
            let attr = global.add_attr(AttributeInfo {
                name: name.clone(),
                origin: AttrOrigin::Created { op: o.id.clone(), pos: total + k },
                tag: None,
            });
            created.push(attr);
        }
        let mut out_attrs: Vec<AttributeId> = in_attrs.iter().flatten().copied().collect();
        out_attrs.extend(&created);
        for (pos, &attr) in out_attrs.iter().enumerate() {
            global.redirect(&o.id, pos, attr);
        }

        let udf = match &o.udf {
            None => None,
            Some(rel) => {
                let path = base_dir.join(rel);
                let text = std::fs::read_to_string(&path).map_err(|e| FlowError::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                let program = parse_udf(&text).map_err(|e| FlowError::Udf {
                    path: path.display().to_string(),
                    source: e,
                })?;
                validate_udf(&o.id, kind, &program, total, o.adds.len())?;
                Some(program)
            }
        };
        if udf.is_none() && o.annotation.is_none() {
            return Err(op_err(&o.id, "needs a udf, an annotation, or both"));
        }

        let scope_all: Vec<AttributeId> = in_attrs.iter().flatten().copied().collect();
        let resolve = |names: &[String], scope: &[AttributeId]| -> Result<Vec<AttributeId>, FlowError> {
            names
                .iter()
                .map(|n| global.lookup(n, Some(scope)).map_err(FlowError::from))
                .collect()
        };

        let (key, key_left, key_right) = match kind {
            OpKind::Map | OpKind::Cross => {
                if !o.key.is_empty() || !o.key_left.is_empty() || !o.key_right.is_empty() {
                    return Err(op_err(&o.id, format!("kind {kind} takes no keys")));
                }
                (Vec::new(), Vec::new(), Vec::new())
            }
            OpKind::Reduce => {
                if o.key.is_empty() {
                    return Err(op_err(&o.id, "reduce needs a non-empty key"));
                }
                if !o.key_left.is_empty() || !o.key_right.is_empty() {
                    return Err(op_err(&o.id, "reduce takes `key`, not `key_left`/`key_right`"));
                }
                (resolve(&o.key, &in_attrs[0])?, Vec::new(), Vec::new())
            }
            OpKind::Match | OpKind::CoGroup => {
                if !o.key.is_empty() {
                    return Err(op_err(&o.id, format!("kind {kind} takes `key_left`/`key_right`")));
                }
                if o.key_left.is_empty() || o.key_left.len() != o.key_right.len() {
                    return Err(op_err(
                        &o.id,
                        "key_left and key_right must be non-empty and equally long",
                    ));
                }
                let kl = resolve(&o.key_left, &in_attrs[0])?;
                let kr = resolve(&o.key_right, &in_attrs[1])?;
                for (&l, &r) in kl.iter().zip(&kr) {
                    if let (Some(lt), Some(rt)) = (global.info(l).tag, global.info(r).tag) {
                        if lt != rt {
                            return Err(op_err(
                                &o.id,
                                format!(
                                    "key types differ: {} is {lt}, {} is {rt}",
                                    global.display(l),
                                    global.display(r)
                                ),
                            ));
                        }
                    }
                }
                (Vec::new(), kl, kr)
            }
        };

        let annotation = match &o.annotation {
            None => None,
            Some(a) => {
                let mut kgp = Vec::new();
                for set in &a.kgp {
                    kgp.push(resolve(set, &scope_all)?.into_iter().collect());
                }
                if let Some(upper) = a.emit_upper {
                    if upper < a.emit_lower {
                        return Err(op_err(&o.id, "annotation emit bounds are inverted"));
                    }
                }
                for &i in &a.anchors {
                    if i >= in_attrs.len() {
                        return Err(op_err(
                            &o.id,
                            format!("anchors names input {i} but the operator has {}", in_attrs.len()),
                        ));
                    }
                }
                Some(Annotation {
                    read: resolve(&a.read, &scope_all)?.into_iter().collect(),
                    write: resolve(&a.write, &scope_all)?.into_iter().collect(),
                    emit_lower: a.emit_lower,
                    emit_upper: a.emit_upper,
                    kgp,
                    anchors: a.anchors.iter().copied().collect(),
                })
            }
        };

        layouts.insert(o.id.clone(), out_attrs.clone());
        ops.insert(
            o.id.clone(),
            OpDef {
                id: o.id.clone(),
                kind,
                inputs: o.inputs.clone(),
                udf,
                key,
                key_left,
                key_right,
                in_attrs,
                out_attrs,
                created,
                annotation,
            },
        );
    }

    let sink_layout = layouts[&d.sink.input].clone();
    Ok(Flow {
        name: d.name.unwrap_or_else(|| default_name.to_string()),
        global,
        sources,
        ops,
        root,
        sink_layout,
        sink_path: d.sink.path.clone(),
        base_dir: base_dir.to_path_buf(),
    })
}

fn unique_declared(
    d: &doc::FlowDoc,
    sources: &BTreeMap<String, SourceDecl>,
    global: &GlobalRecord,
    source_id: &str,
    key: &BTreeSet<AttributeId>,
) -> Result<bool, FlowError> {
    // The target source's unique keys may not be resolved yet (forward
    // reference), so resolve its declarations directly.
    let sdoc = d.sources.iter().find(|s| s.id == source_id).expect("checked");
    let scope = &sources[source_id].attrs;
    for u in &sdoc.unique {
        let set = u
            .iter()
            .map(|n| global.lookup(n, Some(scope)))
            .collect::<Result<BTreeSet<_>, _>>()?;
        if &set == key {
            return Ok(true);
        }
    }
    Ok(false)
}

fn validate_udf(
    op: &str,
    kind: OpKind,
    program: &UdfProgram,
    total_arity: usize,
    adds: usize,
) -> Result<(), FlowError> {
    if program.params.len() != kind.arity() {
        return Err(op_err(
            op,
            format!(
                "udf {} takes {} input(s) but kind {kind} has {}",
                program.name,
                program.params.len(),
                kind.arity()
            ),
        ));
    }
    let expected = if kind.is_kat() { InputKind::List } else { InputKind::Record };
    if program.params.iter().any(|(_, k)| *k != expected) {
        let want = if kind.is_kat() { "RecordList" } else { "InputRecord" };
        return Err(op_err(op, format!("kind {kind} requires {want} parameters")));
    }
    let max = program.max_setfield_arity();
    if max > total_arity + adds {
        return Err(op_err(
            op,
            format!(
                "udf sets position {} but inputs span {} and only {} added attribute(s) are declared",
                max - 1,
                total_arity,
                adds
            ),
        ));
    }
    Ok(())
}

/// Which property source `analyze_flow` uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Static analysis only; annotations ignored.
    Sca,
    /// Annotations where present, static analysis as fallback.
    Manual,
    /// Like `Manual`, but the analysis result is retained for comparison.
    Both,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "sca" => Some(Mode::Sca),
            "manual" => Some(Mode::Manual),
            "both" => Some(Mode::Both),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropOrigin {
    Sca,
    Manual,
    /// No UDF to analyze: everything pinned conservatively.
    Pinned,
}

impl fmt::Display for PropOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PropOrigin::Sca => "sca",
            PropOrigin::Manual => "manual",
            PropOrigin::Pinned => "pinned",
        })
    }
}

#[derive(Clone, Debug)]
enum KgpSource {
    /// Query the retained analysis, translating attributes to positions.
    Analysis(Box<UdfAnalysis>),
    /// Declared key sets; any key containing one inherits the guarantee.
    Declared(Vec<BTreeSet<AttributeId>>),
    Never,
}

/// Operator properties over global attributes, as used by the reordering
/// conditions.
#[derive(Clone, Debug)]
pub struct OpProps {
    /// Read set including the operator's own key attributes.
    pub read: BTreeSet<AttributeId>,
    /// Read set before key augmentation (reporting only).
    pub raw_read: BTreeSet<AttributeId>,
    /// Write set including created attributes (their value changes from
    /// absent to present).
    pub write: BTreeSet<AttributeId>,
    pub emit_lower: u64,
    pub emit_upper: Option<u64>,
    pub origin: PropOrigin,
    /// The operator's positional input layout, for key translation.
    in_attrs: Vec<Vec<AttributeId>>,
    kgp: KgpSource,
    /// Inputs whose record every emission carries.
    anchored: BTreeSet<usize>,
}

impl OpProps {
    /// Key-group preservation w.r.t. a key given as global attributes.
    /// Conservative: `false` when the property cannot be established, in
    /// particular when a key attribute is outside the operator's own input
    /// space.
    pub fn kgp(&self, keys: &BTreeSet<AttributeId>) -> bool {
        match &self.kgp {
            KgpSource::Never => false,
            KgpSource::Declared(sets) => sets.iter().any(|s| s.is_subset(keys)),
            KgpSource::Analysis(analysis) => {
                let mut local = BTreeSet::new();
                for &k in keys {
                    let Some(pos) = pos_in(&self.in_attrs, k) else {
                        return false;
                    };
                    local.insert(pos);
                }
                analysis.kgp(&local)
            }
        }
    }

    /// Whether every record this operator emits carries its `input`-th input
    /// record, as a copy or inside a concatenation. Carried records keep all
    /// their attributes — including ones outside the operator's own scope —
    /// so records of an anchored input pass through unreduced.
    pub fn anchors_input(&self, input: usize) -> bool {
        self.anchored.contains(&input)
    }
}

fn pos_in(in_attrs: &[Vec<AttributeId>], attr: AttributeId) -> Option<(usize, usize)> {
    for (i, attrs) in in_attrs.iter().enumerate() {
        if let Some(n) = attrs.iter().position(|&a| a == attr) {
            return Some((i, n));
        }
    }
    None
}

/// Per-operator analysis outcome, including both property sources when the
/// mode retains them.
#[derive(Clone, Debug)]
pub struct OpReport {
    pub op: String,
    pub chosen: PropOrigin,
    pub note: Option<String>,
    pub sca: Option<OpProps>,
    pub manual: Option<OpProps>,
}

#[derive(Clone, Debug)]
pub struct FlowAnalysis {
    pub props: BTreeMap<String, OpProps>,
    pub reports: Vec<OpReport>,
}

/// Attaches properties to every operator, from static analysis and/or
/// annotations depending on `mode`.
pub fn analyze_flow(flow: &Flow, mode: Mode) -> Result<FlowAnalysis, FlowError> {
    let mut props = BTreeMap::new();
    let mut reports = Vec::new();

    let mut order: Vec<&str> = Vec::new();
    fn postorder<'a>(node: &'a PlanNode, out: &mut Vec<&'a str>) {
        if let PlanNode::Op { id, inputs } = node {
            for i in inputs {
                postorder(i, out);
            }
            out.push(id);
        }
    }
    postorder(&flow.root, &mut order);

    for id in order {
        let op = &flow.ops[id];
        let width = flow.global.len();
        let (sca, note) = match &op.udf {
            Some(udf) => (Some(sca_props(op, udf, width)?), None),
            None => (None, Some("no udf: properties pinned to all attributes".to_string())),
        };
        let manual = op.annotation.as_ref().map(|a| manual_props(op, a));

        let chosen = match mode {
            Mode::Sca => sca.clone().unwrap_or_else(|| pinned_props(op, width)),
            Mode::Manual | Mode::Both => manual
                .clone()
                .or_else(|| sca.clone())
                .unwrap_or_else(|| pinned_props(op, width)),
        };
        reports.push(OpReport {
            op: id.to_string(),
            chosen: chosen.origin,
            note: if chosen.origin == PropOrigin::Pinned { note } else { None },
            sca: if mode == Mode::Sca || mode == Mode::Both { sca } else { None },
            manual: if mode == Mode::Sca { None } else { manual },
        });
        props.insert(id.to_string(), chosen);
    }

    Ok(FlowAnalysis { props, reports })
}

/// Attributes outside the operator's scope: neither consumed nor created by
/// it, yet possibly present on its input carriers because an operator below
/// produced them.
fn out_of_scope(op: &OpDef, width: usize) -> impl Iterator<Item = AttributeId> + '_ {
    let scope: BTreeSet<AttributeId> = op
        .in_attrs
        .iter()
        .flatten()
        .chain(&op.created)
        .copied()
        .collect();
    (0..width)
        .map(|i| AttributeId(i as u32))
        .filter(move |a| !scope.contains(a))
}

fn sca_props(op: &OpDef, udf: &UdfProgram, width: usize) -> Result<OpProps, FlowError> {
    let analysis = analyze_udf(udf, &op.in_arities())
        .map_err(|e| op_err(&op.id, e.to_string()))?;
    let translate = |set: &BTreeSet<(usize, usize)>| -> BTreeSet<AttributeId> {
        set.iter()
            .filter_map(|&(i, n)| op.attr_of(i, n))
            .collect()
    };
    let raw_read = translate(&analysis.read);
    let mut read = raw_read.clone();
    read.extend(op.key_attrs());
    let mut write = translate(&analysis.write);
    write.extend(op.created.iter().copied());
    // Unless every emission carries every input record, the operator can
    // drop attributes produced elsewhere in the plan: a rebuilt record (or a
    // copy of one side only) leaves slots beyond the operator's scope
    // absent. Dropping a present value is a write.
    if analysis.anchored.len() < op.in_attrs.len() {
        write.extend(out_of_scope(op, width));
    }
    let anchored = analysis.anchored.clone();
    Ok(OpProps {
        read,
        raw_read,
        write,
        emit_lower: analysis.emit_lower,
        emit_upper: analysis.emit_upper,
        origin: PropOrigin::Sca,
        in_attrs: op.in_attrs.clone(),
        kgp: KgpSource::Analysis(Box::new(analysis)),
        anchored,
    })
}

fn manual_props(op: &OpDef, a: &Annotation) -> OpProps {
    let mut read = a.read.clone();
    read.extend(op.key_attrs());
    let mut write = a.write.clone();
    write.extend(op.created.iter().copied());
    OpProps {
        read,
        raw_read: a.read.clone(),
        write,
        emit_lower: a.emit_lower,
        emit_upper: a.emit_upper,
        origin: PropOrigin::Manual,
        in_attrs: op.in_attrs.clone(),
        kgp: KgpSource::Declared(a.kgp.clone()),
        anchored: a.anchors.clone(),
    }
}

fn pinned_props(op: &OpDef, width: usize) -> OpProps {
    let all: BTreeSet<AttributeId> = op.in_attrs.iter().flatten().copied().collect();
    let mut read = all.clone();
    read.extend(op.key_attrs());
    let mut write = all.clone();
    write.extend(op.created.iter().copied());
    write.extend(out_of_scope(op, width));
    OpProps {
        read,
        raw_read: all,
        write,
        emit_lower: 0,
        emit_upper: None,
        origin: PropOrigin::Pinned,
        in_attrs: op.in_attrs.clone(),
        kgp: KgpSource::Never,
        anchored: BTreeSet::new(),
    }
}
