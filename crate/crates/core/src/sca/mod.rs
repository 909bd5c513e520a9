//! Static analysis of UDF code.
//!
//! From a parsed program and the declared arities of its inputs, [`analyze_udf`]
//! estimates:
//!
//! * the **read set** — `(input, position)` pairs that may influence the
//!   output;
//! * the **write set** — input attributes whose values may change, plus the
//!   set of **created** output positions beyond the inputs;
//! * **emit bounds** — how many records one invocation may emit;
//! * on demand, **key-group preservation** for a given key set.
//!
//! All estimates are conservative: they may over-approximate, never
//! under-approximate, the behavioural ground truth (see [`oracle`]). Output
//! positions use one convention everywhere: the position space of an
//! operator's output is the concatenation of its input spaces, with created
//! attributes beyond. A `copy` of the second input therefore lives at
//! positions shifted by the first input's arity, matching how the executor
//! lays out records.

pub mod bounds;
pub mod kgp;
pub mod oracle;

use std::collections::BTreeSet;

use crate::error::ScaError;
use crate::tac::cfg::{build_cfg, compute_def_use, Cfg, DefUseInfo};
use crate::tac::{Instr, Operand, UdfProgram};
use crate::value::Value;

/// Where a record variable may have come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RecordOrigin {
    /// Bound from input `param`, directly or via `next`.
    Param(usize),
    /// An output record built by copy/create/concat.
    Built,
    /// Not statically resolvable (scalar reuse, mixed bindings, ...).
    Unknown,
}

/// Constructor sites a record variable may alias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CtorSite {
    /// Label of a copy/create/concat instruction.
    Instr(u32),
    /// The variable is input `param` itself.
    InBinding(usize),
    Unknown,
}

/// How a single `setField` affects the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldOp {
    /// `setField($or, n, null)` — the attribute is dropped.
    ExplicitProjection,
    /// The value is the same input attribute, read by a single `getField`.
    ExplicitCopy,
    /// A position beyond all inputs — a new attribute.
    Addition,
    /// Anything else — the value may differ from the input's.
    Modification,
}

/// Result of analyzing one UDF.
#[derive(Clone, Debug)]
pub struct UdfAnalysis {
    /// `(input, position)` pairs that may influence the output.
    pub read: BTreeSet<(usize, usize)>,
    /// `(input, position)` pairs whose values may change.
    pub write: BTreeSet<(usize, usize)>,
    /// Output positions beyond the inputs (created attributes), in the
    /// concatenated position space.
    pub created: BTreeSet<usize>,
    /// Fewest records one invocation can emit.
    pub emit_lower: u64,
    /// Most records one invocation can emit; `None` means unbounded.
    pub emit_upper: Option<u64>,
    /// Inputs whose record every emission provably carries (emitted as-is,
    /// copied, or concatenated in). An emission built from scratch carries
    /// nothing, so it also destroys any record state beyond the positions
    /// the UDF itself addresses; an empty set signals that.
    pub anchored: BTreeSet<usize>,
    /// Whether the UDF consumes record lists (key-at-a-time).
    pub kat: bool,
    pub in_arities: Vec<usize>,
    program: UdfProgram,
    cfg: Cfg,
    du: DefUseInfo,
}

impl UdfAnalysis {
    /// Key-group preservation for `keys`, a set of `(input, position)` pairs.
    /// Conservative: `true` is a guarantee, `false` means "not shown".
    pub fn kgp(&self, keys: &BTreeSet<(usize, usize)>) -> bool {
        let ctx = Ctx {
            program: &self.program,
            cfg: &self.cfg,
            du: &self.du,
            in_arities: &self.in_arities,
        };
        if self.kat {
            kgp::kat_one_to_one(&ctx)
        } else {
            kgp::rat_kgp(&ctx, keys, (self.emit_lower, self.emit_upper))
        }
    }

    pub fn program(&self) -> &UdfProgram {
        &self.program
    }
}

/// Analyzes a UDF given the declared arity of each input.
pub fn analyze_udf(program: &UdfProgram, in_arities: &[usize]) -> Result<UdfAnalysis, ScaError> {
    if in_arities.len() != program.params.len() {
        return Err(ScaError::InputCount {
            name: program.name.clone(),
            params: program.params.len(),
            given: in_arities.len(),
        });
    }
    let cfg = build_cfg(program);
    let du = compute_def_use(program, &cfg);
    let ctx = Ctx { program, cfg: &cfg, du: &du, in_arities };

    let read = estimate_read(&ctx);
    let (write, created) = estimate_write(&ctx);
    let (emit_lower, emit_upper) = bounds::emit_bounds(program, &cfg);
    let anchored = estimate_anchored(&ctx);

    Ok(UdfAnalysis {
        read,
        write,
        created,
        emit_lower,
        emit_upper,
        anchored,
        kat: program.is_kat(),
        in_arities: in_arities.to_vec(),
        program: program.clone(),
        cfg,
        du,
    })
}

pub(crate) struct Ctx<'a> {
    pub program: &'a UdfProgram,
    pub cfg: &'a Cfg,
    pub du: &'a DefUseInfo,
    pub in_arities: &'a [usize],
}

impl<'a> Ctx<'a> {
    fn total_arity(&self) -> usize {
        self.in_arities.iter().sum()
    }

    /// Splits a concatenated output position into `(input, local position)`;
    /// `None` for created positions.
    fn split_pos(&self, pos: usize) -> Option<(usize, usize)> {
        let mut off = 0;
        for (i, &a) in self.in_arities.iter().enumerate() {
            if pos < off + a {
                return Some((i, pos - off));
            }
            off += a;
        }
        None
    }

    fn param_index(&self, var: &str) -> Option<usize> {
        self.program.params.iter().position(|(name, _)| name == var)
    }

    pub(crate) fn instr_at(&self, label: u32) -> Option<&'a Instr> {
        self.program.line_index(label).map(|i| &self.program.lines[i].instr)
    }

    /// Resolves which input a record variable is bound from at a use site.
    pub(crate) fn record_origin(&self, label: u32, var: &str) -> RecordOrigin {
        let mut visited = BTreeSet::new();
        let mut origins = BTreeSet::new();
        self.record_origins_inner(label, var, &mut visited, &mut origins);
        match (origins.len(), origins.into_iter().next()) {
            (1, Some(o)) => o,
            _ => RecordOrigin::Unknown,
        }
    }

    fn record_origins_inner(
        &self,
        label: u32,
        var: &str,
        visited: &mut BTreeSet<(u32, String)>,
        origins: &mut BTreeSet<RecordOrigin>,
    ) {
        if !visited.insert((label, var.to_string())) {
            return; // a cycle introduces no new origins
        }
        let defs = self.du.defs_of(label, var);
        if defs.is_empty() {
            origins.insert(RecordOrigin::Unknown);
            return;
        }
        for d in defs {
            if d == self.program.header_label {
                origins.insert(match self.param_index(var) {
                    Some(i) => RecordOrigin::Param(i),
                    None => RecordOrigin::Unknown,
                });
                continue;
            }
            match self.instr_at(d) {
                Some(Instr::Next { input, .. }) => {
                    self.record_origins_inner(d, input, visited, origins);
                }
                Some(Instr::Copy { .. } | Instr::Create { .. } | Instr::Concat { .. }) => {
                    origins.insert(RecordOrigin::Built);
                }
                Some(Instr::Assign { value: Operand::Var(v), .. }) => {
                    self.record_origins_inner(d, v, visited, origins);
                }
                _ => {
                    origins.insert(RecordOrigin::Unknown);
                }
            }
        }
    }

    /// Resolves the constructor sites a record variable may alias at a use.
    pub(crate) fn ctor_sites(&self, label: u32, var: &str) -> BTreeSet<CtorSite> {
        let mut visited = BTreeSet::new();
        let mut out = BTreeSet::new();
        self.ctor_sites_inner(label, var, &mut visited, &mut out);
        out
    }

    fn ctor_sites_inner(
        &self,
        label: u32,
        var: &str,
        visited: &mut BTreeSet<(u32, String)>,
        out: &mut BTreeSet<CtorSite>,
    ) {
        if !visited.insert((label, var.to_string())) {
            return;
        }
        let defs = self.du.defs_of(label, var);
        if defs.is_empty() {
            out.insert(CtorSite::Unknown);
            return;
        }
        for d in defs {
            if d == self.program.header_label {
                match self.param_index(var) {
                    Some(i) => {
                        out.insert(CtorSite::InBinding(i));
                    }
                    None => {
                        out.insert(CtorSite::Unknown);
                    }
                }
                continue;
            }
            match self.instr_at(d) {
                Some(Instr::Copy { .. } | Instr::Create { .. } | Instr::Concat { .. }) => {
                    out.insert(CtorSite::Instr(d));
                }
                Some(Instr::Next { input, .. }) => {
                    match self.record_origin(d, input) {
                        RecordOrigin::Param(i) => {
                            out.insert(CtorSite::InBinding(i));
                        }
                        _ => {
                            out.insert(CtorSite::Unknown);
                        }
                    };
                }
                Some(Instr::Assign { value: Operand::Var(v), .. }) => {
                    self.ctor_sites_inner(d, v, visited, out);
                }
                _ => {
                    out.insert(CtorSite::Unknown);
                }
            }
        }
    }

    /// Which input sides a constructor site implicitly copies. `None` means
    /// the site is not statically understood and everything must be pinned.
    fn copied_sides(&self, site: CtorSite) -> Option<BTreeSet<usize>> {
        match site {
            CtorSite::InBinding(i) => Some(BTreeSet::from([i])),
            CtorSite::Unknown => None,
            CtorSite::Instr(label) => match self.instr_at(label) {
                Some(Instr::Create { .. }) => Some(BTreeSet::new()),
                Some(Instr::Copy { source, .. }) => match self.record_origin(label, source) {
                    RecordOrigin::Param(i) => Some(BTreeSet::from([i])),
                    RecordOrigin::Built => Some(BTreeSet::new()),
                    _ => None,
                },
                Some(Instr::Concat { left, right, .. }) => {
                    // Concatenation merges in the output position space, so
                    // operand order does not matter.
                    let mut sides = BTreeSet::new();
                    for operand in [left, right] {
                        match self.record_origin(label, operand) {
                            RecordOrigin::Param(i) => {
                                sides.insert(i);
                            }
                            RecordOrigin::Built => {}
                            _ => return None,
                        }
                    }
                    Some(sides)
                }
                _ => None,
            },
        }
    }

    /// Classifies a `setField($or, pos, value)` at `label`.
    pub(crate) fn classify_setfield(&self, label: u32, pos: usize, value: &Operand) -> FieldOp {
        if pos >= self.total_arity() {
            return FieldOp::Addition;
        }
        match value {
            Operand::Const(Value::Absent) => FieldOp::ExplicitProjection,
            Operand::Const(_) => FieldOp::Modification,
            Operand::Var(v) => {
                let defs = self.du.defs_of(label, v);
                if defs.len() != 1 {
                    return FieldOp::Modification;
                }
                let d = *defs.iter().next().unwrap();
                match self.instr_at(d) {
                    Some(Instr::GetField { input, pos: src_pos, .. }) => {
                        match self.record_origin(d, input) {
                            RecordOrigin::Param(i) => {
                                let same = self
                                    .split_pos(pos)
                                    .map(|(side, m)| side == i && m == *src_pos)
                                    .unwrap_or(false);
                                if same {
                                    FieldOp::ExplicitCopy
                                } else {
                                    FieldOp::Modification
                                }
                            }
                            _ => FieldOp::Modification,
                        }
                    }
                    _ => FieldOp::Modification,
                }
            }
        }
    }
}

/// A position may influence the output if its value is extracted and used.
fn estimate_read(ctx: &Ctx) -> BTreeSet<(usize, usize)> {
    let mut read = BTreeSet::new();
    for line in &ctx.program.lines {
        if let Instr::GetField { target, input, pos } = &line.instr {
            if ctx.du.uses_of(line.label, target).is_empty() {
                continue; // dead extraction
            }
            match ctx.record_origin(line.label, input) {
                RecordOrigin::Param(i) => {
                    if *pos < ctx.in_arities[i] {
                        read.insert((i, *pos));
                    } else {
                        // Out of declared range: pin everything.
                        pin_all(ctx, &mut read);
                    }
                }
                _ => pin_all(ctx, &mut read),
            }
        }
    }
    read
}

fn pin_all(ctx: &Ctx, set: &mut BTreeSet<(usize, usize)>) {
    for (i, &a) in ctx.in_arities.iter().enumerate() {
        for n in 0..a {
            set.insert((i, n));
        }
    }
}

struct EmitSite {
    line_idx: usize,
    ctors: BTreeSet<CtorSite>,
}

struct SetFieldSite {
    line_idx: usize,
    pos: usize,
    op: FieldOp,
    ctors: BTreeSet<CtorSite>,
}

/// Write set estimation. Every emitted record either implicitly copies or
/// implicitly projects each input side; modifications and explicit
/// projections are writes on copied sides, while on projected sides every
/// attribute is a write unless every associated `setField` of that position
/// is an explicit copy and at least one of them dominates the emit.
fn estimate_write(ctx: &Ctx) -> (BTreeSet<(usize, usize)>, BTreeSet<usize>) {
    let mut write: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut created: BTreeSet<usize> = BTreeSet::new();
    let total = ctx.total_arity();

    let mut emits: Vec<EmitSite> = Vec::new();
    let mut sets: Vec<SetFieldSite> = Vec::new();
    for (idx, line) in ctx.program.lines.iter().enumerate() {
        match &line.instr {
            Instr::Emit { rec } => emits.push(EmitSite {
                line_idx: idx,
                ctors: ctx.ctor_sites(line.label, rec),
            }),
            Instr::SetField { out, pos, value } => {
                if *pos >= total {
                    created.insert(*pos);
                }
                sets.push(SetFieldSite {
                    line_idx: idx,
                    pos: *pos,
                    op: ctx.classify_setfield(line.label, *pos, value),
                    ctors: ctx.ctor_sites(line.label, out),
                });
            }
            _ => {}
        }
    }

    let dom = ctx.cfg.dominators();
    let associated = |e: &EmitSite, s: &SetFieldSite| -> bool {
        s.ctors.contains(&CtorSite::Unknown)
            || e.ctors.contains(&CtorSite::Unknown)
            || e.ctors.intersection(&s.ctors).next().is_some()
    };

    for emit in &emits {
        // Which sides does every constructor of this emit copy?
        let mut copied: Option<BTreeSet<usize>> = None;
        let mut pinned = false;
        for &site in &emit.ctors {
            match ctx.copied_sides(site) {
                None => {
                    pinned = true;
                    break;
                }
                Some(sides) => {
                    copied = Some(match copied {
                        None => sides,
                        Some(acc) => acc.intersection(&sides).copied().collect(),
                    });
                }
            }
        }
        if pinned || emit.ctors.is_empty() {
            pin_all(ctx, &mut write);
            continue;
        }
        let copied = copied.unwrap_or_default();

        let assoc: Vec<&SetFieldSite> = sets.iter().filter(|s| associated(emit, s)).collect();
        for (side, &arity) in ctx.in_arities.iter().enumerate() {
            if copied.contains(&side) {
                // Implicit copy: only touched positions change.
                for s in &assoc {
                    if let Some((j, m)) = ctx.split_pos(s.pos) {
                        if j == side && s.op != FieldOp::ExplicitCopy {
                            write.insert((side, m));
                        }
                    }
                }
            } else {
                // Implicit projection: everything changes unless provably
                // copied back on every path.
                for m in 0..arity {
                    let pos_sets: Vec<&&SetFieldSite> = assoc
                        .iter()
                        .filter(|s| ctx.split_pos(s.pos) == Some((side, m)))
                        .collect();
                    let all_copies = !pos_sets.is_empty()
                        && pos_sets.iter().all(|s| s.op == FieldOp::ExplicitCopy);
                    let dominates = pos_sets
                        .iter()
                        .any(|s| ctx.cfg.instr_dominates(s.line_idx, emit.line_idx, &dom));
                    if !(all_copies && dominates) {
                        write.insert((side, m));
                    }
                }
            }
        }
    }

    (write, created)
}

/// Inputs whose record every emission provably carries. A UDF that never
/// emits anchors to every input (vacuously). Any emission whose constructor
/// cannot be resolved, or that is built from scratch, anchors to nothing.
fn estimate_anchored(ctx: &Ctx) -> BTreeSet<usize> {
    let mut anchored: BTreeSet<usize> = (0..ctx.in_arities.len()).collect();
    for line in &ctx.program.lines {
        let Instr::Emit { rec } = &line.instr else {
            continue;
        };
        let ctors = ctx.ctor_sites(line.label, rec);
        if ctors.is_empty() {
            return BTreeSet::new();
        }
        let mut sides: Option<BTreeSet<usize>> = None;
        for &site in &ctors {
            match ctx.copied_sides(site) {
                None => return BTreeSet::new(),
                Some(s) => {
                    sides = Some(match sides {
                        None => s,
                        Some(acc) => acc.intersection(&s).copied().collect(),
                    });
                }
            }
        }
        anchored = anchored.intersection(&sides.unwrap_or_default()).copied().collect();
        if anchored.is_empty() {
            return anchored;
        }
    }
    anchored
}
