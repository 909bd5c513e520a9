//! Key-group preservation checks.
//!
//! A UDF preserves key groups for a key set `K` when records agreeing on `K`
//! all emit the same number of records, and never more than one each. Both
//! checks here are conservative: `true` is a guarantee, `false` only means
//! the property could not be shown.

use std::collections::BTreeSet;

use crate::sca::{Ctx, RecordOrigin};
use crate::tac::{Instr, Operand};

/// Record-at-a-time check. Guaranteed cases:
///
/// * the emit count is a constant (0 or 1) on every path, or
/// * at most one record is emitted and every branch decision derives
///   exclusively from key attributes and constants, so records that agree on
///   the key follow the same path.
pub(crate) fn rat_kgp(
    ctx: &Ctx,
    keys: &BTreeSet<(usize, usize)>,
    bounds: (u64, Option<u64>),
) -> bool {
    match bounds {
        (_, Some(0)) => true,
        (1, Some(1)) => true,
        (_, Some(1)) => branches_depend_only_on(ctx, keys),
        _ => false,
    }
}

fn branches_depend_only_on(ctx: &Ctx, keys: &BTreeSet<(usize, usize)>) -> bool {
    for line in &ctx.program.lines {
        match &line.instr {
            Instr::Branch { left, right, .. } => {
                for operand in [left, right] {
                    if let Operand::Var(v) = operand {
                        let mut visited = BTreeSet::new();
                        if !key_derived(ctx, line.label, v, keys, &mut visited) {
                            return false;
                        }
                    }
                }
            }
            // List iteration in a record-at-a-time UDF is malformed; the
            // emit count cannot be related to the key.
            Instr::BranchHasNext { .. } => return false,
            _ => {}
        }
    }
    true
}

/// Whether every value that can flow into `var` at `label` originates from
/// key-position `getField`s or constants.
fn key_derived(
    ctx: &Ctx,
    label: u32,
    var: &str,
    keys: &BTreeSet<(usize, usize)>,
    visited: &mut BTreeSet<(u32, String)>,
) -> bool {
    if !visited.insert((label, var.to_string())) {
        return true; // a cycle adds no new origins
    }
    let defs = ctx.du.defs_of(label, var);
    if defs.is_empty() {
        return false;
    }
    let operand_ok = |ctx: &Ctx, d: u32, op: &Operand, visited: &mut BTreeSet<(u32, String)>| {
        match op {
            Operand::Const(_) => true,
            Operand::Var(v) => key_derived(ctx, d, v, keys, visited),
        }
    };
    for d in defs {
        if d == ctx.program.header_label {
            return false; // a record parameter used as a scalar
        }
        let ok = match ctx.instr_at(d) {
            Some(Instr::GetField { input, pos, .. }) => match ctx.record_origin(d, input) {
                RecordOrigin::Param(i) => keys.contains(&(i, *pos)),
                _ => false,
            },
            Some(Instr::Assign { value, .. }) => operand_ok(ctx, d, value, visited),
            Some(Instr::Arith { left, right, .. }) => {
                operand_ok(ctx, d, left, visited) && operand_ok(ctx, d, right, visited)
            }
            Some(Instr::Neg { operand, .. }) => operand_ok(ctx, d, operand, visited),
            _ => false,
        };
        if !ok {
            return false;
        }
    }
    true
}

/// Key-at-a-time check: recognizes the canonical one-record-in,
/// one-record-out loop, which preserves any grouping of its input:
///
/// ```text
/// <scalar prologue>
/// H: if(!hasNext($l)) goto E
/// B: $r:=next($l) ... emit(..) ... goto H
/// E: <no emits>
/// ```
///
/// The body must be straight-line, emit a record constructed in this
/// iteration, and any explicit field copy must read the current record.
pub(crate) fn kat_one_to_one(ctx: &Ctx) -> bool {
    let p = ctx.program;
    if p.params.len() != 1 || !p.is_kat() {
        return false;
    }

    let mut nexts = Vec::new();
    let mut hasnexts = Vec::new();
    let mut emits = Vec::new();
    for (i, line) in p.lines.iter().enumerate() {
        match &line.instr {
            Instr::Next { .. } => nexts.push(i),
            Instr::BranchHasNext { .. } => hasnexts.push(i),
            Instr::Emit { .. } => emits.push(i),
            Instr::Reset { .. } => return false,
            _ => {}
        }
    }
    let (&next_idx, &hn_idx, &emit_idx) = match (&nexts[..], &hasnexts[..], &emits[..]) {
        ([n], [h], [e]) => (n, h, e),
        _ => return false,
    };

    let cfg = ctx.cfg;
    let header = cfg.block_of[hn_idx];
    // The header holds exactly the hasNext branch, negated toward the exit.
    let hb = &cfg.blocks[header];
    if hb.end - hb.start != 1 {
        return false;
    }
    let (exit_label, negated) = match &p.lines[hn_idx].instr {
        Instr::BranchHasNext { negated, target, .. } => (*target, *negated),
        _ => unreachable!(),
    };
    if !negated {
        return false;
    }
    let exit = match p.line_index(exit_label) {
        Some(i) => cfg.block_of[i],
        None => return false,
    };
    // Fallthrough into the body.
    let body = match hb.succs.iter().find(|&&s| s != exit) {
        Some(&b) => b,
        None => return false,
    };
    let bb = &cfg.blocks[body];
    if cfg.block_of[next_idx] != body
        || cfg.block_of[emit_idx] != body
        || next_idx != bb.start
        || next_idx >= emit_idx
    {
        return false;
    }
    // The body loops straight back to the header.
    if bb.succs != vec![header] || !matches!(p.lines[bb.end - 1].instr, Instr::Goto { .. }) {
        return false;
    }

    // Prologue: entry reaches the header through straight-line scalar code.
    let mut b = cfg.entry;
    let mut seen = BTreeSet::new();
    while b != header {
        if !seen.insert(b) || b == body || b == exit {
            return false;
        }
        if cfg.blocks[b].succs.len() != 1 {
            return false;
        }
        b = cfg.blocks[b].succs[0];
    }

    // The exit region must not re-enter the loop.
    let mut stack = vec![exit];
    let mut reach = BTreeSet::new();
    while let Some(x) = stack.pop() {
        if !reach.insert(x) {
            continue;
        }
        if x == header || x == body {
            return false;
        }
        stack.extend(cfg.blocks[x].succs.iter().copied());
    }

    let next_label = p.lines[next_idx].label;
    let in_body_before = |label: u32, limit_idx: usize| -> Option<usize> {
        let idx = p.line_index(label)?;
        (cfg.block_of[idx] == body && idx < limit_idx).then_some(idx)
    };

    // The emitted record must be constructed in this iteration: either the
    // freshly pulled record itself, or a copy/create made in the body before
    // the emit, where a copy's source is the current record.
    let emit_var = match &p.lines[emit_idx].instr {
        Instr::Emit { rec } => rec,
        _ => unreachable!(),
    };
    let emit_defs = ctx.du.defs_of(p.lines[emit_idx].label, emit_var);
    if emit_defs.len() != 1 {
        return false;
    }
    let ctor_label = *emit_defs.iter().next().unwrap();
    let from_current = |label: u32, var: &str| -> bool {
        ctx.du.defs_of(label, var) == BTreeSet::from([next_label])
    };
    match (in_body_before(ctor_label, emit_idx), ctor_label == next_label) {
        (_, true) => {} // emit($r) — the pulled record itself
        (Some(ci), false) => match &p.lines[ci].instr {
            Instr::Create { .. } => {}
            Instr::Copy { source, .. } => {
                if !from_current(p.lines[ci].label, source) {
                    return false;
                }
            }
            _ => return false,
        },
        (None, false) => return false,
    }

    // Explicit copies inside the body must read the current record; a value
    // carried over from a previous iteration would silently reshuffle
    // attribute values between group members.
    for idx in bb.start..bb.end {
        if let Instr::SetField { pos, value, .. } = &p.lines[idx].instr {
            if ctx.classify_setfield(p.lines[idx].label, *pos, value)
                == crate::sca::FieldOp::ExplicitCopy
            {
                let var = match value {
                    Operand::Var(v) => v,
                    _ => return false,
                };
                let defs = ctx.du.defs_of(p.lines[idx].label, var);
                if defs.len() != 1 {
                    return false;
                }
                let g = *defs.iter().next().unwrap();
                let gi = match in_body_before(g, idx) {
                    Some(gi) => gi,
                    None => return false,
                };
                match &p.lines[gi].instr {
                    Instr::GetField { input, .. } => {
                        if !from_current(p.lines[gi].label, input) {
                            return false;
                        }
                    }
                    _ => return false,
                }
            }
        }
    }

    true
}
