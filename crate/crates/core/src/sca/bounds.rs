//! Emit-count bounds from the control flow graph.
//!
//! The bounds cover every terminating execution of the UDF:
//!
//! * **lower** — the minimum number of `emit`s over all simple entry-to-exit
//!   block paths. Removing the cycles from a real execution path yields a
//!   simple path with at most as many emits, so this never exceeds the true
//!   minimum.
//! * **upper** — unbounded if any `emit` lies on a cycle; otherwise the
//!   maximum over simple paths, since cycle removal then drops no emits.
//!
//! Path enumeration is exponential in the worst case; past a search budget
//! the bounds degrade to the always-sound `(0, unbounded)`.

use crate::tac::cfg::Cfg;
use crate::tac::{Instr, UdfProgram};

const PATH_SEARCH_BUDGET: u64 = 1_000_000;

/// `(lower, upper)` bounds on the records emitted by one invocation;
/// `None` means unbounded.
pub fn emit_bounds(p: &UdfProgram, cfg: &Cfg) -> (u64, Option<u64>) {
    if p.lines.is_empty() {
        return (0, Some(0));
    }
    let emits_in: Vec<u64> = cfg
        .blocks
        .iter()
        .map(|b| {
            p.lines[b.start..b.end]
                .iter()
                .filter(|l| matches!(l.instr, Instr::Emit { .. }))
                .count() as u64
        })
        .collect();

    let on_cycle = cfg.on_cycle();
    let emit_on_cycle = p
        .lines
        .iter()
        .enumerate()
        .any(|(i, l)| matches!(l.instr, Instr::Emit { .. }) && on_cycle[i]);

    let mut min: Option<u64> = None;
    let mut max: u64 = 0;
    let mut visited = vec![false; cfg.blocks.len()];
    let mut steps: u64 = 0;
    let exhausted = !walk(
        cfg,
        &emits_in,
        cfg.entry,
        0,
        &mut visited,
        &mut min,
        &mut max,
        &mut steps,
    );
    if exhausted {
        return (0, None);
    }

    let lower = min.unwrap_or(0);
    let upper = if emit_on_cycle { None } else { Some(max) };
    (lower, upper)
}

/// Depth-first simple-path walk; returns `false` once the budget is spent.
#[allow(clippy::too_many_arguments)]
fn walk(
    cfg: &Cfg,
    emits_in: &[u64],
    block: usize,
    count: u64,
    visited: &mut Vec<bool>,
    min: &mut Option<u64>,
    max: &mut u64,
    steps: &mut u64,
) -> bool {
    *steps += 1;
    if *steps > PATH_SEARCH_BUDGET {
        return false;
    }
    visited[block] = true;
    let count = count + emits_in[block];
    if cfg.blocks[block].succs.is_empty() {
        *min = Some(min.map_or(count, |m| m.min(count)));
        *max = (*max).max(count);
    } else {
        for &s in &cfg.blocks[block].succs {
            if !visited[s] && !walk(cfg, emits_in, s, count, visited, min, max, steps) {
                visited[block] = false;
                return false;
            }
        }
    }
    visited[block] = false;
    true
}
