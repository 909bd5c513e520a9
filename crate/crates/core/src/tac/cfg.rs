//! Control flow graph, dominators, and def-use chains for UDF programs.
//!
//! Blocks are maximal straight-line instruction runs; an edge exists for the
//! taken and not-taken sides of branches and for fallthrough. Def-use
//! information comes from a standard reaching-definitions fixpoint at
//! instruction granularity. `setField` counts as a use (not a definition) of
//! the record variable, so the constructor that created an output record
//! always reaches its `emit`.

use std::collections::{BTreeMap, BTreeSet};

use crate::tac::{Instr, Operand, UdfProgram};

#[derive(Clone, Debug)]
pub struct BasicBlock {
    /// Index range into `UdfProgram::lines`, end exclusive.
    pub start: usize,
    pub end: usize,
    pub succs: Vec<usize>,
    pub preds: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    /// Block index of each instruction.
    pub block_of: Vec<usize>,
    pub entry: usize,
}

impl Cfg {
    /// Blocks with no successors (ending in `return` or falling off the end).
    pub fn exits(&self) -> Vec<usize> {
        (0..self.blocks.len()).filter(|b| self.blocks[*b].succs.is_empty()).collect()
    }

    /// Dominator sets per block, computed by the standard iterative fixpoint
    /// over reverse postorder. Unreachable blocks dominate nothing and are
    /// reported as dominated by everything, which is harmless for our use.
    pub fn dominators(&self) -> Vec<BTreeSet<usize>> {
        let n = self.blocks.len();
        let all: BTreeSet<usize> = (0..n).collect();
        let mut dom: Vec<BTreeSet<usize>> = vec![all.clone(); n];
        dom[self.entry] = BTreeSet::from([self.entry]);
        let mut changed = true;
        while changed {
            changed = false;
            for b in 0..n {
                if b == self.entry {
                    continue;
                }
                let mut new: Option<BTreeSet<usize>> = None;
                for &p in &self.blocks[b].preds {
                    new = Some(match new {
                        None => dom[p].clone(),
                        Some(acc) => acc.intersection(&dom[p]).copied().collect(),
                    });
                }
                let mut new = new.unwrap_or_default();
                new.insert(b);
                if new != dom[b] {
                    dom[b] = new;
                    changed = true;
                }
            }
        }
        dom
    }

    /// True iff instruction `a` dominates instruction `b`: every path from
    /// entry to `b` passes through `a` first.
    pub fn instr_dominates(&self, a: usize, b: usize, dom: &[BTreeSet<usize>]) -> bool {
        let (ba, bb) = (self.block_of[a], self.block_of[b]);
        if ba == bb {
            return a <= b;
        }
        dom[bb].contains(&ba)
    }

    /// Instruction indices lying on some cycle, i.e. those whose block can
    /// reach itself.
    pub fn on_cycle(&self) -> Vec<bool> {
        let n = self.blocks.len();
        let mut reach = vec![vec![false; n]; n];
        for (b, blk) in self.blocks.iter().enumerate() {
            for &s in &blk.succs {
                reach[b][s] = true;
            }
        }
        for k in 0..n {
            // Row k is stable during round k: merging it into itself is a
            // no-op, so a snapshot is safe.
            let row_k = reach[k].clone();
            for row in reach.iter_mut() {
                if row[k] {
                    for (j, &r) in row_k.iter().enumerate() {
                        if r {
                            row[j] = true;
                        }
                    }
                }
            }
        }
        self.block_of.iter().map(|&b| reach[b][b]).collect()
    }
}

/// Builds the CFG of a program. Leaders are the first instruction, all jump
/// targets, and every instruction after a jump or return.
pub fn build_cfg(p: &UdfProgram) -> Cfg {
    let n = p.lines.len();
    if n == 0 {
        return Cfg {
            blocks: vec![BasicBlock { start: 0, end: 0, succs: vec![], preds: vec![] }],
            block_of: vec![],
            entry: 0,
        };
    }
    let mut leaders = BTreeSet::from([0usize]);
    for (i, line) in p.lines.iter().enumerate() {
        match line.instr {
            Instr::Branch { target, .. } | Instr::BranchHasNext { target, .. } => {
                leaders.insert(p.line_index(target).expect("validated label"));
                if i + 1 < n {
                    leaders.insert(i + 1);
                }
            }
            Instr::Goto { target } => {
                leaders.insert(p.line_index(target).expect("validated label"));
                if i + 1 < n {
                    leaders.insert(i + 1);
                }
            }
            Instr::Return if i + 1 < n => {
                leaders.insert(i + 1);
            }
            _ => {}
        }
    }
    let starts: Vec<usize> = leaders.into_iter().collect();
    let mut blocks = Vec::with_capacity(starts.len());
    let mut block_of = vec![0usize; n];
    for (bi, &start) in starts.iter().enumerate() {
        let end = starts.get(bi + 1).copied().unwrap_or(n);
        for item in block_of.iter_mut().take(end).skip(start) {
            *item = bi;
        }
        blocks.push(BasicBlock { start, end, succs: vec![], preds: vec![] });
    }
    let block_at = |instr: usize| block_of[instr];
    for block in blocks.iter_mut() {
        let last = block.end - 1;
        let mut succs = Vec::new();
        match p.lines[last].instr {
            Instr::Goto { target } => succs.push(block_at(p.line_index(target).unwrap())),
            Instr::Branch { target, .. } | Instr::BranchHasNext { target, .. } => {
                succs.push(block_at(p.line_index(target).unwrap()));
                if last + 1 < n {
                    succs.push(block_at(last + 1));
                }
            }
            Instr::Return => {}
            _ => {
                if last + 1 < n {
                    succs.push(block_at(last + 1));
                }
            }
        }
        succs.dedup();
        block.succs = succs;
    }
    for bi in 0..blocks.len() {
        for s in blocks[bi].succs.clone() {
            blocks[s].preds.push(bi);
        }
    }
    Cfg { blocks, block_of, entry: 0 }
}

/// Variables read by an instruction.
pub fn uses(instr: &Instr) -> Vec<&str> {
    fn op(o: &Operand) -> Option<&str> {
        match o {
            Operand::Var(v) => Some(v.as_str()),
            Operand::Const(_) => None,
        }
    }
    match instr {
        Instr::GetField { input, .. } => vec![input],
        Instr::SetField { out, value, .. } => {
            let mut u = vec![out.as_str()];
            u.extend(op(value));
            u
        }
        Instr::Copy { source, .. } => vec![source],
        Instr::Concat { left, right, .. } => vec![left, right],
        Instr::Emit { rec } => vec![rec],
        Instr::Assign { value, .. } => op(value).into_iter().collect(),
        Instr::Arith { left, right, .. } => op(left).into_iter().chain(op(right)).collect(),
        Instr::Neg { operand, .. } => op(operand).into_iter().collect(),
        Instr::Branch { left, right, .. } => op(left).into_iter().chain(op(right)).collect(),
        Instr::BranchHasNext { input, .. } => vec![input],
        Instr::Next { input, .. } => vec![input],
        Instr::Reset { input } => vec![input],
        Instr::Create { .. } | Instr::Return | Instr::Goto { .. } => vec![],
    }
}

/// The variable defined by an instruction, if any.
pub fn def(instr: &Instr) -> Option<&str> {
    match instr {
        Instr::GetField { target, .. }
        | Instr::Copy { target, .. }
        | Instr::Create { target }
        | Instr::Concat { target, .. }
        | Instr::Assign { target, .. }
        | Instr::Arith { target, .. }
        | Instr::Neg { target, .. }
        | Instr::Next { target, .. } => Some(target),
        _ => None,
    }
}

/// Def-use chains. Keys are (instruction label, variable name). Input
/// parameters are treated as defined at the header label.
#[derive(Clone, Debug, Default)]
pub struct DefUseInfo {
    /// For a use site: the definitions that may reach it.
    pub use_def: BTreeMap<(u32, String), BTreeSet<u32>>,
    /// For a definition site: the uses it may reach.
    pub def_use: BTreeMap<(u32, String), BTreeSet<u32>>,
}

impl DefUseInfo {
    pub fn defs_of(&self, label: u32, var: &str) -> BTreeSet<u32> {
        self.use_def.get(&(label, var.to_string())).cloned().unwrap_or_default()
    }

    pub fn uses_of(&self, label: u32, var: &str) -> BTreeSet<u32> {
        self.def_use.get(&(label, var.to_string())).cloned().unwrap_or_default()
    }
}

/// Computes reaching definitions and derives both chain directions.
pub fn compute_def_use(p: &UdfProgram, cfg: &Cfg) -> DefUseInfo {
    type Defs = BTreeMap<String, BTreeSet<u32>>;

    let nblocks = cfg.blocks.len();
    let mut ins: Vec<Defs> = vec![Defs::new(); nblocks];
    let mut outs: Vec<Defs> = vec![Defs::new(); nblocks];

    let mut entry_defs = Defs::new();
    for (name, _) in &p.params {
        entry_defs.insert(name.clone(), BTreeSet::from([p.header_label]));
    }

    let transfer = |block: &BasicBlock, input: &Defs| -> Defs {
        let mut cur = input.clone();
        for line in &p.lines[block.start..block.end] {
            if let Some(d) = def(&line.instr) {
                cur.insert(d.to_string(), BTreeSet::from([line.label]));
            }
        }
        cur
    };

    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..nblocks {
            let mut input = if b == cfg.entry { entry_defs.clone() } else { Defs::new() };
            for &pred in &cfg.blocks[b].preds {
                for (var, defs) in &outs[pred] {
                    input.entry(var.clone()).or_default().extend(defs.iter().copied());
                }
            }
            let out = transfer(&cfg.blocks[b], &input);
            if input != ins[b] || out != outs[b] {
                ins[b] = input;
                outs[b] = out;
                changed = true;
            }
        }
    }

    let mut info = DefUseInfo::default();
    for (b, block) in cfg.blocks.iter().enumerate() {
        let mut cur = ins[b].clone();
        for line in &p.lines[block.start..block.end] {
            for used in uses(&line.instr) {
                let defs = cur.get(used).cloned().unwrap_or_default();
                info.use_def.insert((line.label, used.to_string()), defs.clone());
                for d in defs {
                    info.def_use.entry((d, used.to_string())).or_default().insert(line.label);
                }
            }
            if let Some(d) = def(&line.instr) {
                cur.insert(d.to_string(), BTreeSet::from([line.label]));
            }
        }
    }
    info
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tac::parse::parse_udf;

    const F2: &str = "\
20: f2(InputRecord $ir)
21: $a:=getField($ir,0)
22: if($a<0) goto 25
23: $or:=copy($ir)
24: emit($or)
25: return
";

    /// Independent leader count: first instruction, jump targets, and
    /// instructions following jumps.
    fn leader_count(p: &UdfProgram) -> usize {
        let mut leaders = std::collections::BTreeSet::from([0usize]);
        for (i, line) in p.lines.iter().enumerate() {
            match line.instr {
                Instr::Branch { target, .. }
                | Instr::Goto { target }
                | Instr::BranchHasNext { target, .. } => {
                    leaders.insert(p.line_index(target).unwrap());
                    if i + 1 < p.lines.len() {
                        leaders.insert(i + 1);
                    }
                }
                Instr::Return if i + 1 < p.lines.len() => {
                    leaders.insert(i + 1);
                }
                _ => {}
            }
        }
        leaders.len()
    }

    #[test]
    fn filter_udf_has_three_blocks() {
        let p = parse_udf(F2).unwrap();
        let cfg = build_cfg(&p);
        assert_eq!(cfg.blocks.len(), 3);
        assert_eq!(cfg.blocks.len(), leader_count(&p));
        // Block 0 = {21,22} branches to both the copy block and the return.
        assert_eq!(cfg.blocks[0].succs.len(), 2);
        // The copy/emit block falls through to return.
        assert_eq!(cfg.blocks[1].succs, vec![2]);
        assert!(cfg.blocks[2].succs.is_empty());
    }

    #[test]
    fn straight_line_is_one_block() {
        let src = "1: f(InputRecord $i)\n2: $a:=getField($i,0)\n3: $or:=copy($i)\n4: emit($or)\n5: return\n";
        let p = parse_udf(src).unwrap();
        let cfg = build_cfg(&p);
        assert_eq!(cfg.blocks.len(), 1);
        assert_eq!(cfg.blocks.len(), leader_count(&p));
    }

    #[test]
    fn loop_produces_a_cycle() {
        let src = "\
40: g(RecordList $rl)
41: $s:=0
42: if(!hasNext($rl)) goto 46
43: $r:=next($rl)
44: $s:=$s+1
45: goto 42
46: return
";
        let p = parse_udf(src).unwrap();
        let cfg = build_cfg(&p);
        let on_cycle = cfg.on_cycle();
        let i43 = p.line_index(43).unwrap();
        let i41 = p.line_index(41).unwrap();
        let i46 = p.line_index(46).unwrap();
        assert!(on_cycle[i43]);
        assert!(!on_cycle[i41]);
        assert!(!on_cycle[i46]);
    }

    #[test]
    fn def_use_chains_for_the_filter() {
        let p = parse_udf(F2).unwrap();
        let cfg = build_cfg(&p);
        let du = compute_def_use(&p, &cfg);
        assert_eq!(du.uses_of(21, "$a"), BTreeSet::from([22]));
        assert_eq!(du.defs_of(22, "$a"), BTreeSet::from([21]));
        // The parameter is defined at the header and used at 21 and 23.
        assert_eq!(du.uses_of(20, "$ir"), BTreeSet::from([21, 23]));
        // The copied record reaches the emit.
        assert_eq!(du.defs_of(24, "$or"), BTreeSet::from([23]));
    }

    #[test]
    fn dead_definition_has_no_uses() {
        let src = "1: f(InputRecord $i)\n2: $a:=getField($i,0)\n3: $or:=copy($i)\n4: emit($or)\n5: return\n";
        let p = parse_udf(src).unwrap();
        let cfg = build_cfg(&p);
        let du = compute_def_use(&p, &cfg);
        assert!(du.uses_of(2, "$a").is_empty());
    }

    /// Hand-computed chains on a diamond where both arms redefine the
    /// variable: the join's use sees exactly the two arm definitions.
    #[test]
    fn both_arm_redefinitions_reach_the_join() {
        let src = "\
1: f(InputRecord $i)
2: $a:=getField($i,0)
3: if($a<0) goto 6
4: $b:=1
5: goto 7
6: $b:=2
7: $c:=$b+0
8: return
";
        let p = parse_udf(src).unwrap();
        let cfg = build_cfg(&p);
        let du = compute_def_use(&p, &cfg);
        assert_eq!(du.defs_of(7, "$b"), BTreeSet::from([4, 6]));
        assert_eq!(du.uses_of(4, "$b"), BTreeSet::from([7]));
        assert_eq!(du.uses_of(6, "$b"), BTreeSet::from([7]));
    }

    #[test]
    fn setfield_does_not_kill_the_constructor() {
        let src = "\
1: f(InputRecord $i)
2: $or:=copy($i)
3: $v:=getField($i,1)
4: setField($or,1,$v)
5: emit($or)
6: return
";
        let p = parse_udf(src).unwrap();
        let cfg = build_cfg(&p);
        let du = compute_def_use(&p, &cfg);
        // The emit's record variable traces back to the copy constructor.
        assert_eq!(du.defs_of(5, "$or"), BTreeSet::from([2]));
    }

    #[test]
    fn dominators_on_a_diamond() {
        let src = "\
1: f(InputRecord $i)
2: $a:=getField($i,0)
3: if($a<0) goto 5
4: goto 6
5: $a:=0
6: $or:=copy($i)
7: emit($or)
8: return
";
        let p = parse_udf(src).unwrap();
        let cfg = build_cfg(&p);
        let dom = cfg.dominators();
        let join = cfg.block_of[p.line_index(6).unwrap()];
        let entry = cfg.block_of[p.line_index(2).unwrap()];
        let arm = cfg.block_of[p.line_index(5).unwrap()];
        assert!(dom[join].contains(&entry));
        assert!(!dom[join].contains(&arm));
    }
}
