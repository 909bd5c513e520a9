//! Pairwise reordering of adjacent operators in a plan.
//!
//! Every swap between a parent operator and one of its direct child operators
//! is guarded by conditions over the operators' read/write sets, emit bounds,
//! key-group preservation, and — for grouping operators crossing a two-input
//! operator — coverage of the abandoned side's attributes. All checks are
//! conservative: a condition that cannot be established fails, which only
//! suppresses alternatives, never admits an unsound one.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::flow::{Flow, OpDef, OpKind, OpProps, PlanNode};
use crate::value::AttributeId;

/// One named check contributing to a swap verdict.
#[derive(Clone, Debug)]
pub struct Condition {
    pub name: &'static str,
    pub holds: bool,
    pub detail: String,
}

/// The full set of checks for one candidate swap.
#[derive(Clone, Debug)]
pub struct ReorderVerdict {
    /// Which rule produced the conditions, e.g. `map-reduce`.
    pub rule: &'static str,
    pub conditions: Vec<Condition>,
}

impl ReorderVerdict {
    pub fn allowed(&self) -> bool {
        self.conditions.iter().all(|c| c.holds)
    }

    /// The failing conditions, for reporting.
    pub fn failures(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.holds)
    }
}

/// A candidate exchange of a plan node's root with one of its child
/// operators, together with the verdict. `swapped` is the rewritten subtree
/// (rooted at the former child); it is only meaningful when the verdict
/// allows the swap.
#[derive(Clone, Debug)]
pub struct SwapOption {
    pub parent: String,
    pub child: String,
    pub description: String,
    pub swapped: PlanNode,
    pub verdict: ReorderVerdict,
}

fn op_node(id: &str, inputs: Vec<PlanNode>) -> PlanNode {
    PlanNode::Op { id: id.to_string(), inputs }
}

fn names(flow: &Flow, attrs: &BTreeSet<AttributeId>) -> String {
    flow.attr_names(attrs).join(", ")
}

/// A condition requiring two attribute sets to be disjoint.
fn disjoint(
    name: &'static str,
    flow: &Flow,
    what: String,
    x: &BTreeSet<AttributeId>,
    y: &BTreeSet<AttributeId>,
) -> Condition {
    let shared: BTreeSet<AttributeId> = x.intersection(y).copied().collect();
    let holds = shared.is_empty();
    let detail = if holds {
        format!("{what}: none")
    } else {
        format!("{what}: {}", names(flow, &shared))
    };
    Condition { name, holds, detail }
}

/// The read/write overlap checks between two operators: neither may read
/// what the other writes, and their writes must not overlap. Read sets here
/// include the operators' own key attributes.
fn roc(flow: &Flow, a: &str, pa: &OpProps, b: &str, pb: &OpProps) -> Vec<Condition> {
    vec![
        disjoint(
            "read-write",
            flow,
            format!("attributes read by {a} and written by {b}"),
            &pa.read,
            &pb.write,
        ),
        disjoint(
            "write-read",
            flow,
            format!("attributes written by {a} and read by {b}"),
            &pa.write,
            &pb.read,
        ),
        disjoint(
            "write-write",
            flow,
            format!("attributes written by both {a} and {b}"),
            &pa.write,
            &pb.write,
        ),
    ]
}

fn kgp_over(
    name: &'static str,
    flow: &Flow,
    op: &str,
    p: &OpProps,
    keys: &BTreeSet<AttributeId>,
) -> Condition {
    let holds = p.kgp(keys);
    let verb = if holds { "preserves" } else { "may break" };
    Condition {
        name,
        holds,
        detail: format!("{op} {verb} record groups keyed by {{{}}}", names(flow, keys)),
    }
}

fn nonempty_key(
    flow: &Flow,
    op: &str,
    k_eff: &BTreeSet<AttributeId>,
) -> Condition {
    Condition {
        name: "residual-key",
        holds: !k_eff.is_empty(),
        detail: if k_eff.is_empty() {
            format!("no attribute of {op}'s grouping key remains below the swap")
        } else {
            format!("{op} keeps grouping key {{{}}}", names(flow, k_eff))
        },
    }
}

/// The grouping key of `op` restricted to the attributes available in a
/// region of the plan. Attributes outside the region are uniformly absent
/// there, so they do not split groups.
fn effective_key(op: &OpDef, region: &BTreeSet<AttributeId>) -> BTreeSet<AttributeId> {
    op.key.iter().copied().filter(|a| region.contains(a)).collect()
}

/// The key attributes a two-input operator applies to input slot `slot`.
fn slot_key(op: &OpDef, slot: usize) -> BTreeSet<AttributeId> {
    let side = if slot == 0 { &op.key_left } else { &op.key_right };
    side.iter().copied().collect()
}

fn side_name(slot: usize) -> &'static str {
    if slot == 0 {
        "left"
    } else {
        "right"
    }
}

/// Why moving an operator below one side of a cogroup needs more than
/// disjoint attribute sets: a cogroup consumes whole key groups, and a key
/// present on only one side still produces an invocation. Records it emits
/// without carrying a near-side input (say, copies of far-side records)
/// would pass through `u` above but bypass it below, so the move is only
/// safe when every emission carries the side `u` lands on. A match or cross
/// needs no such check — each of its outputs stems from one joined pair, so
/// per-side record counts propagate the same way on both orders.
fn carries_side(j: &OpDef, pj: &OpProps, near_slot: usize) -> Condition {
    let holds = pj.anchors_input(near_slot);
    let side = side_name(near_slot);
    Condition {
        name: "emissions-carry-side",
        holds,
        detail: if holds {
            format!("every record {j} emits carries its {side} input", j = j.id)
        } else {
            format!("{j} may emit records that do not carry its {side} input", j = j.id)
        },
    }
}

/// Swapping two single-input operators `r(s(below))` into `s(r(below))`.
fn unary_unary(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    r: &OpDef,
    s: &OpDef,
    below: &PlanNode,
) -> ReorderVerdict {
    let pr = &props[&r.id];
    let ps = &props[&s.id];
    let mut conditions = roc(flow, &r.id, pr, &s.id, ps);
    let region = flow.plan_attrs(below);

    let rule = match (r.kind, s.kind) {
        (OpKind::Map, OpKind::Map) => "map-map",
        (OpKind::Map, OpKind::Reduce) | (OpKind::Reduce, OpKind::Map) => {
            let (map_id, pm, red) = if r.kind == OpKind::Map {
                (&r.id, pr, s)
            } else {
                (&s.id, ps, r)
            };
            let k_eff = effective_key(red, &region);
            conditions.push(kgp_over("key-groups", flow, map_id, pm, &k_eff));
            "map-reduce"
        }
        (OpKind::Reduce, OpKind::Reduce) => {
            conditions.push(kgp_over("key-groups", flow, &r.id, pr, &effective_key(s, &region)));
            conditions.push(kgp_over("key-groups", flow, &s.id, ps, &effective_key(r, &region)));
            "reduce-reduce"
        }
        _ => unreachable!("single-input operators are maps or reduces"),
    };
    ReorderVerdict { rule, conditions }
}

/// Moving a single-input operator `u` across a two-input operator `j`.
/// After the move, `u` sits on the subtree `near` (input slot `near_slot` of
/// `j`), while the subtree `far` stays on `j`'s other side. The same
/// conditions govern both directions (pushing `u` down from above `j`, or
/// pulling it up from below).
fn unary_past_binary(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    u: &OpDef,
    j: &OpDef,
    near: &PlanNode,
    far: &PlanNode,
    near_slot: usize,
) -> ReorderVerdict {
    let pu = &props[&u.id];
    let pj = &props[&j.id];
    let mut conditions = roc(flow, &u.id, pu, &j.id, pj);
    let far_attrs = flow.plan_attrs(far);

    // Grouping-only use of the far side is exempt (covered separately), so
    // this check uses the read set before key augmentation.
    let touched: BTreeSet<AttributeId> = pu.raw_read.union(&pu.write).copied().collect();
    conditions.push(disjoint(
        "side-containment",
        flow,
        format!(
            "attributes of {j}'s {side} input used by {u}",
            j = j.id,
            side = side_name(1 - near_slot),
            u = u.id
        ),
        &touched,
        &far_attrs,
    ));

    let rule = match (u.kind, j.kind) {
        (OpKind::Map, OpKind::Cross) => "map-cross",
        (OpKind::Map, OpKind::Match) => "map-match",
        (OpKind::Map, OpKind::CoGroup) => {
            conditions.push(kgp_over("key-groups", flow, &u.id, pu, &slot_key(j, near_slot)));
            conditions.push(carries_side(j, pj, near_slot));
            "map-cogroup"
        }
        (OpKind::Reduce, OpKind::Cross | OpKind::Match) => {
            let key: BTreeSet<AttributeId> = u.key.iter().copied().collect();
            let near_attrs = flow.plan_attrs(near);
            let k_eff = effective_key(u, &near_attrs);

            let mut wide = k_eff.clone();
            wide.extend(far_attrs.iter().copied());
            conditions.push(kgp_over("key-groups", flow, &j.id, pj, &wide));

            if j.kind == OpKind::Match {
                let jk = slot_key(j, near_slot);
                let covered = jk.is_subset(&k_eff);
                conditions.push(Condition {
                    name: "predicate-within-key",
                    holds: covered,
                    detail: if covered {
                        format!(
                            "{j}'s key on the grouped side ({{{}}}) lies inside {u}'s key",
                            names(flow, &jk),
                            j = j.id,
                            u = u.id
                        )
                    } else {
                        format!(
                            "{j} compares {{{}}}, which {u} does not group by",
                            names(flow, &jk),
                            j = j.id,
                            u = u.id
                        )
                    },
                });
            }

            conditions.push(coverage(flow, u, &key, j, near_slot, far, &far_attrs));
            conditions.push(nonempty_key(flow, &u.id, &k_eff));
            if j.kind == OpKind::Match {
                "reduce-match"
            } else {
                "reduce-cross"
            }
        }
        (OpKind::Reduce, OpKind::CoGroup) => {
            let key: BTreeSet<AttributeId> = u.key.iter().copied().collect();
            let near_attrs = flow.plan_attrs(near);
            let k_eff = effective_key(u, &near_attrs);
            conditions.push(kgp_over("key-groups", flow, &j.id, pj, &k_eff));
            conditions.push(kgp_over("key-groups", flow, &u.id, pu, &slot_key(j, near_slot)));
            conditions.push(disjoint(
                "key-within-side",
                flow,
                format!("attributes of {u}'s key on {j}'s far side", u = u.id, j = j.id),
                &key,
                &far_attrs,
            ));
            conditions.push(nonempty_key(flow, &u.id, &k_eff));
            conditions.push(carries_side(j, pj, near_slot));
            "reduce-cogroup"
        }
        _ => unreachable!("u is single-input, j is two-input"),
    };
    ReorderVerdict { rule, conditions }
}

/// Why moving a grouping operator past a two-input operator keeps groups
/// intact even though the far side's attributes leave its key: either the key
/// already covers them, or the far side cannot contribute more than one
/// record per group.
fn coverage(
    flow: &Flow,
    u: &OpDef,
    key: &BTreeSet<AttributeId>,
    j: &OpDef,
    near_slot: usize,
    far: &PlanNode,
    far_attrs: &BTreeSet<AttributeId>,
) -> Condition {
    let name = "key-coverage";
    if far_attrs.is_subset(key) {
        return Condition {
            name,
            holds: true,
            detail: format!(
                "{u}'s grouping key covers every attribute of the far side",
                u = u.id
            ),
        };
    }
    if let PlanNode::Source(y) = far {
        if flow.sources[y].singleton {
            return Condition {
                name,
                holds: true,
                detail: format!("source {y} is declared a singleton"),
            };
        }
        if j.kind == OpKind::Match {
            // Invariant grouping: the join pins exactly one far-side record
            // per grouped record when the join pairs a declared foreign key
            // with a unique key of the far source.
            let near_key = if near_slot == 0 { &j.key_left } else { &j.key_right };
            let far_key = if near_slot == 0 { &j.key_right } else { &j.key_left };
            let join_pairs: BTreeSet<(AttributeId, AttributeId)> =
                near_key.iter().copied().zip(far_key.iter().copied()).collect();
            for src in flow.sources.values() {
                for fk in &src.foreign_keys {
                    if fk.to_source != *y {
                        continue;
                    }
                    let fk_pairs: BTreeSet<(AttributeId, AttributeId)> =
                        fk.from.iter().copied().zip(fk.to.iter().copied()).collect();
                    if !fk_pairs.is_empty() && fk_pairs.is_subset(&join_pairs) {
                        return Condition {
                            name,
                            holds: true,
                            detail: format!(
                                "{j} joins the foreign key of {src} to the unique key of {y}, \
                                 so each group sees one {y} record",
                                j = j.id,
                                src = src.id
                            ),
                        };
                    }
                }
            }
        }
    }
    Condition {
        name,
        holds: false,
        detail: format!(
            "needs {u}'s key to cover the far side, a singleton far input, \
             or a join pairing a foreign key with the far source's unique key",
            u = u.id
        ),
    }
}

/// Rotating two two-input operators. `keep` is the child's subtree that stays
/// with it; `t` is the parent's other subtree, which the parent takes along.
fn rotation(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    r: &OpDef,
    s: &OpDef,
    keep: &PlanNode,
    t: &PlanNode,
) -> ReorderVerdict {
    let pr = &props[&r.id];
    let ps = &props[&s.id];
    let mut conditions = Vec::new();

    let rat = |k: OpKind| matches!(k, OpKind::Match | OpKind::Cross);
    let kinds_ok = rat(r.kind) && rat(s.kind);
    conditions.push(Condition {
        name: "rotation-kinds",
        holds: kinds_ok,
        detail: if kinds_ok {
            "both operators work record-at-a-time".to_string()
        } else {
            format!(
                "rotating a grouping operator ({}) is not supported",
                if rat(r.kind) { &s.id } else { &r.id }
            )
        },
    });
    conditions.extend(roc(flow, &r.id, pr, &s.id, ps));

    let t_attrs = flow.plan_attrs(t);
    let s_touched: BTreeSet<AttributeId> = ps.read.union(&ps.write).copied().collect();
    conditions.push(disjoint(
        "child-avoids-far-side",
        flow,
        format!("attributes of {r}'s other input used by {s}", r = r.id, s = s.id),
        &s_touched,
        &t_attrs,
    ));

    let keep_attrs = flow.plan_attrs(keep);
    let r_touched: BTreeSet<AttributeId> = pr.read.union(&pr.write).copied().collect();
    conditions.push(disjoint(
        "parent-avoids-kept-side",
        flow,
        format!("attributes of the input staying with {s} used by {r}", s = s.id, r = r.id),
        &r_touched,
        &keep_attrs,
    ));

    ReorderVerdict { rule: "join-rotation", conditions }
}

/// All candidate swaps between `node`'s root operator and its direct child
/// operators, including refused ones (with their failing conditions). The
/// `swapped` tree of each option has the former child as its new root.
pub fn swap_options(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    node: &PlanNode,
) -> Vec<SwapOption> {
    let PlanNode::Op { id: r_id, inputs } = node else {
        return Vec::new();
    };
    let r = flow.op(r_id);
    let mut out = Vec::new();

    for (x, child) in inputs.iter().enumerate() {
        let PlanNode::Op { id: s_id, inputs: s_in } = child else {
            continue;
        };
        let s = flow.op(s_id);
        match (r.kind.arity(), s.kind.arity()) {
            (1, 1) => {
                let below = &s_in[0];
                let verdict = unary_unary(flow, props, r, s, below);
                let swapped = op_node(s_id, vec![op_node(r_id, vec![below.clone()])]);
                out.push(SwapOption {
                    parent: r_id.clone(),
                    child: s_id.clone(),
                    description: format!("{r_id} pushed below {s_id}"),
                    swapped,
                    verdict,
                });
            }
            (1, 2) => {
                for side in 0..2 {
                    let near = &s_in[side];
                    let far = &s_in[1 - side];
                    let verdict = unary_past_binary(flow, props, r, s, near, far, side);
                    let mut ch = s_in.clone();
                    ch[side] = op_node(r_id, vec![near.clone()]);
                    out.push(SwapOption {
                        parent: r_id.clone(),
                        child: s_id.clone(),
                        description: format!(
                            "{r_id} pushed to the {} input of {s_id}",
                            side_name(side)
                        ),
                        swapped: op_node(s_id, ch),
                        verdict,
                    });
                }
            }
            (2, 1) => {
                let below = &s_in[0];
                let far = &inputs[1 - x];
                let verdict = unary_past_binary(flow, props, s, r, below, far, x);
                let mut rch = inputs.clone();
                rch[x] = below.clone();
                out.push(SwapOption {
                    parent: r_id.clone(),
                    child: s_id.clone(),
                    description: format!("{s_id} pulled above {r_id}"),
                    swapped: op_node(s_id, vec![op_node(r_id, rch)]),
                    verdict,
                });
            }
            (2, 2) => {
                let t = &inputs[1 - x];
                for sigma in 0..2 {
                    let keep = &s_in[1 - sigma];
                    let verdict = rotation(flow, props, r, s, keep, t);
                    let mut rch = inputs.clone();
                    rch[x] = s_in[sigma].clone();
                    let mut sch = s_in.clone();
                    sch[sigma] = op_node(r_id, rch);
                    out.push(SwapOption {
                        parent: r_id.clone(),
                        child: s_id.clone(),
                        description: format!(
                            "{r_id} rotated below {s_id}, pairing with its {} input",
                            side_name(sigma)
                        ),
                        swapped: op_node(s_id, sch),
                        verdict,
                    });
                }
            }
            _ => unreachable!("operator arity is 1 or 2"),
        }
    }
    out
}

/// The swap options between two specific operators wherever they are
/// adjacent in `plan` (either one on top). Empty if they never touch.
pub fn options_between(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    plan: &PlanNode,
    a: &str,
    b: &str,
) -> Vec<SwapOption> {
    let mut found = Vec::new();
    collect_between(flow, props, plan, a, b, &mut found);
    found
}

fn collect_between(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    node: &PlanNode,
    a: &str,
    b: &str,
    out: &mut Vec<SwapOption>,
) {
    if let PlanNode::Op { id, inputs } = node {
        let child_ids: Vec<&str> = inputs.iter().filter_map(|c| c.root_op()).collect();
        let adjacent = (id == a && child_ids.contains(&b)) || (id == b && child_ids.contains(&a));
        if adjacent {
            out.extend(swap_options(flow, props, node).into_iter().filter(|o| {
                (o.parent == a && o.child == b) || (o.parent == b && o.child == a)
            }));
        }
        for c in inputs {
            collect_between(flow, props, c, a, b, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{analyze_flow, parse_flow, Mode};
    use std::path::Path;

    fn load(dir: &Path, doc: &str, udfs: &[(&str, &str)]) -> (Flow, BTreeMap<String, OpProps>) {
        for (name, text) in udfs {
            std::fs::write(dir.join(name), text).unwrap();
        }
        let flow = parse_flow(doc, dir, "test").unwrap();
        let props = analyze_flow(&flow, Mode::Manual).unwrap().props;
        (flow, props)
    }

    const ABS_B: &str = "\
10: f1(InputRecord $ir)
11: $b:=getField($ir,1)
12: $or:=copy($ir)
13: if ($b>=0) goto 16
14: $b:=-$b
15: setField($or,1,$b)
16: emit($or)
17: return
";

    const FILTER_A: &str = "\
20: f2(InputRecord $ir)
21: $a:=getField($ir,0)
22: if($a<0) goto 25
23: $or:=copy($ir)
24: emit($or)
25: return
";

    const SUM_INTO_A: &str = "\
30: f3(InputRecord $ir)
31: $a:=getField($ir,0)
32: $b:=getField($ir,1)
33: $sum:=$a+$b
34: $or:=copy($ir)
35: setField($or,0,$sum)
36: emit($or)
37: return
";

    const ODD_FILTER: &str = "\
1: f(InputRecord $ir)
2: $a:=getField($ir,0)
3: $h:=$a/2
4: $t:=$h*2
5: if($t==$a) goto 12
6: $b:=getField($ir,1)
7: $h:=$b/2
8: $t:=$h*2
9: if($t==$b) goto 12
10: $or:=copy($ir)
11: emit($or)
12: return
";

    const SUM_B_APPEND_C: &str = "\
1: g(RecordList $rl)
2: $sum:=0
3: if(!hasNext($rl)) goto 8
4: $r:=next($rl)
5: $b:=getField($r,1)
6: $sum:=$sum+$b
7: goto 3
8: reset($rl)
9: if(!hasNext($rl)) goto 15
10: $r:=next($rl)
11: $or:=copy($r)
12: setField($or,2,$sum)
13: emit($or)
14: goto 9
15: return
";

    const PASS_GROUP: &str = "\
1: g(RecordList $rl)
2: if(!hasNext($rl)) goto 6
3: $r:=next($rl)
4: emit($r)
5: goto 2
6: return
";

    const CONCAT_JOIN: &str = "\
1: j(InputRecord $l, InputRecord $r)
2: $or:=concat($l,$r)
3: emit($or)
4: return
";

    fn verdict_for<'a>(opts: &'a [SwapOption], needle: &str) -> &'a SwapOption {
        opts.iter()
            .find(|o| o.description.contains(needle))
            .unwrap_or_else(|| panic!("no option matching {needle:?}"))
    }

    #[test]
    fn map_chain_swaps_follow_read_write_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let doc = r#"
[[sources]]
id = "input"
path = "input.csv"
attributes = [["A", "int"], ["B", "int"]]

[[operators]]
id = "m1"
kind = "map"
inputs = ["input"]
udf = "f1.tac"

[[operators]]
id = "m2"
kind = "map"
inputs = ["m1"]
udf = "f2.tac"

[[operators]]
id = "m3"
kind = "map"
inputs = ["m2"]
udf = "f3.tac"

[sink]
input = "m3"
"#;
        let (flow, props) = load(
            dir.path(),
            doc,
            &[("f1.tac", ABS_B), ("f2.tac", FILTER_A), ("f3.tac", SUM_INTO_A)],
        );

        // m3 over m2: m3 writes A which m2 reads.
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts.len(), 1);
        assert_eq!(opts[0].verdict.rule, "map-map");
        assert!(!opts[0].verdict.allowed());
        let failed: Vec<_> = opts[0].verdict.failures().map(|c| c.name).collect();
        assert_eq!(failed, vec!["write-read"]);
        assert!(opts[0].verdict.failures().next().unwrap().detail.contains('A'));

        // m2 over m1: disjoint attributes, swap allowed.
        let opts = options_between(&flow, &props, &flow.root, "m1", "m2");
        assert_eq!(opts.len(), 1);
        assert!(opts[0].verdict.allowed());
        assert_eq!(opts[0].swapped.to_string(), "m1(m2(input))");

        // m3 over m1 directly (in the swapped arrangement): B is written by
        // m1 and read by m3.
        let alt = &opts[0].swapped; // m1(m2(input))
        let reordered = PlanNode::Op { id: "m3".into(), inputs: vec![alt.clone()] };
        let opts = swap_options(&flow, &props, &reordered);
        assert!(!opts[0].verdict.allowed());
    }

    #[test]
    fn map_reduce_swap_requires_group_preservation() {
        let dir = tempfile::tempdir().unwrap();
        let doc = r#"
[[sources]]
id = "input"
path = "input.csv"
attributes = [["A", "int"], ["B", "int"]]

[[operators]]
id = "oddfilter"
kind = "map"
inputs = ["input"]
udf = "f.tac"

[[operators]]
id = "sums"
kind = "reduce"
inputs = ["oddfilter"]
key = ["A"]
udf = "g.tac"
adds = ["C"]

[sink]
input = "sums"
"#;
        let (flow, props) =
            load(dir.path(), doc, &[("f.tac", ODD_FILTER), ("g.tac", SUM_B_APPEND_C)]);
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts.len(), 1);
        let v = &opts[0].verdict;
        assert_eq!(v.rule, "map-reduce");
        // The overlap checks all pass; only group preservation fails, because
        // the filter branches on B, which is not part of the key.
        for c in &v.conditions {
            if c.name == "key-groups" {
                assert!(!c.holds, "{}", c.detail);
            } else {
                assert!(c.holds, "{}: {}", c.name, c.detail);
            }
        }
        assert!(!v.allowed());
    }

    #[test]
    fn map_reduce_swap_allowed_when_filter_uses_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let doc = r#"
[[sources]]
id = "input"
path = "input.csv"
attributes = [["A", "int"], ["B", "int"]]

[[operators]]
id = "keyfilter"
kind = "map"
inputs = ["input"]
udf = "f.tac"

[[operators]]
id = "sums"
kind = "reduce"
inputs = ["keyfilter"]
key = ["A"]
udf = "g.tac"
adds = ["C"]

[sink]
input = "sums"
"#;
        let (flow, props) =
            load(dir.path(), doc, &[("f.tac", FILTER_A), ("g.tac", SUM_B_APPEND_C)]);
        let opts = swap_options(&flow, &props, &flow.root);
        assert!(opts[0].verdict.allowed(), "{:?}", opts[0].verdict);
        assert_eq!(opts[0].swapped.to_string(), "keyfilter(sums(input))");
    }

    #[test]
    fn reduce_reduce_needs_one_to_one_both_ways() {
        let dir = tempfile::tempdir().unwrap();
        let doc = r#"
[[sources]]
id = "input"
path = "input.csv"
attributes = [["A", "int"], ["B", "int"], ["V", "int"]]

[[operators]]
id = "byA"
kind = "reduce"
inputs = ["input"]
key = ["A"]
udf = "pass.tac"

[[operators]]
id = "byB"
kind = "reduce"
inputs = ["byA"]
key = ["B"]
udf = "pass.tac"

[sink]
input = "byB"
"#;
        let (flow, props) = load(dir.path(), doc, &[("pass.tac", PASS_GROUP)]);
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts[0].verdict.rule, "reduce-reduce");
        assert!(opts[0].verdict.allowed(), "{:?}", opts[0].verdict);

        // A condensing reduce (one output per group) breaks the other's groups.
        let doc2 = r#"
[[sources]]
id = "input"
path = "input.csv"
attributes = [["A", "int"], ["B", "int"]]

[[operators]]
id = "byA"
kind = "reduce"
inputs = ["input"]
key = ["A"]
udf = "sum.tac"
adds = ["C"]

[[operators]]
id = "byB"
kind = "reduce"
inputs = ["byA"]
key = ["B"]
udf = "pass.tac"

[sink]
input = "byB"
"#;
        std::fs::write(dir.path().join("sum.tac"), SUM_B_APPEND_C).unwrap();
        let flow2 = parse_flow(doc2, dir.path(), "t").unwrap();
        let props2 = analyze_flow(&flow2, Mode::Manual).unwrap().props;
        let opts = swap_options(&flow2, &props2, &flow2.root);
        assert!(!opts[0].verdict.allowed());
        assert!(opts[0].verdict.failures().any(|c| c.name == "key-groups"));
    }

    fn join_doc(extra_ops: &str, sink: &str) -> String {
        format!(
            r#"
[[sources]]
id = "r"
path = "r.csv"
attributes = [["K", "int"], ["V", "int"]]

[[sources]]
id = "s"
path = "s.csv"
attributes = [["F", "int"], ["W", "int"]]

[[operators]]
id = "j"
kind = "match"
inputs = ["r", "s"]
key_left = ["K"]
key_right = ["F"]
udf = "join.tac"
{extra_ops}
[sink]
input = "{sink}"
"#
        )
    }

    #[test]
    fn map_pushes_only_to_the_side_it_touches() {
        let dir = tempfile::tempdir().unwrap();
        let extra = r#"
[[operators]]
id = "m"
kind = "map"
inputs = ["j"]
udf = "f.tac"
"#;
        // f.tac reads/writes V, an attribute of source r (left side).
        let absv = ABS_B; // position 1 of a two-attribute record = V of r
        let (flow, props) = load(
            dir.path(),
            &join_doc(extra, "m"),
            &[("join.tac", CONCAT_JOIN), ("f.tac", absv)],
        );
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts.len(), 2);
        let left = verdict_for(&opts, "left input");
        assert!(left.verdict.allowed(), "{:?}", left.verdict);
        assert_eq!(left.swapped.to_string(), "j(m(r),s)");
        let right = verdict_for(&opts, "right input");
        assert!(!right.verdict.allowed());
        assert!(right.verdict.failures().any(|c| c.name == "side-containment"));
    }

    #[test]
    fn map_below_join_can_be_pulled_above() {
        let dir = tempfile::tempdir().unwrap();
        let doc = r#"
[[sources]]
id = "r"
path = "r.csv"
attributes = [["K", "int"], ["V", "int"]]

[[sources]]
id = "s"
path = "s.csv"
attributes = [["F", "int"], ["W", "int"]]

[[operators]]
id = "m"
kind = "map"
inputs = ["r"]
udf = "f.tac"

[[operators]]
id = "j"
kind = "match"
inputs = ["m", "s"]
key_left = ["K"]
key_right = ["F"]
udf = "join.tac"

[sink]
input = "j"
"#;
        let (flow, props) =
            load(dir.path(), doc, &[("join.tac", CONCAT_JOIN), ("f.tac", ABS_B)]);
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts.len(), 1);
        assert!(opts[0].verdict.allowed(), "{:?}", opts[0].verdict);
        assert_eq!(opts[0].swapped.to_string(), "m(j(r,s))");
    }

    #[test]
    fn reduce_push_past_match_needs_coverage() {
        let dir = tempfile::tempdir().unwrap();
        // Reduce keyed on F (the left side's join attribute), grouping the
        // joined records; pushing it below needs the foreign-key pattern.
        let with_fk = r#"
[[sources]]
id = "lineitems"
path = "l.csv"
attributes = [["F", "int"], ["Q", "int"]]

[[sources.foreign_keys]]
from = ["F"]
to_source = "parts"
to = ["PK"]

[[sources]]
id = "parts"
path = "p.csv"
attributes = [["PK", "int"], ["NAME", "string"]]
unique = [["PK"]]

[[operators]]
id = "j"
kind = "match"
inputs = ["lineitems", "parts"]
key_left = ["F"]
key_right = ["PK"]
udf = "join.tac"

[[operators]]
id = "total"
kind = "reduce"
inputs = ["j"]
key = ["F"]
udf = "g.tac"
adds = ["C"]

[sink]
input = "total"
"#;
        let sum_q = SUM_B_APPEND_C.replace("setField($or,2,$sum)", "setField($or,4,$sum)");
        let (flow, props) =
            load(dir.path(), with_fk, &[("join.tac", CONCAT_JOIN), ("g.tac", &sum_q)]);
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts.len(), 2);
        let left = verdict_for(&opts, "left input");
        assert!(left.verdict.allowed(), "{:?}", left.verdict);
        assert_eq!(left.verdict.rule, "reduce-match");
        assert_eq!(left.swapped.to_string(), "j(total(lineitems),parts)");
        // Pushing toward the parts side regroups by a key that is not there.
        let right = verdict_for(&opts, "right input");
        assert!(!right.verdict.allowed());

        // Without the foreign key, coverage fails.
        let no_fk = with_fk.replace(
            "[[sources.foreign_keys]]\nfrom = [\"F\"]\nto_source = \"parts\"\nto = [\"PK\"]\n",
            "",
        );
        let flow2 = parse_flow(&no_fk, dir.path(), "t").unwrap();
        let props2 = analyze_flow(&flow2, Mode::Manual).unwrap().props;
        let opts2 = swap_options(&flow2, &props2, &flow2.root);
        let left2 = verdict_for(&opts2, "left input");
        assert!(!left2.verdict.allowed());
        assert!(left2.verdict.failures().any(|c| c.name == "key-coverage"));
    }

    #[test]
    fn singleton_far_side_covers_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let doc = r#"
[[sources]]
id = "rows"
path = "rows.csv"
attributes = [["A", "int"], ["B", "int"]]

[[sources]]
id = "config"
path = "config.csv"
attributes = [["LIMIT", "int"]]
singleton = true

[[operators]]
id = "x"
kind = "cross"
inputs = ["rows", "config"]
udf = "join.tac"

[[operators]]
id = "collapse"
kind = "reduce"
inputs = ["x"]
key = ["A"]
udf = "pass.tac"

[sink]
input = "collapse"
"#;
        let (flow, props) =
            load(dir.path(), doc, &[("join.tac", CONCAT_JOIN), ("pass.tac", PASS_GROUP)]);
        let opts = swap_options(&flow, &props, &flow.root);
        let left = verdict_for(&opts, "left input");
        assert!(left.verdict.allowed(), "{:?}", left.verdict);
        assert_eq!(left.verdict.rule, "reduce-cross");
        assert_eq!(left.swapped.to_string(), "x(collapse(rows),config)");

        // Marking the far side non-singleton withdraws the coverage.
        let doc2 = doc.replace("singleton = true", "singleton = false");
        let flow2 = parse_flow(&doc2, dir.path(), "t").unwrap();
        let props2 = analyze_flow(&flow2, Mode::Manual).unwrap().props;
        let opts2 = swap_options(&flow2, &props2, &flow2.root);
        let left2 = verdict_for(&opts2, "left input");
        assert!(!left2.verdict.allowed());
        assert!(left2.verdict.failures().any(|c| c.name == "key-coverage"));
    }

    #[test]
    fn reduce_key_covering_the_far_side_allows_the_push() {
        let dir = tempfile::tempdir().unwrap();
        let doc = r#"
[[sources]]
id = "rows"
path = "rows.csv"
attributes = [["A", "int"], ["B", "int"]]

[[sources]]
id = "tags"
path = "tags.csv"
attributes = [["T", "int"]]

[[operators]]
id = "x"
kind = "cross"
inputs = ["rows", "tags"]
udf = "join.tac"

[[operators]]
id = "collapse"
kind = "reduce"
inputs = ["x"]
key = ["A", "T"]
udf = "pass.tac"

[sink]
input = "collapse"
"#;
        let (flow, props) =
            load(dir.path(), doc, &[("join.tac", CONCAT_JOIN), ("pass.tac", PASS_GROUP)]);
        let opts = swap_options(&flow, &props, &flow.root);
        let left = verdict_for(&opts, "left input");
        assert!(left.verdict.allowed(), "{:?}", left.verdict);
        // The residual key drops T, which stays above with the cross.
        let resid = left.verdict.conditions.iter().find(|c| c.name == "residual-key").unwrap();
        assert!(resid.detail.contains("{A}"), "{}", resid.detail);
    }

    #[test]
    fn join_rotation_conditions() {
        let dir = tempfile::tempdir().unwrap();
        let doc = r#"
[[sources]]
id = "r"
path = "r.csv"
attributes = [["RK", "int"], ["RV", "int"]]

[[sources]]
id = "s"
path = "s.csv"
attributes = [["SK", "int"], ["SF", "int"]]

[[sources]]
id = "t"
path = "t.csv"
attributes = [["TK", "int"], ["TV", "int"]]

[[operators]]
id = "j1"
kind = "match"
inputs = ["r", "s"]
key_left = ["RK"]
key_right = ["SK"]
udf = "join.tac"

[[operators]]
id = "j2"
kind = "match"
inputs = ["j1", "t"]
key_left = ["SF"]
key_right = ["TK"]
udf = "join.tac"

[sink]
input = "j2"
"#;
        let (flow, props) = load(dir.path(), doc, &[("join.tac", CONCAT_JOIN)]);
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts.len(), 2);
        // j2 joins on SF (from s): it can pair with j1's right side (s), but
        // not abandon it.
        let with_s = verdict_for(&opts, "right input");
        assert!(with_s.verdict.allowed(), "{:?}", with_s.verdict);
        assert_eq!(with_s.verdict.rule, "join-rotation");
        assert_eq!(with_s.swapped.to_string(), "j1(r,j2(s,t))");
        let with_r = verdict_for(&opts, "left input");
        assert!(!with_r.verdict.allowed());
        assert!(with_r.verdict.failures().any(|c| c.name == "parent-avoids-kept-side"));
    }

    #[test]
    fn cogroup_rotation_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cg = "\
1: g(RecordList $l, RecordList $r)
2: if(!hasNext($l)) goto 6
3: $x:=next($l)
4: emit($x)
5: goto 2
6: return
";
        let doc = r#"
[[sources]]
id = "r"
path = "r.csv"
attributes = [["RK", "int"]]

[[sources]]
id = "s"
path = "s.csv"
attributes = [["SK", "int"], ["SF", "int"]]

[[sources]]
id = "t"
path = "t.csv"
attributes = [["TK", "int"]]

[[operators]]
id = "cg"
kind = "cogroup"
inputs = ["r", "s"]
key_left = ["RK"]
key_right = ["SK"]
udf = "cg.tac"

[[operators]]
id = "j2"
kind = "match"
inputs = ["cg", "t"]
key_left = ["SF"]
key_right = ["TK"]
udf = "join.tac"

[sink]
input = "j2"
"#;
        let (flow, props) = load(dir.path(), doc, &[("join.tac", CONCAT_JOIN), ("cg.tac", cg)]);
        let opts = swap_options(&flow, &props, &flow.root);
        for o in &opts {
            assert!(!o.verdict.allowed());
            assert!(o.verdict.conditions.iter().any(|c| c.name == "rotation-kinds" && !c.holds));
        }
    }

    #[test]
    fn cogroup_pushes_need_emissions_that_carry_the_landing_side() {
        // The map never emits, so every attribute-overlap and grouping check
        // passes vacuously; whether it may move below the cogroup hinges
        // entirely on which side the cogroup's emissions carry. A key present
        // on one side only still produces records, and those must not dodge
        // the map.
        let dir = tempfile::tempdir().unwrap();
        let drop_all = "1: f(InputRecord $ir)\n2: return\n";
        let union_all = "\
1: g(RecordList $l, RecordList $r)
2: if(!hasNext($l)) goto 6
3: $x:=next($l)
4: emit($x)
5: goto 2
6: if(!hasNext($r)) goto 10
7: $y:=next($r)
8: emit($y)
9: goto 6
10: return
";
        let doc = |adds: &str| {
            format!(
                r#"
[[sources]]
id = "r"
path = "r.csv"
attributes = [["K", "int"], ["V", "int"]]

[[sources]]
id = "s"
path = "s.csv"
attributes = [["F", "int"], ["W", "int"]]

[[operators]]
id = "cg"
kind = "cogroup"
inputs = ["r", "s"]
key_left = ["K"]
key_right = ["F"]
udf = "cg.tac"
{adds}
[[operators]]
id = "m"
kind = "map"
inputs = ["cg"]
udf = "f.tac"

[sink]
input = "m"
"#
            )
        };

        // Union of both sides: records of either side surface alone, so the
        // map may push below neither.
        let (flow, props) = load(
            dir.path(),
            &doc(""),
            &[("cg.tac", union_all), ("f.tac", drop_all)],
        );
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts.len(), 2);
        for o in &opts {
            assert!(!o.verdict.allowed());
            let only_failure: Vec<_> = o.verdict.failures().collect();
            assert_eq!(only_failure.len(), 1, "{:?}", o.verdict);
            assert_eq!(only_failure[0].name, "emissions-carry-side");
        }

        // Annotating each left record with the right group's size anchors
        // every emission to the left side: the map may land there, but not
        // on the right.
        let annotate = "\
1: g(RecordList $l, RecordList $r)
2: $n:=0
3: if(!hasNext($r)) goto 7
4: $y:=next($r)
5: $n:=$n+1
6: goto 3
7: if(!hasNext($l)) goto 13
8: $x:=next($l)
9: $or:=copy($x)
10: setField($or,4,$n)
11: emit($or)
12: goto 7
13: return
";
        let (flow, props) = load(
            dir.path(),
            &doc("adds = [\"N\"]\n"),
            &[("cg.tac", annotate), ("f.tac", drop_all)],
        );
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts.len(), 2);
        let left = verdict_for(&opts, "left input");
        assert!(left.verdict.allowed(), "{:?}", left.verdict);
        assert_eq!(left.swapped.to_string(), "cg(m(r),s)");
        let right = verdict_for(&opts, "right input");
        assert!(!right.verdict.allowed());
        assert!(right.verdict.failures().any(|c| c.name == "emissions-carry-side"));
    }

    #[test]
    fn rebuilt_records_do_not_cross_attribute_creators() {
        // `rebuild` reproduces its input field by field through a fresh
        // record, which silently discards the C attribute `grow` appends.
        // Running it above `grow` would therefore change the output, even
        // though the two touch disjoint positional attributes.
        let dir = tempfile::tempdir().unwrap();
        let rebuild = "\
1: f(InputRecord $ir)
2: $a:=getField($ir,0)
3: $b:=getField($ir,1)
4: $or:=create()
5: setField($or,0,$a)
6: setField($or,1,$b)
7: emit($or)
8: return
";
        let grow = "\
1: g(InputRecord $ir)
2: $b:=getField($ir,1)
3: $or:=copy($ir)
4: setField($or,2,$b)
5: emit($or)
6: return
";
        let doc = r#"
[[sources]]
id = "input"
path = "input.csv"
attributes = [["A", "int"], ["B", "int"]]

[[operators]]
id = "rebuild"
kind = "map"
inputs = ["input"]
udf = "rebuild.tac"

[[operators]]
id = "grow"
kind = "map"
inputs = ["rebuild"]
udf = "grow.tac"
adds = ["C"]

[sink]
input = "grow"
"#;
        let (flow, props) =
            load(dir.path(), doc, &[("rebuild.tac", rebuild), ("grow.tac", grow)]);
        let opts = swap_options(&flow, &props, &flow.root);
        assert_eq!(opts.len(), 1);
        assert!(!opts[0].verdict.allowed());
        assert!(opts[0].verdict.failures().any(|c| c.name == "write-write"));
    }

    #[test]
    fn options_between_finds_adjacency_anywhere() {
        let dir = tempfile::tempdir().unwrap();
        let extra = r#"
[[operators]]
id = "m"
kind = "map"
inputs = ["j"]
udf = "f.tac"
"#;
        let (flow, props) = load(
            dir.path(),
            &join_doc(extra, "m"),
            &[("join.tac", CONCAT_JOIN), ("f.tac", ABS_B)],
        );
        let opts = options_between(&flow, &props, &flow.root, "j", "m");
        assert_eq!(opts.len(), 2);
        assert!(options_between(&flow, &props, &flow.root, "m", "nosuch").is_empty());
    }
}
