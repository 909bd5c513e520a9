//! Enumeration of all plans reachable by valid pairwise swaps.
//!
//! [`enumerate_plans`] recursively enumerates the alternatives of every
//! subtree and, for each alternative whose root can be exchanged with the
//! subtree's own root, descends once more with the roles swapped. Results are
//! memoized by the set of operators and sources in the subtree: two subtrees
//! over the same pieces have the same alternatives, because every alternative
//! is itself reachable from every other one.
//!
//! [`swap_traces`] computes the same set a different way — breadth-first
//! exploration applying one swap at a time anywhere in the tree — and
//! additionally yields, for each alternative, the swap sequence from the
//! original plan. The two implementations check each other.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::rc::Rc;

use crate::error::EnumError;
use crate::flow::{Flow, OpProps, PlanNode};
use crate::reorder::swap_options;

/// Tuning for plan enumeration.
#[derive(Clone, Debug)]
pub struct EnumConfig {
    /// Reuse results for subtrees over the same operators and sources.
    pub memo: bool,
    /// Upper bound on generated subplans; exceeding it aborts with
    /// [`EnumError::Budget`].
    pub limit: Option<usize>,
}

impl Default for EnumConfig {
    fn default() -> EnumConfig {
        EnumConfig { memo: true, limit: None }
    }
}

/// All valid reorderings of the flow's plan (including the plan itself), in
/// canonical order.
pub fn enumerate_plans(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    cfg: &EnumConfig,
) -> Result<Vec<PlanNode>, EnumError> {
    let mut e = Enumerator {
        flow,
        props,
        memo: BTreeMap::new(),
        use_memo: cfg.memo,
        limit: cfg.limit,
        generated: 0,
    };
    let alts = e.alts(&flow.root)?;
    Ok(alts.iter().cloned().collect())
}

type MemoKey = (BTreeSet<String>, BTreeSet<String>);

struct Enumerator<'a> {
    flow: &'a Flow,
    props: &'a BTreeMap<String, OpProps>,
    memo: BTreeMap<MemoKey, Rc<BTreeSet<PlanNode>>>,
    use_memo: bool,
    limit: Option<usize>,
    generated: usize,
}

impl Enumerator<'_> {
    fn insert(&mut self, set: &mut BTreeSet<PlanNode>, plan: PlanNode) -> Result<(), EnumError> {
        if set.insert(plan) {
            self.generated += 1;
            if let Some(limit) = self.limit {
                if self.generated > limit {
                    return Err(EnumError::Budget { found: self.generated });
                }
            }
        }
        Ok(())
    }

    fn alts(&mut self, d: &PlanNode) -> Result<Rc<BTreeSet<PlanNode>>, EnumError> {
        let key = (d.op_ids(), d.source_ids());
        if self.use_memo {
            if let Some(hit) = self.memo.get(&key) {
                return Ok(Rc::clone(hit));
            }
        }

        let mut alts: BTreeSet<PlanNode> = BTreeSet::new();
        match d {
            PlanNode::Source(_) => {
                self.insert(&mut alts, d.clone())?;
            }
            PlanNode::Op { id, inputs } => {
                let input_alts: Vec<Vec<PlanNode>> = inputs
                    .iter()
                    .map(|i| self.alts(i).map(|s| s.iter().cloned().collect()))
                    .collect::<Result<_, _>>()?;
                // Descend only once per distinct swapped arrangement.
                let mut descended: BTreeSet<PlanNode> = BTreeSet::new();
                for combo in combos(&input_alts) {
                    let node = PlanNode::Op { id: id.clone(), inputs: combo };
                    for opt in swap_options(self.flow, self.props, &node) {
                        if !opt.verdict.allowed() || !descended.insert(opt.swapped.clone()) {
                            continue;
                        }
                        let PlanNode::Op { id: new_root, inputs: sub } = &opt.swapped else {
                            unreachable!("a swap is rooted at the former child operator");
                        };
                        let sub_alts: Vec<Vec<PlanNode>> = sub
                            .iter()
                            .map(|c| self.alts(c).map(|s| s.iter().cloned().collect()))
                            .collect::<Result<_, _>>()?;
                        for sc in combos(&sub_alts) {
                            self.insert(
                                &mut alts,
                                PlanNode::Op { id: new_root.clone(), inputs: sc },
                            )?;
                        }
                    }
                    self.insert(&mut alts, node)?;
                }
            }
        }

        let rc = Rc::new(alts);
        if self.use_memo {
            self.memo.insert(key, Rc::clone(&rc));
        }
        Ok(rc)
    }
}

/// Cartesian product of the per-input alternative lists.
fn combos(parts: &[Vec<PlanNode>]) -> Vec<Vec<PlanNode>> {
    let mut out: Vec<Vec<PlanNode>> = vec![Vec::new()];
    for part in parts {
        let mut next = Vec::with_capacity(out.len() * part.len());
        for prefix in &out {
            for p in part {
                let mut row = prefix.clone();
                row.push(p.clone());
                next.push(row);
            }
        }
        out = next;
    }
    out
}

/// Every plan reachable from `root` by single swaps, each mapped to the swap
/// descriptions along a shortest path from the original plan (the original
/// maps to an empty trace). Breadth-first, so traces are minimal.
pub fn swap_traces(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    root: &PlanNode,
    limit: Option<usize>,
) -> Result<BTreeMap<PlanNode, Vec<String>>, EnumError> {
    let mut prev: BTreeMap<PlanNode, Option<(PlanNode, String)>> =
        BTreeMap::from([(root.clone(), None)]);
    let mut queue = VecDeque::from([root.clone()]);
    while let Some(plan) = queue.pop_front() {
        for (next, desc) in swaps_anywhere(flow, props, &plan) {
            if prev.contains_key(&next) {
                continue;
            }
            if let Some(l) = limit {
                if prev.len() >= l {
                    return Err(EnumError::Budget { found: prev.len() });
                }
            }
            prev.insert(next.clone(), Some((plan.clone(), desc)));
            queue.push_back(next);
        }
    }

    let mut traces = BTreeMap::new();
    for plan in prev.keys() {
        let mut steps = Vec::new();
        let mut cur = plan;
        while let Some(Some((parent, desc))) = prev.get(cur) {
            steps.push(desc.clone());
            cur = parent;
        }
        steps.reverse();
        traces.insert(plan.clone(), steps);
    }
    Ok(traces)
}

/// The fixpoint of single-swap expansion: an independent cross-check for
/// [`enumerate_plans`].
pub fn closure_plans(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    root: &PlanNode,
    limit: Option<usize>,
) -> Result<BTreeSet<PlanNode>, EnumError> {
    Ok(swap_traces(flow, props, root, limit)?.into_keys().collect())
}

/// All plans one allowed swap away from `node`, each with the swap's
/// description. Swaps apply at any depth.
fn swaps_anywhere(
    flow: &Flow,
    props: &BTreeMap<String, OpProps>,
    node: &PlanNode,
) -> Vec<(PlanNode, String)> {
    let mut out = Vec::new();
    if let PlanNode::Op { id, inputs } = node {
        for opt in swap_options(flow, props, node) {
            if opt.verdict.allowed() {
                out.push((opt.swapped, opt.description));
            }
        }
        for (i, child) in inputs.iter().enumerate() {
            for (sub, desc) in swaps_anywhere(flow, props, child) {
                let mut ch = inputs.clone();
                ch[i] = sub;
                out.push((PlanNode::Op { id: id.clone(), inputs: ch }, desc));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{analyze_flow, parse_flow, Flow, Mode};
    use std::path::Path;

    fn load(dir: &Path, doc: &str, udfs: &[(&str, &str)]) -> (Flow, BTreeMap<String, OpProps>) {
        for (name, text) in udfs {
            std::fs::write(dir.join(name), text).unwrap();
        }
        let flow = parse_flow(doc, dir, "test").unwrap();
        let props = analyze_flow(&flow, Mode::Manual).unwrap().props;
        (flow, props)
    }

    fn plans_of(flow: &Flow, props: &BTreeMap<String, OpProps>, cfg: &EnumConfig) -> Vec<String> {
        enumerate_plans(flow, props, cfg)
            .unwrap()
            .iter()
            .map(|p| p.to_string())
            .collect()
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

    const ABS_A: &str = "\
30: f3(InputRecord $ir)
31: $a:=getField($ir,0)
32: $or:=copy($ir)
33: if ($a>=0) goto 36
34: $a:=-$a
35: setField($or,0,$a)
36: emit($or)
37: return
";

    const CONCAT_JOIN: &str = "\
1: j(InputRecord $l, InputRecord $r)
2: $or:=concat($l,$r)
3: emit($or)
4: return
";

    fn chain_doc() -> &'static str {
        r#"
[[sources]]
id = "src"
path = "src.csv"
attributes = [["A", "int"], ["B", "int"]]

[[operators]]
id = "m1"
kind = "map"
inputs = ["src"]
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
"#
    }

    #[test]
    fn chain_with_one_blocked_pair_gives_three_plans() {
        // m1 touches B, m2 reads A, m3 writes A: m2/m3 conflict, the rest
        // commute freely.
        let dir = tempfile::tempdir().unwrap();
        let (flow, props) = load(
            dir.path(),
            chain_doc(),
            &[("f1.tac", ABS_B), ("f2.tac", FILTER_A), ("f3.tac", ABS_A)],
        );
        let plans = plans_of(&flow, &props, &EnumConfig::default());
        assert_eq!(
            plans,
            vec!["m1(m3(m2(src)))", "m3(m1(m2(src)))", "m3(m2(m1(src)))"]
        );
    }

    #[test]
    fn memoized_and_unmemoized_enumeration_agree() {
        let dir = tempfile::tempdir().unwrap();
        let (flow, props) = load(
            dir.path(),
            chain_doc(),
            &[("f1.tac", ABS_B), ("f2.tac", FILTER_A), ("f3.tac", ABS_A)],
        );
        let with = plans_of(&flow, &props, &EnumConfig { memo: true, limit: None });
        let without = plans_of(&flow, &props, &EnumConfig { memo: false, limit: None });
        assert_eq!(with, without);
    }

    #[test]
    fn closure_oracle_agrees_with_enumeration() {
        let dir = tempfile::tempdir().unwrap();
        let (flow, props) = load(
            dir.path(),
            chain_doc(),
            &[("f1.tac", ABS_B), ("f2.tac", FILTER_A), ("f3.tac", ABS_A)],
        );
        let enumerated: BTreeSet<PlanNode> =
            enumerate_plans(&flow, &props, &EnumConfig::default())
                .unwrap()
                .into_iter()
                .collect();
        let closed = closure_plans(&flow, &props, &flow.root, None).unwrap();
        assert_eq!(enumerated, closed);
    }

    #[test]
    fn budget_aborts_enumeration() {
        let dir = tempfile::tempdir().unwrap();
        let (flow, props) = load(
            dir.path(),
            chain_doc(),
            &[("f1.tac", ABS_B), ("f2.tac", FILTER_A), ("f3.tac", ABS_A)],
        );
        let err = enumerate_plans(&flow, &props, &EnumConfig { memo: true, limit: Some(2) })
            .unwrap_err();
        assert!(matches!(err, EnumError::Budget { .. }));
    }

    #[test]
    fn side_pushes_and_rotations_enumerate() {
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

[[operators]]
id = "m"
kind = "map"
inputs = ["j2"]
udf = "f.tac"

[sink]
input = "m"
"#;
        // f touches RV only (position 1 of the r side).
        let (flow, props) =
            load(dir.path(), doc, &[("join.tac", CONCAT_JOIN), ("f.tac", ABS_B)]);
        let plans = plans_of(&flow, &props, &EnumConfig::default());
        // The map touches only the r side, so it can sink below both joins;
        // j2 keys on s attributes, so it can rotate to pair with s directly.
        assert_eq!(
            plans,
            vec![
                "j1(m(r),j2(s,t))",
                "j2(j1(m(r),s),t)",
                "j2(m(j1(r,s)),t)",
                "m(j1(r,j2(s,t)))",
                "m(j2(j1(r,s),t))",
            ]
        );
        let closed = closure_plans(&flow, &props, &flow.root, None).unwrap();
        let enumerated: BTreeSet<PlanNode> =
            enumerate_plans(&flow, &props, &EnumConfig::default())
                .unwrap()
                .into_iter()
                .collect();
        assert_eq!(enumerated, closed);
    }

    #[test]
    fn traces_follow_single_swaps() {
        let dir = tempfile::tempdir().unwrap();
        let (flow, props) = load(
            dir.path(),
            chain_doc(),
            &[("f1.tac", ABS_B), ("f2.tac", FILTER_A), ("f3.tac", ABS_A)],
        );
        let traces = swap_traces(&flow, &props, &flow.root, None).unwrap();
        assert_eq!(traces.len(), 3);
        assert_eq!(traces[&flow.root], Vec::<String>::new());
        let deep: PlanNode = traces
            .keys()
            .find(|p| p.to_string() == "m1(m3(m2(src)))")
            .unwrap()
            .clone();
        assert_eq!(traces[&deep].len(), 2);
    }
}
