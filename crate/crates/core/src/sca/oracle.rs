//! Behavioural ground truth for the static estimates.
//!
//! These oracles determine read/write sets, created positions, and key-group
//! preservation by exhaustively running a UDF over small input instances and
//! observing its outputs — no code inspection at all. They exist to keep the
//! static analysis honest: every static estimate must contain the oracle's
//! set, and a static key-group-preservation claim must hold behaviourally.
//!
//! The behavioural definitions, in the concatenated output position space:
//!
//! * **read** — `(input, position)` is read if perturbing only that value can
//!   change the output cardinality or any output value *at another position*.
//!   A difference confined to the perturbed position itself does not count: a
//!   UDF that overwrites a field without the old value influencing anything
//!   else did not read it in any reorder-relevant sense.
//! * **write** — a position is written if some emitted record carries a value
//!   there that the input did not have (for list inputs: that no record of
//!   the group had). A missing value where the input had one counts.
//! * **created** — positions beyond all inputs that ever hold a value.
//! * **key-group preservation** — per-record UDFs must emit at most one
//!   record, with a count uniform across records agreeing on the key;
//!   per-group UDFs must emit exactly one record per consumed record.
//!
//! Costs grow exponentially with total arity and list length; use
//! [`OracleConfig::compact`] for binary or key-at-a-time UDFs.

use std::collections::{BTreeMap, BTreeSet};

use crate::tac::interp::{run_udf, LocalModel, UdfInput};
use crate::tac::UdfProgram;
use crate::value::{Record, Value};

#[derive(Clone, Debug)]
pub struct OracleConfig {
    /// Values each attribute ranges over.
    pub domain: Vec<Value>,
    /// Largest group size for list inputs (groups are never empty).
    pub max_list_len: usize,
    /// Instruction budget per invocation; runs that exceed it are skipped
    /// like any other erroring run.
    pub step_budget: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            domain: (-2..=2).map(Value::Int).collect(),
            max_list_len: 2,
            step_budget: 100_000,
        }
    }
}

impl OracleConfig {
    /// A smaller instance space that keeps exhaustive enumeration fast for
    /// binary or key-at-a-time UDFs.
    pub fn compact() -> OracleConfig {
        OracleConfig {
            domain: (-1..=1).map(Value::Int).collect(),
            max_list_len: 1,
            step_budget: 100_000,
        }
    }
}

/// All `(input, position)` pairs whose value can influence the rest of the
/// output, determined by perturbation.
pub fn read_set(
    program: &UdfProgram,
    in_arities: &[usize],
    cfg: &OracleConfig,
) -> BTreeSet<(usize, usize)> {
    let mut read = BTreeSet::new();
    for input in instances(program, in_arities, cfg) {
        let base = run(program, in_arities, &input, cfg);
        for (param, rec, pos) in sites(&input) {
            if read.contains(&(param, pos)) {
                continue;
            }
            let excl = offset(in_arities, param) + pos;
            let orig = get_site(&input, param, rec, pos);
            for alt in &cfg.domain {
                if *alt == orig {
                    continue;
                }
                let mut perturbed = input.clone();
                set_site(&mut perturbed, param, rec, pos, alt.clone());
                let other = run(program, in_arities, &perturbed, cfg);
                if let (Some(a), Some(b)) = (&base, &other) {
                    if differs_beyond(a, b, excl) {
                        read.insert((param, pos));
                        break;
                    }
                }
            }
        }
    }
    read
}

/// All written input positions plus all created output positions, observed
/// over emitted records.
pub fn write_set(
    program: &UdfProgram,
    in_arities: &[usize],
    cfg: &OracleConfig,
) -> (BTreeSet<(usize, usize)>, BTreeSet<usize>) {
    let total: usize = in_arities.iter().sum();
    let mut write = BTreeSet::new();
    let mut created = BTreeSet::new();
    for input in instances(program, in_arities, cfg) {
        let Some(out) = run(program, in_arities, &input, cfg) else {
            continue;
        };
        for o in &out {
            for g in 0..total {
                let ov = o.0.get(g).cloned().unwrap_or(Value::Absent);
                let (i, n) = split(in_arities, g).expect("g < total");
                let unchanged = match &input {
                    UdfInput::Records(recs) => recs[i].0.get(n) == Some(&ov),
                    UdfInput::Lists(lists) => {
                        lists[i].iter().any(|r| r.0.get(n) == Some(&ov))
                    }
                };
                if !unchanged {
                    write.insert((i, n));
                }
            }
            for g in total..o.arity() {
                if o.0[g] != Value::Absent {
                    created.insert(g);
                }
            }
        }
    }
    (write, created)
}

/// Whether the UDF preserves key groups for `keys`, behaviourally.
pub fn kgp(
    program: &UdfProgram,
    in_arities: &[usize],
    keys: &BTreeSet<(usize, usize)>,
    cfg: &OracleConfig,
) -> bool {
    if program.is_kat() {
        for input in instances(program, in_arities, cfg) {
            let Some(out) = run(program, in_arities, &input, cfg) else {
                continue;
            };
            let UdfInput::Lists(lists) = &input else { unreachable!() };
            let consumed: usize = lists.iter().map(Vec::len).sum();
            if out.len() != consumed {
                return false;
            }
        }
        true
    } else {
        let mut counts: BTreeMap<Vec<Value>, BTreeSet<usize>> = BTreeMap::new();
        for input in instances(program, in_arities, cfg) {
            let Some(out) = run(program, in_arities, &input, cfg) else {
                continue;
            };
            if out.len() > 1 {
                return false;
            }
            let UdfInput::Records(recs) = &input else { unreachable!() };
            let key: Vec<Value> = keys
                .iter()
                .map(|&(i, n)| recs[i].0.get(n).cloned().unwrap_or(Value::Absent))
                .collect();
            counts.entry(key).or_default().insert(out.len());
        }
        counts.values().all(|c| c.len() <= 1)
    }
}

fn run(
    program: &UdfProgram,
    in_arities: &[usize],
    input: &UdfInput,
    cfg: &OracleConfig,
) -> Option<Vec<Record>> {
    run_udf(program, &LocalModel::new(in_arities.to_vec()), input, cfg.step_budget).ok()
}

fn offset(in_arities: &[usize], input: usize) -> usize {
    in_arities[..input].iter().sum()
}

fn split(in_arities: &[usize], pos: usize) -> Option<(usize, usize)> {
    let mut off = 0;
    for (i, &a) in in_arities.iter().enumerate() {
        if pos < off + a {
            return Some((i, pos - off));
        }
        off += a;
    }
    None
}

/// Output lists differ somewhere other than position `excl`: in cardinality,
/// or record-by-record at some other position (shorter records padded out).
fn differs_beyond(a: &[Record], b: &[Record], excl: usize) -> bool {
    if a.len() != b.len() {
        return true;
    }
    for (x, y) in a.iter().zip(b) {
        for k in 0..x.arity().max(y.arity()) {
            if k == excl {
                continue;
            }
            let xv = x.0.get(k).cloned().unwrap_or(Value::Absent);
            let yv = y.0.get(k).cloned().unwrap_or(Value::Absent);
            if xv != yv {
                return true;
            }
        }
    }
    false
}

fn product<T: Clone>(per_slot: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut acc: Vec<Vec<T>> = vec![Vec::new()];
    for slot in per_slot {
        let mut next = Vec::with_capacity(acc.len() * slot.len());
        for prefix in &acc {
            for item in slot {
                let mut v = prefix.clone();
                v.push(item.clone());
                next.push(v);
            }
        }
        acc = next;
    }
    acc
}

fn records_over(domain: &[Value], arity: usize) -> Vec<Record> {
    product(&vec![domain.to_vec(); arity]).into_iter().map(Record).collect()
}

fn lists_over(domain: &[Value], arity: usize, max_len: usize) -> Vec<Vec<Record>> {
    let recs = records_over(domain, arity);
    (1..=max_len).flat_map(|len| product(&vec![recs.clone(); len])).collect()
}

/// Every input instance over the configured domain.
fn instances(program: &UdfProgram, in_arities: &[usize], cfg: &OracleConfig) -> Vec<UdfInput> {
    if program.is_kat() {
        let per: Vec<Vec<Vec<Record>>> = in_arities
            .iter()
            .map(|&a| lists_over(&cfg.domain, a, cfg.max_list_len))
            .collect();
        product(&per).into_iter().map(UdfInput::Lists).collect()
    } else {
        let per: Vec<Vec<Record>> =
            in_arities.iter().map(|&a| records_over(&cfg.domain, a)).collect();
        product(&per).into_iter().map(UdfInput::Records).collect()
    }
}

/// All mutable value locations of an instance, as `(input, record, position)`.
fn sites(input: &UdfInput) -> Vec<(usize, usize, usize)> {
    match input {
        UdfInput::Records(recs) => recs
            .iter()
            .enumerate()
            .flat_map(|(i, r)| (0..r.arity()).map(move |n| (i, 0, n)))
            .collect(),
        UdfInput::Lists(lists) => lists
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.iter()
                    .enumerate()
                    .flat_map(move |(j, r)| (0..r.arity()).map(move |n| (i, j, n)))
            })
            .collect(),
    }
}

fn get_site(input: &UdfInput, param: usize, rec: usize, pos: usize) -> Value {
    match input {
        UdfInput::Records(recs) => recs[param].0[pos].clone(),
        UdfInput::Lists(lists) => lists[param][rec].0[pos].clone(),
    }
}

fn set_site(input: &mut UdfInput, param: usize, rec: usize, pos: usize, value: Value) {
    match input {
        UdfInput::Records(recs) => recs[param].0[pos] = value,
        UdfInput::Lists(lists) => lists[param][rec].0[pos] = value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sca::analyze_udf;
    use crate::tac::parse::parse_udf;

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

    fn cfg() -> OracleConfig {
        OracleConfig::default()
    }

    #[test]
    fn abs_reads_nothing_behaviourally() {
        // Flipping the sign only ever changes the flipped position itself,
        // which the read definition excludes. The static estimate still
        // reports the position — a sound over-approximation.
        let p = parse_udf(ABS_B).unwrap();
        assert_eq!(read_set(&p, &[2], &cfg()), BTreeSet::new());
        let a = analyze_udf(&p, &[2]).unwrap();
        assert!(a.read.is_superset(&read_set(&p, &[2], &cfg())));
    }

    #[test]
    fn abs_writes_its_field() {
        let p = parse_udf(ABS_B).unwrap();
        let (w, c) = write_set(&p, &[2], &cfg());
        assert_eq!(w, BTreeSet::from([(0, 1)]));
        assert!(c.is_empty());
    }

    #[test]
    fn filter_reads_its_predicate_and_writes_nothing() {
        let p = parse_udf(FILTER_A).unwrap();
        assert_eq!(read_set(&p, &[2], &cfg()), BTreeSet::from([(0, 0)]));
        let (w, c) = write_set(&p, &[2], &cfg());
        assert!(w.is_empty());
        assert!(c.is_empty());
    }

    #[test]
    fn sum_reads_only_the_surviving_field() {
        // Perturbing position 0 changes the output only at position 0, which
        // is excluded; perturbing position 1 shifts the sum at position 0.
        let p = parse_udf(SUM_INTO_A).unwrap();
        assert_eq!(read_set(&p, &[2], &cfg()), BTreeSet::from([(0, 1)]));
        let (w, _) = write_set(&p, &[2], &cfg());
        assert_eq!(w, BTreeSet::from([(0, 0)]));
    }

    #[test]
    fn added_attribute_makes_its_source_a_read() {
        let src = "\
1: f(InputRecord $i)
2: $a:=getField($i,0)
3: $or:=copy($i)
4: setField($or,2,$a)
5: emit($or)
6: return
";
        let p = parse_udf(src).unwrap();
        assert_eq!(read_set(&p, &[2], &cfg()), BTreeSet::from([(0, 0)]));
        let (w, c) = write_set(&p, &[2], &cfg());
        assert!(w.is_empty());
        assert_eq!(c, BTreeSet::from([2]));
    }

    #[test]
    fn projection_writes_the_dropped_positions() {
        let src = "\
1: f(InputRecord $i)
2: $a:=getField($i,0)
3: $or:=create()
4: setField($or,0,$a)
5: emit($or)
6: return
";
        let p = parse_udf(src).unwrap();
        let (w, c) = write_set(&p, &[3], &cfg());
        assert_eq!(w, BTreeSet::from([(0, 1), (0, 2)]));
        assert!(c.is_empty());
    }

    #[test]
    fn join_udf_reads_both_sides() {
        let src = "\
1: j(InputRecord $l, InputRecord $r)
2: $a:=getField($l,0)
3: $b:=getField($r,0)
4: $s:=$a+$b
5: $or:=concat($l,$r)
6: setField($or,2,$s)
7: emit($or)
8: return
";
        let p = parse_udf(src).unwrap();
        let c = OracleConfig::compact();
        // Both inputs feed the sum at global position 2, which is neither
        // perturbed position, so both count as reads.
        assert_eq!(read_set(&p, &[1, 1], &c), BTreeSet::from([(0, 0), (1, 0)]));
        let (w, created) = write_set(&p, &[1, 1], &c);
        assert!(w.is_empty());
        assert_eq!(created, BTreeSet::from([2]));
    }

    #[test]
    fn one_to_one_loop_counts_match_group_sizes() {
        let src = "\
40: g(RecordList $rl)
41: $n:=0
42: if(!hasNext($rl)) goto 49
43: $r:=next($rl)
44: $or:=copy($r)
45: $n:=$n+1
46: setField($or,2,$n)
47: emit($or)
48: goto 42
49: return
";
        let p = parse_udf(src).unwrap();
        assert!(kgp(&p, &[2], &BTreeSet::new(), &cfg()));
        // Nothing is read: outputs only move with their own positions and
        // the independent counter.
        assert_eq!(read_set(&p, &[2], &cfg()), BTreeSet::new());
        let (w, c) = write_set(&p, &[2], &cfg());
        assert!(w.is_empty());
        assert_eq!(c, BTreeSet::from([2]));
    }

    #[test]
    fn condensing_loop_fails_group_preservation() {
        let src = "\
1: g(RecordList $rl)
2: $sum:=0
3: if(!hasNext($rl)) goto 8
4: $r:=next($rl)
5: $b:=getField($r,1)
6: $sum:=$sum+$b
7: goto 3
8: $or:=create()
9: setField($or,0,$sum)
10: emit($or)
11: return
";
        let p = parse_udf(src).unwrap();
        assert!(!kgp(&p, &[2], &BTreeSet::new(), &cfg()));
        // The sum lands at position 0, away from each contributing (_, 1).
        assert_eq!(read_set(&p, &[2], &cfg()), BTreeSet::from([(0, 1)]));
    }

    #[test]
    fn filter_preserves_groups_of_its_own_attribute_only() {
        let p = parse_udf(FILTER_A).unwrap();
        assert!(kgp(&p, &[2], &BTreeSet::from([(0, 0)]), &cfg()));
        assert!(!kgp(&p, &[2], &BTreeSet::from([(0, 1)]), &cfg()));
        assert!(!kgp(&p, &[2], &BTreeSet::new(), &cfg()));
    }

    #[test]
    fn single_emit_udfs_preserve_all_groups() {
        for src in [ABS_B, SUM_INTO_A] {
            let p = parse_udf(src).unwrap();
            assert!(kgp(&p, &[2], &BTreeSet::new(), &cfg()));
            assert!(kgp(&p, &[2], &BTreeSet::from([(0, 0)]), &cfg()));
        }
    }

    #[test]
    fn static_estimates_contain_the_oracle_sets() {
        let cases: [(&str, &[usize]); 3] = [
            (ABS_B, &[2]),
            (FILTER_A, &[2]),
            (SUM_INTO_A, &[2]),
        ];
        for (src, arities) in cases {
            let p = parse_udf(src).unwrap();
            let a = analyze_udf(&p, arities).unwrap();
            assert!(a.read.is_superset(&read_set(&p, arities, &cfg())), "{}", p.name);
            let (w, c) = write_set(&p, arities, &cfg());
            assert!(a.write.is_superset(&w), "{}", p.name);
            assert!(a.created.is_superset(&c), "{}", p.name);
        }
    }

    #[test]
    fn erroring_runs_are_skipped_not_misread() {
        // Division by the first field errors when it is zero; the oracle must
        // still settle the read set from the surviving instances.
        let src = "\
1: f(InputRecord $i)
2: $a:=getField($i,0)
3: $b:=getField($i,1)
4: $q:=$b/$a
5: $or:=copy($i)
6: setField($or,1,$q)
7: emit($or)
8: return
";
        let p = parse_udf(src).unwrap();
        assert_eq!(read_set(&p, &[2], &cfg()), BTreeSet::from([(0, 0)]));
    }
}
