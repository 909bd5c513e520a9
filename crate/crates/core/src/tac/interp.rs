//! Interpreter for UDF programs.
//!
//! The interpreter is generic over a [`RecordModel`] that decides how record
//! positions map to storage slots:
//!
//! * [`LocalModel`] — records are exactly as wide as their declared fields;
//!   position `n` is slot `n`. Used for standalone UDF evaluation and the
//!   behavioural oracles.
//! * [`GlobalModel`] — records are carriers over the whole flow's attribute
//!   space; per-operator position maps translate local field positions to
//!   global slots. `copy` clones the full carrier, so attributes acquired
//!   upstream survive through operators that never mention them.

use std::collections::BTreeMap;

use crate::error::ExecError;
use crate::tac::{ArithOp, Cmp, InputKind, Instr, Operand, UdfProgram};
use crate::value::{Record, Value};

/// Default instruction budget for one UDF invocation.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

/// Storage strategy for record positions.
///
/// Output positions always live in the concatenated space of the operator's
/// inputs: the second input's attribute `m` is output position `arity(first
/// input) + m`, and created attributes lie beyond all inputs. `copy_in` and
/// `concat` place values accordingly, so results do not depend on which model
/// executed the UDF.
pub trait RecordModel {
    /// Reads position `pos` of a record bound to input `input`. `None` means
    /// the position is out of range for that input.
    fn get_in(&self, rec: &Record, input: usize, pos: usize) -> Option<Value>;
    /// Reads back position `pos` of an output record under construction.
    fn get_out(&self, rec: &Record, pos: usize) -> Option<Value>;
    /// Clones a record bound to input `input` into a fresh output record.
    fn copy_in(&self, rec: &Record, input: usize) -> Record;
    /// A fresh output record with no fields set.
    fn create(&self) -> Record;
    /// Merges two records already in the output position space; where both
    /// have a value, the first operand wins.
    fn concat(&self, left: &Record, right: &Record) -> Record;
    /// Writes position `pos` of an output record. `false` means out of range.
    fn set_out(&self, rec: &mut Record, pos: usize, value: Value) -> bool;
}

/// Records are exactly as wide as their declared fields; output records grow
/// as fields are set.
#[derive(Clone, Debug, Default)]
pub struct LocalModel {
    /// Declared arity of each input, used to offset copies of later inputs
    /// into the output position space.
    pub in_arities: Vec<usize>,
}

impl LocalModel {
    pub fn new(in_arities: Vec<usize>) -> LocalModel {
        LocalModel { in_arities }
    }

    fn offset(&self, input: usize) -> usize {
        self.in_arities.iter().take(input).sum()
    }
}

impl RecordModel for LocalModel {
    fn get_in(&self, rec: &Record, _input: usize, pos: usize) -> Option<Value> {
        rec.0.get(pos).cloned()
    }

    fn get_out(&self, rec: &Record, pos: usize) -> Option<Value> {
        rec.0.get(pos).cloned()
    }

    fn copy_in(&self, rec: &Record, input: usize) -> Record {
        let mut vals = vec![Value::Absent; self.offset(input)];
        vals.extend(rec.0.iter().cloned());
        Record(vals)
    }

    fn create(&self) -> Record {
        Record(Vec::new())
    }

    fn concat(&self, left: &Record, right: &Record) -> Record {
        let len = left.arity().max(right.arity());
        let vals = (0..len)
            .map(|i| {
                let l = left.0.get(i).cloned().unwrap_or(Value::Absent);
                if l != Value::Absent {
                    l
                } else {
                    right.0.get(i).cloned().unwrap_or(Value::Absent)
                }
            })
            .collect();
        Record(vals)
    }

    fn set_out(&self, rec: &mut Record, pos: usize, value: Value) -> bool {
        rec.set_growing(pos, value);
        true
    }
}

/// Records are fixed-width carriers over a global attribute space.
#[derive(Clone, Debug)]
pub struct GlobalModel {
    /// Per input: local position -> global slot.
    pub in_maps: Vec<Vec<usize>>,
    /// Output position -> global slot.
    pub out_map: Vec<usize>,
    /// Carrier width (total number of global slots).
    pub width: usize,
}

impl RecordModel for GlobalModel {
    fn get_in(&self, rec: &Record, input: usize, pos: usize) -> Option<Value> {
        let slot = *self.in_maps.get(input)?.get(pos)?;
        rec.0.get(slot).cloned()
    }

    fn get_out(&self, rec: &Record, pos: usize) -> Option<Value> {
        let slot = *self.out_map.get(pos)?;
        rec.0.get(slot).cloned()
    }

    fn copy_in(&self, rec: &Record, _input: usize) -> Record {
        rec.clone()
    }

    fn create(&self) -> Record {
        Record(vec![Value::Absent; self.width])
    }

    fn concat(&self, left: &Record, right: &Record) -> Record {
        let vals = (0..self.width)
            .map(|i| {
                let l = left.0.get(i).cloned().unwrap_or(Value::Absent);
                if l != Value::Absent {
                    l
                } else {
                    right.0.get(i).cloned().unwrap_or(Value::Absent)
                }
            })
            .collect();
        Record(vals)
    }

    fn set_out(&self, rec: &mut Record, pos: usize, value: Value) -> bool {
        match self.out_map.get(pos) {
            Some(&slot) if slot < rec.0.len() => {
                rec.0[slot] = value;
                true
            }
            _ => false,
        }
    }
}

/// Input to one UDF invocation, already in the model's record layout.
#[derive(Clone, Debug, PartialEq)]
pub enum UdfInput {
    /// One record per `InputRecord` parameter.
    Records(Vec<Record>),
    /// One list per `RecordList` parameter.
    Lists(Vec<Vec<Record>>),
}

#[derive(Clone, Debug)]
enum Slot {
    Scalar(Value),
    /// A record bound from input `param` (directly or via `next`).
    In { param: usize, rec: Record },
    /// An output record under construction.
    Out(Record),
    /// An alias of list parameter `param`; cursors are shared.
    ListRef(usize),
}

struct Cursor {
    records: Vec<Record>,
    pos: usize,
}

/// Runs a UDF over `input` with the given record model. Returns the emitted
/// records in emission order.
pub fn run_udf<M: RecordModel>(
    program: &UdfProgram,
    model: &M,
    input: &UdfInput,
    budget: u64,
) -> Result<Vec<Record>, ExecError> {
    let hl = program.header_label;
    let invalid = |label: u32, msg: String| ExecError::Invalid { label, msg };

    let mut vars: BTreeMap<String, Slot> = BTreeMap::new();
    let mut cursors: Vec<Option<Cursor>> = Vec::new();
    match input {
        UdfInput::Records(recs) => {
            if recs.len() != program.params.len()
                || program.params.iter().any(|(_, k)| *k != InputKind::Record)
            {
                return Err(invalid(hl, "input shape does not match parameters".into()));
            }
            for (i, (name, _)) in program.params.iter().enumerate() {
                vars.insert(name.clone(), Slot::In { param: i, rec: recs[i].clone() });
                cursors.push(None);
            }
        }
        UdfInput::Lists(lists) => {
            if lists.len() != program.params.len()
                || program.params.iter().any(|(_, k)| *k != InputKind::List)
            {
                return Err(invalid(hl, "input shape does not match parameters".into()));
            }
            for (i, (name, _)) in program.params.iter().enumerate() {
                vars.insert(name.clone(), Slot::ListRef(i));
                cursors.push(Some(Cursor { records: lists[i].clone(), pos: 0 }));
            }
        }
    }

    let mut out: Vec<Record> = Vec::new();
    let mut pc: usize = 0;
    let mut steps: u64 = 0;

    macro_rules! slot_of {
        ($label:expr, $name:expr) => {
            vars.get($name)
                .ok_or_else(|| ExecError::Unbound { label: $label, var: $name.clone() })?
        };
    }

    while pc < program.lines.len() {
        steps += 1;
        if steps > budget {
            return Err(ExecError::StepBudget(budget));
        }
        let line = &program.lines[pc];
        let label = line.label;
        let mut next_pc = pc + 1;
        match &line.instr {
            Instr::GetField { target, input, pos } => {
                let value = match slot_of!(label, input) {
                    Slot::In { param, rec } => model.get_in(rec, *param, *pos),
                    Slot::Out(rec) => model.get_out(rec, *pos),
                    _ => {
                        return Err(invalid(label, format!("getField on non-record {input}")));
                    }
                };
                let value = value.ok_or(ExecError::FieldOutOfRange {
                    label,
                    pos: *pos,
                    arity: arity_hint(&vars, input),
                })?;
                vars.insert(target.clone(), Slot::Scalar(value));
            }
            Instr::SetField { out: rec_var, pos, value } => {
                let value = eval_scalar(&vars, label, value)?;
                match vars.get_mut(rec_var) {
                    Some(Slot::Out(rec)) => {
                        if !model.set_out(rec, *pos, value) {
                            return Err(ExecError::FieldOutOfRange {
                                label,
                                pos: *pos,
                                arity: rec.arity(),
                            });
                        }
                    }
                    Some(_) => {
                        return Err(invalid(
                            label,
                            format!("setField on {rec_var}, which is not an output record"),
                        ));
                    }
                    None => {
                        return Err(ExecError::Unbound { label, var: rec_var.clone() });
                    }
                }
            }
            Instr::Copy { target, source } => {
                let rec = match slot_of!(label, source) {
                    Slot::In { param, rec } => model.copy_in(rec, *param),
                    Slot::Out(rec) => rec.clone(),
                    _ => return Err(invalid(label, format!("copy of non-record {source}"))),
                };
                vars.insert(target.clone(), Slot::Out(rec));
            }
            Instr::Create { target } => {
                vars.insert(target.clone(), Slot::Out(model.create()));
            }
            Instr::Concat { target, left, right } => {
                // Bring both operands into the output position space first.
                let spaced = |slot: &Slot| match slot {
                    Slot::In { param, rec } => Some(model.copy_in(rec, *param)),
                    Slot::Out(rec) => Some(rec.clone()),
                    _ => None,
                };
                let l = spaced(slot_of!(label, left))
                    .ok_or_else(|| invalid(label, format!("concat of non-record {left}")))?;
                let r = spaced(slot_of!(label, right))
                    .ok_or_else(|| invalid(label, format!("concat of non-record {right}")))?;
                vars.insert(target.clone(), Slot::Out(model.concat(&l, &r)));
            }
            Instr::Emit { rec } => match slot_of!(label, rec) {
                Slot::Out(r) => out.push(r.clone()),
                Slot::In { param, rec: r } => out.push(model.copy_in(r, *param)),
                _ => return Err(invalid(label, format!("emit of non-record {rec}"))),
            },
            Instr::Return => break,
            Instr::Assign { target, value } => {
                let slot = match value {
                    Operand::Const(v) => Slot::Scalar(v.clone()),
                    Operand::Var(v) => slot_of!(label, v).clone(),
                };
                vars.insert(target.clone(), slot);
            }
            Instr::Arith { target, op, left, right } => {
                let l = eval_scalar(&vars, label, left)?;
                let r = eval_scalar(&vars, label, right)?;
                vars.insert(target.clone(), Slot::Scalar(arith(label, *op, l, r)?));
            }
            Instr::Neg { target, operand } => {
                let v = match eval_scalar(&vars, label, operand)? {
                    Value::Int(i) => Value::Int(i.wrapping_neg()),
                    Value::Float(f) => Value::Float(-f),
                    other => {
                        return Err(ExecError::Type {
                            label,
                            msg: format!("cannot negate {other}"),
                        });
                    }
                };
                vars.insert(target.clone(), Slot::Scalar(v));
            }
            Instr::Branch { left, cmp, right, target } => {
                let l = eval_scalar(&vars, label, left)?;
                let r = eval_scalar(&vars, label, right)?;
                if compare(label, &l, *cmp, &r)? {
                    next_pc = program
                        .line_index(*target)
                        .ok_or_else(|| invalid(label, format!("unknown label {target}")))?;
                }
            }
            Instr::Goto { target } => {
                next_pc = program
                    .line_index(*target)
                    .ok_or_else(|| invalid(label, format!("unknown label {target}")))?;
            }
            Instr::BranchHasNext { input, negated, target } => {
                let param = list_param(&vars, label, input)?;
                let cursor = cursors[param].as_ref().expect("list param has a cursor");
                let has = cursor.pos < cursor.records.len();
                if has != *negated {
                    next_pc = program
                        .line_index(*target)
                        .ok_or_else(|| invalid(label, format!("unknown label {target}")))?;
                }
            }
            Instr::Next { target, input } => {
                let param = list_param(&vars, label, input)?;
                let cursor = cursors[param].as_mut().expect("list param has a cursor");
                let rec = cursor
                    .records
                    .get(cursor.pos)
                    .cloned()
                    .ok_or_else(|| invalid(label, "next() on exhausted list".into()))?;
                cursor.pos += 1;
                vars.insert(target.clone(), Slot::In { param, rec });
            }
            Instr::Reset { input } => {
                let param = list_param(&vars, label, input)?;
                cursors[param].as_mut().expect("list param has a cursor").pos = 0;
            }
        }
        pc = next_pc;
    }
    Ok(out)
}

/// Runs a UDF in the local record layout, where records are exactly as wide
/// as their fields. Input arities are taken from the records themselves (for
/// empty lists, a declared arity of 0 is assumed; use [`run_udf`] with an
/// explicit [`LocalModel`] when that matters).
pub fn interpret(
    program: &UdfProgram,
    input: &UdfInput,
    budget: u64,
) -> Result<Vec<Record>, ExecError> {
    let arities = match input {
        UdfInput::Records(recs) => recs.iter().map(Record::arity).collect(),
        UdfInput::Lists(lists) => {
            lists.iter().map(|l| l.first().map(Record::arity).unwrap_or(0)).collect()
        }
    };
    run_udf(program, &LocalModel::new(arities), input, budget)
}

fn arity_hint(vars: &BTreeMap<String, Slot>, name: &str) -> usize {
    match vars.get(name) {
        Some(Slot::In { rec, .. }) | Some(Slot::Out(rec)) => rec.arity(),
        _ => 0,
    }
}

fn list_param(
    vars: &BTreeMap<String, Slot>,
    label: u32,
    name: &str,
) -> Result<usize, ExecError> {
    match vars.get(name) {
        Some(Slot::ListRef(param)) => Ok(*param),
        Some(_) => Err(ExecError::Invalid {
            label,
            msg: format!("{name} is not a record list"),
        }),
        None => Err(ExecError::Unbound { label, var: name.to_string() }),
    }
}

fn eval_scalar(
    vars: &BTreeMap<String, Slot>,
    label: u32,
    operand: &Operand,
) -> Result<Value, ExecError> {
    match operand {
        Operand::Const(v) => Ok(v.clone()),
        Operand::Var(name) => match vars.get(name) {
            Some(Slot::Scalar(v)) => Ok(v.clone()),
            Some(_) => Err(ExecError::Type {
                label,
                msg: format!("{name} is a record, not a scalar"),
            }),
            None => Err(ExecError::Unbound { label, var: name.clone() }),
        },
    }
}

fn arith(label: u32, op: ArithOp, l: Value, r: Value) -> Result<Value, ExecError> {
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => Ok(Value::Int(match op {
            ArithOp::Add => a.wrapping_add(b),
            ArithOp::Sub => a.wrapping_sub(b),
            ArithOp::Mul => a.wrapping_mul(b),
            ArithOp::Div => {
                if b == 0 {
                    return Err(ExecError::DivisionByZero { label });
                }
                a.wrapping_div(b)
            }
        })),
        (Value::Float(a), Value::Float(b)) => Ok(Value::Float(match op {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
            ArithOp::Div => a / b,
        })),
        (Value::Str(a), Value::Str(b)) if op == ArithOp::Add => Ok(Value::Str(a + &b)),
        (l, r) => Err(ExecError::Type {
            label,
            msg: format!("cannot apply {op} to {l} and {r}"),
        }),
    }
}

/// Comparison semantics: numbers and strings support the full ordering;
/// booleans and absent values support only equality tests. Absent equals
/// only itself.
pub fn compare(label: u32, l: &Value, cmp: Cmp, r: &Value) -> Result<bool, ExecError> {
    use std::cmp::Ordering;
    let ord: Ordering = match (l, r) {
        (Value::Int(a), Value::Int(b)) => a.cmp(b),
        (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        (Value::Bool(a), Value::Bool(b)) => {
            return match cmp {
                Cmp::Eq => Ok(a == b),
                Cmp::Ne => Ok(a != b),
                _ => Err(ExecError::Type {
                    label,
                    msg: format!("cannot order booleans with {cmp}"),
                }),
            };
        }
        (Value::Absent, _) | (_, Value::Absent) => {
            return match cmp {
                Cmp::Eq => Ok(l == r),
                Cmp::Ne => Ok(l != r),
                _ => Err(ExecError::Type {
                    label,
                    msg: format!("cannot order null with {cmp}"),
                }),
            };
        }
        (l, r) => {
            return Err(ExecError::Type {
                label,
                msg: format!("cannot compare {l} and {r}"),
            });
        }
    };
    Ok(match cmp {
        Cmp::Lt => ord == Ordering::Less,
        Cmp::Le => ord != Ordering::Greater,
        Cmp::Eq => ord == Ordering::Equal,
        Cmp::Ne => ord != Ordering::Equal,
        Cmp::Ge => ord != Ordering::Less,
        Cmp::Gt => ord == Ordering::Greater,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn rec(vals: &[i64]) -> Record {
        Record(vals.iter().map(|&v| Value::Int(v)).collect())
    }

    fn run1(src: &str, input: Record) -> Vec<Record> {
        let p = parse_udf(src).unwrap();
        interpret(&p, &UdfInput::Records(vec![input]), DEFAULT_STEP_BUDGET).unwrap()
    }

    #[test]
    fn abs_flips_negative_second_field() {
        assert_eq!(run1(ABS_B, rec(&[2, -3])), vec![rec(&[2, 3])]);
        assert_eq!(run1(ABS_B, rec(&[2, 3])), vec![rec(&[2, 3])]);
    }

    #[test]
    fn filter_drops_negative_first_field() {
        assert_eq!(run1(FILTER_A, rec(&[2, 3])), vec![rec(&[2, 3])]);
        assert_eq!(run1(FILTER_A, rec(&[-2, 3])), vec![]);
    }

    #[test]
    fn sum_replaces_first_field() {
        assert_eq!(run1(SUM_INTO_A, rec(&[2, 3])), vec![rec(&[5, 3])]);
    }

    /// The three functions chained over [<2,-3>, <-2,-3>] leave exactly
    /// [<5,3>], in both of the equivalent operator orders.
    #[test]
    fn chained_maps_agree_in_both_orders() {
        let f1 = parse_udf(ABS_B).unwrap();
        let f2 = parse_udf(FILTER_A).unwrap();
        let f3 = parse_udf(SUM_INTO_A).unwrap();
        let input = vec![rec(&[2, -3]), rec(&[-2, -3])];
        let chain = |fs: &[&UdfProgram]| {
            let mut data = input.clone();
            for f in fs {
                let mut next = Vec::new();
                for r in &data {
                    next.extend(
                        interpret(f, &UdfInput::Records(vec![r.clone()]), DEFAULT_STEP_BUDGET)
                            .unwrap(),
                    );
                }
                data = next;
            }
            data
        };
        assert_eq!(chain(&[&f1, &f2, &f3]), vec![rec(&[5, 3])]);
        assert_eq!(chain(&[&f2, &f1, &f3]), vec![rec(&[5, 3])]);
        assert_ne!(chain(&[&f1, &f3, &f2]), vec![rec(&[5, 3])]);
    }

    #[test]
    fn repeated_runs_are_pure() {
        let p = parse_udf(SUM_INTO_A).unwrap();
        let input = UdfInput::Records(vec![rec(&[7, 8])]);
        let a = interpret(&p, &input, DEFAULT_STEP_BUDGET).unwrap();
        let b = interpret(&p, &input, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infinite_loop_hits_the_step_budget() {
        let src = "1: f(InputRecord $i)\n2: goto 2\n";
        let p = parse_udf(src).unwrap();
        let err = interpret(&p, &UdfInput::Records(vec![rec(&[1])]), 1000).unwrap_err();
        assert_eq!(err, ExecError::StepBudget(1000));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let src = "1: f(InputRecord $i)\n2: $a:=getField($i,0)\n3: $b:=$a/0\n4: return\n";
        let p = parse_udf(src).unwrap();
        let err = interpret(&p, &UdfInput::Records(vec![rec(&[1])]), 1000).unwrap_err();
        assert_eq!(err, ExecError::DivisionByZero { label: 3 });
    }

    #[test]
    fn out_of_range_field_is_an_error() {
        let src = "1: f(InputRecord $i)\n2: $a:=getField($i,9)\n3: return\n";
        let p = parse_udf(src).unwrap();
        let err = interpret(&p, &UdfInput::Records(vec![rec(&[1, 2])]), 1000).unwrap_err();
        assert_eq!(err, ExecError::FieldOutOfRange { label: 2, pos: 9, arity: 2 });
    }

    #[test]
    fn grouped_sum_with_two_passes() {
        // First pass counts the records; second pass re-reads them to build
        // output records carrying the count.
        let src = "\
40: g(RecordList $rl)
41: $n:=0
42: if(!hasNext($rl)) goto 46
43: $r:=next($rl)
44: $n:=$n+1
45: goto 42
46: reset($rl)
47: if(!hasNext($rl)) goto 52
48: $r:=next($rl)
49: $or:=copy($r)
50: setField($or,1,$n)
51: goto 47
52: emit($or)
53: return
";
        let p = parse_udf(src).unwrap();
        assert!(p.is_kat());
        let input = UdfInput::Lists(vec![vec![rec(&[4, 0]), rec(&[5, 0]), rec(&[6, 0])]]);
        let out = interpret(&p, &input, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(out, vec![rec(&[6, 3])]);
    }

    #[test]
    fn cogroup_sides_have_independent_cursors() {
        // Pairs every left record's field 0 with the count of right records.
        let src = "\
1: h(RecordList $ls, RecordList $rs)
2: $n:=0
3: if(!hasNext($rs)) goto 7
4: $r:=next($rs)
5: $n:=$n+1
6: goto 3
7: if(!hasNext($ls)) goto 13
8: $l:=next($ls)
9: $or:=copy($l)
10: setField($or,1,$n)
11: emit($or)
12: goto 7
13: return
";
        let p = parse_udf(src).unwrap();
        let input = UdfInput::Lists(vec![
            vec![rec(&[1, 0]), rec(&[2, 0])],
            vec![rec(&[8, 0]), rec(&[9, 0]), rec(&[10, 0])],
        ]);
        let out = interpret(&p, &input, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(out, vec![rec(&[1, 3]), rec(&[2, 3])]);
    }

    #[test]
    fn concat_joins_match_inputs() {
        let src = "\
1: j(InputRecord $l, InputRecord $r)
2: $or:=concat($l,$r)
3: emit($or)
4: return
";
        let p = parse_udf(src).unwrap();
        let input = UdfInput::Records(vec![rec(&[1, 2]), rec(&[3])]);
        let out = interpret(&p, &input, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(out, vec![rec(&[1, 2, 3])]);
    }

    #[test]
    fn copy_of_second_input_is_offset_into_the_output_space() {
        let src = "\
1: j(InputRecord $l, InputRecord $r)
2: $or:=copy($r)
3: emit($or)
4: return
";
        let p = parse_udf(src).unwrap();
        let input = UdfInput::Records(vec![rec(&[1, 2]), rec(&[7])]);
        let out = interpret(&p, &input, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(out, vec![Record(vec![Value::Absent, Value::Absent, Value::Int(7)])]);
    }

    #[test]
    fn reversed_concat_operands_yield_the_same_record() {
        let src = "\
1: j(InputRecord $l, InputRecord $r)
2: $or:=concat($r,$l)
3: emit($or)
4: return
";
        let p = parse_udf(src).unwrap();
        let input = UdfInput::Records(vec![rec(&[1, 2]), rec(&[7])]);
        let out = interpret(&p, &input, DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(out, vec![rec(&[1, 2, 7])]);
    }

    #[test]
    fn global_model_copies_the_whole_carrier() {
        // Carrier has 3 slots; this operator sees only slots 0 and 2 as its
        // positions 0 and 1. Copying must preserve the untouched slot 1.
        let model = GlobalModel {
            in_maps: vec![vec![0, 2]],
            out_map: vec![0, 2],
            width: 3,
        };
        let p = parse_udf(ABS_B).unwrap();
        let carrier = Record(vec![Value::Int(2), Value::Str("keep".into()), Value::Int(-3)]);
        let out =
            run_udf(&p, &model, &UdfInput::Records(vec![carrier]), DEFAULT_STEP_BUDGET).unwrap();
        assert_eq!(
            out,
            vec![Record(vec![Value::Int(2), Value::Str("keep".into()), Value::Int(3)])]
        );
    }

    #[test]
    fn global_concat_merges_disjoint_slots() {
        let model = GlobalModel {
            in_maps: vec![vec![0, 1], vec![2]],
            out_map: vec![0, 1, 2],
            width: 3,
        };
        let src = "1: j(InputRecord $l, InputRecord $r)\n2: $or:=concat($l,$r)\n3: emit($or)\n4: return\n";
        let p = parse_udf(src).unwrap();
        let left = Record(vec![Value::Int(1), Value::Int(2), Value::Absent]);
        let right = Record(vec![Value::Absent, Value::Absent, Value::Int(3)]);
        let out =
            run_udf(&p, &model, &UdfInput::Records(vec![left, right]), DEFAULT_STEP_BUDGET)
                .unwrap();
        assert_eq!(out, vec![Record(vec![Value::Int(1), Value::Int(2), Value::Int(3)])]);
    }

    #[test]
    fn null_comparisons_support_equality_only() {
        let src = "\
1: f(InputRecord $i)
2: $a:=getField($i,0)
3: if($a==null) goto 6
4: $or:=copy($i)
5: emit($or)
6: return
";
        let p = parse_udf(src).unwrap();
        let present = Record(vec![Value::Int(1)]);
        let absent = Record(vec![Value::Absent]);
        assert_eq!(
            interpret(&p, &UdfInput::Records(vec![present.clone()]), 1000).unwrap(),
            vec![present]
        );
        assert_eq!(interpret(&p, &UdfInput::Records(vec![absent]), 1000).unwrap(), vec![]);
    }

    #[test]
    fn mutation_after_emit_does_not_alter_emitted_records() {
        let src = "\
1: f(InputRecord $i)
2: $or:=copy($i)
3: emit($or)
4: setField($or,0,99)
5: emit($or)
6: return
";
        let p = parse_udf(src).unwrap();
        let out = interpret(&p, &UdfInput::Records(vec![rec(&[1])]), 1000).unwrap();
        assert_eq!(out, vec![rec(&[1]), rec(&[99])]);
    }
}
