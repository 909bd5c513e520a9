//! Textual three-address-code UDF language.
//!
//! A UDF is a labeled instruction list. Record-at-a-time UDFs receive one
//! `InputRecord` per input; key-at-a-time UDFs receive a `RecordList` per
//! input and walk it with `hasNext`/`next` (plus `reset` to rewind). Records
//! are accessed through `getField`/`setField` with statically known
//! positions, and results leave the UDF via `emit` of a constructed output
//! record.
//!
//! Example (a filter that keeps records with a non-negative first field):
//!
//! ```text
//! 20: f2(InputRecord $ir)
//! 21: $a:=getField($ir,0)
//! 22: if ($a<0) goto 25
//! 23: $or:=copy($ir)
//! 24: emit($or)
//! 25: return
//! ```

pub mod cfg;
pub mod interp;
pub mod parse;

use std::fmt;

use crate::value::Value;

/// Parameter kind in a UDF header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// `InputRecord`: one record per invocation (record-at-a-time).
    Record,
    /// `RecordList`: an iterable list per invocation (key-at-a-time).
    List,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl fmt::Display for ArithOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Eq => "==",
            Cmp::Ne => "!=",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        })
    }
}

/// A variable reference or a constant.
#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Var(String),
    Const(Value),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Const(Value::Str(s)) => write!(f, "{s:?}"),
            Operand::Const(Value::Absent) => f.write_str("null"),
            Operand::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instr {
    /// `$t:=getField($i,n)` — read position `n` of an input record.
    GetField { target: String, input: String, pos: usize },
    /// `setField($o,n,v)` — write position `n` of an output record. A `null`
    /// value projects the position away.
    SetField { out: String, pos: usize, value: Operand },
    /// `$o:=copy($i)` — output record initialized as a copy of an input.
    Copy { target: String, source: String },
    /// `$o:=create()` — empty output record.
    Create { target: String },
    /// `$o:=concat($a,$b)` — output record concatenating two inputs.
    Concat { target: String, left: String, right: String },
    /// `emit($o)` — append a snapshot of `$o` to the invocation output.
    Emit { rec: String },
    Return,
    /// `$t:=c` or `$t:=$s`.
    Assign { target: String, value: Operand },
    /// `$t:=a op b`.
    Arith { target: String, op: ArithOp, left: Operand, right: Operand },
    /// `$t:=-a`.
    Neg { target: String, operand: Operand },
    /// `if (a cmp b) goto L`.
    Branch { left: Operand, cmp: Cmp, right: Operand, target: u32 },
    Goto { target: u32 },
    /// `if (hasNext($l)) goto L` or `if (!hasNext($l)) goto L`.
    BranchHasNext { input: String, negated: bool, target: u32 },
    /// `$r:=next($l)` — bind the next record of a list input.
    Next { target: String, input: String },
    /// `reset($l)` — rewind a list input to its first record.
    Reset { input: String },
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::GetField { target, input, pos } => write!(f, "{target}:=getField({input},{pos})"),
            Instr::SetField { out, pos, value } => write!(f, "setField({out},{pos},{value})"),
            Instr::Copy { target, source } => write!(f, "{target}:=copy({source})"),
            Instr::Create { target } => write!(f, "{target}:=create()"),
            Instr::Concat { target, left, right } => write!(f, "{target}:=concat({left},{right})"),
            Instr::Emit { rec } => write!(f, "emit({rec})"),
            Instr::Return => f.write_str("return"),
            Instr::Assign { target, value } => write!(f, "{target}:={value}"),
            Instr::Arith { target, op, left, right } => write!(f, "{target}:={left}{op}{right}"),
            Instr::Neg { target, operand } => write!(f, "{target}:=-{operand}"),
            Instr::Branch { left, cmp, right, target } => write!(f, "if ({left}{cmp}{right}) goto {target}"),
            Instr::Goto { target } => write!(f, "goto {target}"),
            Instr::BranchHasNext { input, negated, target } => {
                let bang = if *negated { "!" } else { "" };
                write!(f, "if ({bang}hasNext({input})) goto {target}")
            }
            Instr::Next { target, input } => write!(f, "{target}:=next({input})"),
            Instr::Reset { input } => write!(f, "reset({input})"),
        }
    }
}

/// One labeled instruction.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub label: u32,
    pub instr: Instr,
}

/// A parsed UDF.
#[derive(Clone, Debug, PartialEq)]
pub struct UdfProgram {
    pub name: String,
    pub header_label: u32,
    pub params: Vec<(String, InputKind)>,
    /// Instructions in source order, excluding the header.
    pub lines: Vec<Line>,
}

impl UdfProgram {
    /// Number of inputs.
    pub fn num_inputs(&self) -> usize {
        self.params.len()
    }

    /// True iff all inputs are record lists (key-at-a-time).
    pub fn is_kat(&self) -> bool {
        self.params.iter().any(|(_, k)| *k == InputKind::List)
    }

    pub fn line_index(&self, label: u32) -> Option<usize> {
        self.lines.iter().position(|l| l.label == label)
    }

    /// Largest `setField` position plus one, or zero if none. Together with
    /// the input arity this bounds the output arity of the UDF.
    pub fn max_setfield_arity(&self) -> usize {
        self.lines
            .iter()
            .filter_map(|l| match &l.instr {
                Instr::SetField { pos, .. } => Some(pos + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for UdfProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}(", self.header_label, self.name)?;
        for (i, (name, kind)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            let kw = match kind {
                InputKind::Record => "InputRecord",
                InputKind::List => "RecordList",
            };
            write!(f, "{kw} {name}")?;
        }
        writeln!(f, ")")?;
        for line in &self.lines {
            writeln!(f, "{}: {}", line.label, line.instr)?;
        }
        Ok(())
    }
}
