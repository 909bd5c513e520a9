//! Parser for the textual UDF language.
//!
//! Each non-empty line is `label: instruction`. `#` starts a comment. Field
//! index arguments must be non-negative integer literals or variables with a
//! single constant assignment in the whole program; the parser resolves the
//! latter so downstream passes only ever see literal positions.

use std::collections::BTreeMap;

use crate::error::ParseError;
use crate::tac::{ArithOp, Cmp, InputKind, Instr, Line, Operand, UdfProgram};
use crate::value::Value;

/// Function header: label, name, and parameter list.
type Header = (u32, String, Vec<(String, InputKind)>);

/// Parses a whole UDF source text.
pub fn parse_udf(src: &str) -> Result<UdfProgram, ParseError> {
    let mut header: Option<Header> = None;
    let mut lines: Vec<Line> = Vec::new();
    let mut pending_idx: Vec<(usize, String, usize)> = Vec::new(); // (line_no, var, lines index)

    for (no, raw) in src.lines().enumerate() {
        let line_no = no + 1;
        let text = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let (label, rest) = split_label(text, line_no)?;
        let mut toks = Lexer::new(rest, line_no).lex()?;
        if header.is_none() {
            let (name, params) = parse_header(&mut toks, line_no)?;
            header = Some((label, name, params));
            continue;
        }
        let instr = parse_instr(&mut toks, line_no, &mut pending_idx, lines.len())?;
        toks.expect_end()?;
        lines.push(Line { label, instr });
    }

    let (header_label, name, params) = header.ok_or(ParseError::Empty)?;
    let mut program = UdfProgram { name, header_label, params, lines };

    check_labels(&program)?;
    resolve_indices(&mut program, &pending_idx)?;
    Ok(program)
}

fn split_label(text: &str, line_no: usize) -> Result<(u32, &str), ParseError> {
    let colon = text.find(':').ok_or_else(|| ParseError::Syntax {
        line: line_no,
        msg: "expected `label:` prefix".to_string(),
    })?;
    let label = text[..colon].trim().parse::<u32>().map_err(|_| ParseError::Syntax {
        line: line_no,
        msg: "label must be a non-negative integer".to_string(),
    })?;
    Ok((label, text[colon + 1..].trim()))
}

fn check_labels(p: &UdfProgram) -> Result<(), ParseError> {
    let mut seen = BTreeMap::new();
    seen.insert(p.header_label, 0usize);
    for (i, line) in p.lines.iter().enumerate() {
        if seen.insert(line.label, i + 1).is_some() {
            return Err(ParseError::DuplicateLabel { line: i + 2, label: line.label });
        }
    }
    for (i, line) in p.lines.iter().enumerate() {
        let target = match line.instr {
            Instr::Branch { target, .. }
            | Instr::Goto { target }
            | Instr::BranchHasNext { target, .. } => Some(target),
            _ => None,
        };
        if let Some(t) = target {
            if p.line_index(t).is_none() {
                return Err(ParseError::DanglingLabel { line: i + 2, label: t });
            }
        }
    }
    Ok(())
}

/// Replaces variable field indices with their single constant assignment. Any
/// variable that is not assigned exactly one non-negative integer constant in
/// the whole program is rejected.
fn resolve_indices(p: &mut UdfProgram, pending: &[(usize, String, usize)]) -> Result<(), ParseError> {
    for (line_no, var, idx) in pending {
        let mut defs = p.lines.iter().filter_map(|l| match &l.instr {
            Instr::Assign { target, value } if target == var => Some(value.clone()),
            Instr::GetField { target, .. }
            | Instr::Arith { target, .. }
            | Instr::Neg { target, .. }
            | Instr::Next { target, .. }
            | Instr::Copy { target, .. }
            | Instr::Create { target }
            | Instr::Concat { target, .. }
                if target == var =>
            {
                Some(Operand::Var(var.clone()))
            }
            _ => None,
        });
        let value = match (defs.next(), defs.next()) {
            (Some(Operand::Const(Value::Int(n))), None) if n >= 0 => n as usize,
            _ => return Err(ParseError::NonLiteralIndex { line: *line_no }),
        };
        match &mut p.lines[*idx].instr {
            Instr::GetField { pos, .. } | Instr::SetField { pos, .. } => *pos = value,
            _ => unreachable!("pending index on a non-field instruction"),
        }
    }
    Ok(())
}

fn parse_header(toks: &mut Tokens, line_no: usize) -> Result<(String, Vec<(String, InputKind)>), ParseError> {
    let name = toks.ident()?;
    toks.punct(Tok::LParen)?;
    let mut params = Vec::new();
    loop {
        let kind = match toks.ident()?.as_str() {
            "InputRecord" => InputKind::Record,
            "RecordList" => InputKind::List,
            other => {
                return Err(ParseError::Syntax {
                    line: line_no,
                    msg: format!("expected InputRecord or RecordList, found {other:?}"),
                })
            }
        };
        let var = toks.var()?;
        params.push((var, kind));
        if toks.eat(Tok::Comma) {
            continue;
        }
        toks.punct(Tok::RParen)?;
        break;
    }
    toks.expect_end()?;
    if params.is_empty() || params.len() > 2 {
        return Err(ParseError::Syntax {
            line: line_no,
            msg: "UDFs take one or two inputs".to_string(),
        });
    }
    if params.windows(2).any(|w| w[0].1 != w[1].1) {
        return Err(ParseError::Syntax {
            line: line_no,
            msg: "inputs must be all InputRecord or all RecordList".to_string(),
        });
    }
    Ok((name, params))
}

fn parse_instr(
    toks: &mut Tokens,
    line_no: usize,
    pending_idx: &mut Vec<(usize, String, usize)>,
    line_idx: usize,
) -> Result<Instr, ParseError> {
    match toks.peek().cloned() {
        Some(Tok::Ident(kw)) => {
            toks.next();
            match kw.as_str() {
                "return" => Ok(Instr::Return),
                "goto" => Ok(Instr::Goto { target: toks.label()? }),
                "emit" => {
                    toks.punct(Tok::LParen)?;
                    let rec = toks.var()?;
                    toks.punct(Tok::RParen)?;
                    Ok(Instr::Emit { rec })
                }
                "reset" => {
                    toks.punct(Tok::LParen)?;
                    let input = toks.var()?;
                    toks.punct(Tok::RParen)?;
                    Ok(Instr::Reset { input })
                }
                "setField" => {
                    toks.punct(Tok::LParen)?;
                    let out = toks.var()?;
                    toks.punct(Tok::Comma)?;
                    let pos = parse_index(toks, line_no, pending_idx, line_idx)?;
                    toks.punct(Tok::Comma)?;
                    let value = toks.operand()?;
                    toks.punct(Tok::RParen)?;
                    Ok(Instr::SetField { out, pos, value })
                }
                "if" => parse_if(toks, line_no),
                other => Err(ParseError::Syntax {
                    line: line_no,
                    msg: format!("unknown instruction {other:?}"),
                }),
            }
        }
        Some(Tok::Var(_)) => {
            let target = toks.var()?;
            toks.punct(Tok::Assign)?;
            parse_rhs(toks, line_no, target, pending_idx, line_idx)
        }
        _ => Err(ParseError::Syntax {
            line: line_no,
            msg: "expected an instruction".to_string(),
        }),
    }
}

fn parse_if(toks: &mut Tokens, line_no: usize) -> Result<Instr, ParseError> {
    toks.punct(Tok::LParen)?;
    // hasNext forms
    let negated = toks.eat(Tok::Not);
    if let Some(Tok::Ident(id)) = toks.peek() {
        if id == "hasNext" {
            toks.next();
            toks.punct(Tok::LParen)?;
            let input = toks.var()?;
            toks.punct(Tok::RParen)?;
            toks.punct(Tok::RParen)?;
            toks.keyword("goto")?;
            let target = toks.label()?;
            return Ok(Instr::BranchHasNext { input, negated, target });
        }
    }
    if negated {
        return Err(ParseError::Syntax {
            line: line_no,
            msg: "`!` is only valid before hasNext".to_string(),
        });
    }
    let left = toks.operand()?;
    let cmp = toks.cmp()?;
    let right = toks.operand()?;
    toks.punct(Tok::RParen)?;
    toks.keyword("goto")?;
    let target = toks.label()?;
    Ok(Instr::Branch { left, cmp, right, target })
}

fn parse_rhs(
    toks: &mut Tokens,
    line_no: usize,
    target: String,
    pending_idx: &mut Vec<(usize, String, usize)>,
    line_idx: usize,
) -> Result<Instr, ParseError> {
    if let Some(Tok::Ident(kw)) = toks.peek().cloned() {
        toks.next();
        toks.punct(Tok::LParen)?;
        return match kw.as_str() {
            "getField" => {
                let input = toks.var()?;
                toks.punct(Tok::Comma)?;
                let pos = parse_index(toks, line_no, pending_idx, line_idx)?;
                toks.punct(Tok::RParen)?;
                Ok(Instr::GetField { target, input, pos })
            }
            "copy" => {
                let source = toks.var()?;
                toks.punct(Tok::RParen)?;
                Ok(Instr::Copy { target, source })
            }
            "create" => {
                toks.punct(Tok::RParen)?;
                Ok(Instr::Create { target })
            }
            "concat" => {
                let left = toks.var()?;
                toks.punct(Tok::Comma)?;
                let right = toks.var()?;
                toks.punct(Tok::RParen)?;
                Ok(Instr::Concat { target, left, right })
            }
            "next" => {
                let input = toks.var()?;
                toks.punct(Tok::RParen)?;
                Ok(Instr::Next { target, input })
            }
            other => Err(ParseError::Syntax {
                line: line_no,
                msg: format!("unknown constructor {other:?}"),
            }),
        };
    }
    // `-x`, constant, variable, or arithmetic.
    if toks.eat(Tok::Minus) {
        let operand = toks.operand()?;
        if toks.peek().is_none() {
            return Ok(Instr::Neg { target, operand });
        }
        // `- a op b` is not supported; negative literals are lexed directly.
        return Err(ParseError::Syntax {
            line: line_no,
            msg: "negation takes a single operand".to_string(),
        });
    }
    let left = toks.operand()?;
    let op = match toks.peek() {
        Some(Tok::Plus) => Some(ArithOp::Add),
        Some(Tok::Minus) => Some(ArithOp::Sub),
        Some(Tok::Star) => Some(ArithOp::Mul),
        Some(Tok::Slash) => Some(ArithOp::Div),
        _ => None,
    };
    match op {
        Some(op) => {
            toks.next();
            let right = toks.operand()?;
            Ok(Instr::Arith { target, op, left, right })
        }
        None => Ok(Instr::Assign { target, value: left }),
    }
}

fn parse_index(
    toks: &mut Tokens,
    line_no: usize,
    pending_idx: &mut Vec<(usize, String, usize)>,
    line_idx: usize,
) -> Result<usize, ParseError> {
    match toks.next() {
        Some(Tok::Int(n)) if n >= 0 => Ok(n as usize),
        Some(Tok::Var(v)) => {
            // Resolved after the whole program is parsed.
            pending_idx.push((line_no, v, line_idx));
            Ok(usize::MAX)
        }
        _ => Err(ParseError::NonLiteralIndex { line: line_no }),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Not,
    Cmp(Cmp),
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str, line: usize) -> Lexer<'a> {
        Lexer { chars: text.chars().peekable(), line }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, msg: msg.into() }
    }

    fn lex(mut self) -> Result<Tokens, ParseError> {
        let mut out = Vec::new();
        while let Some(&c) = self.chars.peek() {
            match c {
                ' ' | '\t' => {
                    self.chars.next();
                }
                '(' => {
                    self.chars.next();
                    out.push(Tok::LParen);
                }
                ')' => {
                    self.chars.next();
                    out.push(Tok::RParen);
                }
                ',' => {
                    self.chars.next();
                    out.push(Tok::Comma);
                }
                '+' => {
                    self.chars.next();
                    out.push(Tok::Plus);
                }
                '*' => {
                    self.chars.next();
                    out.push(Tok::Star);
                }
                '/' => {
                    self.chars.next();
                    out.push(Tok::Slash);
                }
                '-' => {
                    self.chars.next();
                    // A minus directly before a digit after a non-value token
                    // is a negative literal.
                    let prev_is_value = matches!(
                        out.last(),
                        Some(Tok::Var(_) | Tok::Int(_) | Tok::Float(_) | Tok::RParen)
                    );
                    if !prev_is_value && matches!(self.chars.peek(), Some(d) if d.is_ascii_digit()) {
                        match self.number()? {
                            Tok::Int(n) => out.push(Tok::Int(-n)),
                            Tok::Float(x) => out.push(Tok::Float(-x)),
                            _ => unreachable!(),
                        }
                    } else {
                        out.push(Tok::Minus);
                    }
                }
                ':' => {
                    self.chars.next();
                    if self.chars.peek() == Some(&'=') {
                        self.chars.next();
                        out.push(Tok::Assign);
                    } else {
                        return Err(self.err("stray `:`"));
                    }
                }
                '!' => {
                    self.chars.next();
                    if self.chars.peek() == Some(&'=') {
                        self.chars.next();
                        out.push(Tok::Cmp(Cmp::Ne));
                    } else {
                        out.push(Tok::Not);
                    }
                }
                '<' => {
                    self.chars.next();
                    if self.chars.peek() == Some(&'=') {
                        self.chars.next();
                        out.push(Tok::Cmp(Cmp::Le));
                    } else {
                        out.push(Tok::Cmp(Cmp::Lt));
                    }
                }
                '>' => {
                    self.chars.next();
                    if self.chars.peek() == Some(&'=') {
                        self.chars.next();
                        out.push(Tok::Cmp(Cmp::Ge));
                    } else {
                        out.push(Tok::Cmp(Cmp::Gt));
                    }
                }
                '=' => {
                    self.chars.next();
                    if self.chars.peek() == Some(&'=') {
                        self.chars.next();
                        out.push(Tok::Cmp(Cmp::Eq));
                    } else {
                        return Err(self.err("stray `=`; use `==` or `:=`"));
                    }
                }
                '"' => out.push(self.string()?),
                '$' => {
                    self.chars.next();
                    let name = self.word();
                    if name.is_empty() {
                        return Err(self.err("`$` must be followed by a variable name"));
                    }
                    out.push(Tok::Var(format!("${name}")));
                }
                c if c.is_ascii_digit() => out.push(self.number()?),
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let word = self.word();
                    out.push(Tok::Ident(word));
                }
                other => return Err(self.err(format!("unexpected character {other:?}"))),
            }
        }
        Ok(Tokens { toks: out.into_iter().peekable(), line: self.line })
    }

    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                s.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        s
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let mut s = String::new();
        let mut is_float = false;
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_digit() {
                s.push(c);
                self.chars.next();
            } else if c == '.' && !is_float {
                is_float = true;
                s.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        if is_float {
            s.parse::<f64>().map(Tok::Float).map_err(|_| self.err("bad float literal"))
        } else {
            s.parse::<i64>().map(Tok::Int).map_err(|_| self.err("bad integer literal"))
        }
    }

    fn string(&mut self) -> Result<Tok, ParseError> {
        self.chars.next(); // opening quote
        let mut s = String::new();
        loop {
            match self.chars.next() {
                Some('"') => return Ok(Tok::Str(s)),
                Some('\\') => match self.chars.next() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    _ => return Err(self.err("bad escape in string literal")),
                },
                Some(c) => s.push(c),
                None => return Err(self.err("unterminated string literal")),
            }
        }
    }
}

struct Tokens {
    toks: std::iter::Peekable<std::vec::IntoIter<Tok>>,
    line: usize,
}

impl Tokens {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, msg: msg.into() }
    }

    fn peek(&mut self) -> Option<&Tok> {
        self.toks.peek()
    }

    fn next(&mut self) -> Option<Tok> {
        self.toks.next()
    }

    fn eat(&mut self, t: Tok) -> bool {
        if self.peek() == Some(&t) {
            self.next();
            true
        } else {
            false
        }
    }

    fn punct(&mut self, t: Tok) -> Result<(), ParseError> {
        if self.eat(t.clone()) {
            Ok(())
        } else {
            Err(self.err(format!("expected {t:?}")))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => Err(self.err(format!("expected identifier, found {other:?}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) if s == kw => Ok(()),
            other => Err(self.err(format!("expected `{kw}`, found {other:?}"))),
        }
    }

    fn var(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Var(v)) => Ok(v),
            other => Err(self.err(format!("expected a $variable, found {other:?}"))),
        }
    }

    fn label(&mut self) -> Result<u32, ParseError> {
        match self.next() {
            Some(Tok::Int(n)) if n >= 0 => Ok(n as u32),
            other => Err(self.err(format!("expected a label, found {other:?}"))),
        }
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.next() {
            Some(Tok::Var(v)) => Ok(Operand::Var(v)),
            Some(Tok::Int(n)) => Ok(Operand::Const(Value::Int(n))),
            Some(Tok::Float(x)) => Ok(Operand::Const(Value::Float(x))),
            Some(Tok::Str(s)) => Ok(Operand::Const(Value::Str(s))),
            Some(Tok::Ident(id)) => match id.as_str() {
                "true" => Ok(Operand::Const(Value::Bool(true))),
                "false" => Ok(Operand::Const(Value::Bool(false))),
                "null" => Ok(Operand::Const(Value::Absent)),
                other => Err(self.err(format!("expected an operand, found {other:?}"))),
            },
            other => Err(self.err(format!("expected an operand, found {other:?}"))),
        }
    }

    fn cmp(&mut self) -> Result<Cmp, ParseError> {
        match self.next() {
            Some(Tok::Cmp(c)) => Ok(c),
            other => Err(self.err(format!("expected a comparison, found {other:?}"))),
        }
    }

    fn expect_end(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => {
                let t = t.clone();
                Err(self.err(format!("trailing input starting at {t:?}")))
            }
        }
    }
}
