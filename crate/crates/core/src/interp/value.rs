//! Runtime values with canonical, type-directed rendering and parsing.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::lang::{parse_expr, Builtin, OperatorSet, Ty, TyCon};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

/// A builtin applied to fewer arguments than its arity. `ty` is the
/// builtin's type at this use site.
#[derive(Clone, Debug)]
pub struct Closure {
    pub op: Builtin,
    pub ty: Ty,
    pub args: Vec<Value>,
    /// Source text of the generated program this function came from.
    pub label: Option<Arc<str>>,
}

#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Char(char),
    Bool(bool),
    List(Vec<Value>),
    Pair(Box<Value>, Box<Value>),
    Maybe(Option<Box<Value>>),
    Either(Side, Box<Value>),
    Fun(Arc<Closure>),
}

/// Structural equality; functions are equal only when both carry the same
/// program label.
impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        use Value::*;
        match (self, other) {
            (Int(a), Int(b)) => a == b,
            (Char(a), Char(b)) => a == b,
            (Bool(a), Bool(b)) => a == b,
            (List(a), List(b)) => a == b,
            (Pair(a, b), Pair(c, d)) => a == c && b == d,
            (Maybe(a), Maybe(b)) => a == b,
            (Either(s, a), Either(t, b)) => s == t && a == b,
            (Fun(f), Fun(g)) => f.label.is_some() && f.label == g.label,
            _ => false,
        }
    }
}

impl Value {
    pub fn just(v: Value) -> Value {
        Value::Maybe(Some(Box::new(v)))
    }

    pub fn nothing() -> Value {
        Value::Maybe(None)
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn left(v: Value) -> Value {
        Value::Either(Side::Left, Box::new(v))
    }

    pub fn right(v: Value) -> Value {
        Value::Either(Side::Right, Box::new(v))
    }

    pub fn string(s: &str) -> Value {
        Value::List(s.chars().map(Value::Char).collect())
    }

    /// Number of constructors, used to charge fuel for building values.
    pub fn size(&self) -> u64 {
        match self {
            Value::List(xs) => 1 + xs.iter().map(Value::size).sum::<u64>(),
            Value::Pair(a, b) => 1 + a.size() + b.size(),
            Value::Maybe(Some(x)) | Value::Either(_, x) => 1 + x.size(),
            _ => 1,
        }
    }
}

/// Input values parenthesize every integer; output values only negative
/// integers in argument position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Input,
    Output,
}

fn push_char_escaped(out: &mut String, c: char, quote: char, next: Option<char>) {
    match c {
        '\\' => out.push_str("\\\\"),
        '\n' => out.push_str("\\n"),
        '\t' => out.push_str("\\t"),
        c if c == quote => {
            out.push('\\');
            out.push(c);
        }
        c if (' '..='~').contains(&c) => out.push(c),
        c => {
            let _ = write!(out, "\\{}", c as u32);
            // A following digit would extend the numeric escape.
            if quote == '"' && next.is_some_and(|n| n.is_ascii_digit()) {
                out.push_str("\\&");
            }
        }
    }
}

fn render_into(out: &mut String, v: &Value, ty: &Ty, style: Style, arg: bool) {
    match (v, ty) {
        (Value::Int(n), _) => {
            if style == Style::Input || (arg && *n < 0) {
                let _ = write!(out, "({n})");
            } else {
                let _ = write!(out, "{n}");
            }
        }
        (Value::Char(c), _) => {
            out.push('\'');
            push_char_escaped(out, *c, '\'', None);
            out.push('\'');
        }
        (Value::Bool(b), _) => out.push_str(if *b { "True" } else { "False" }),
        (Value::List(xs), Ty::Con(TyCon::List, args)) => {
            let elem = &args[0];
            if *elem == Ty::char() {
                out.push('"');
                for (i, x) in xs.iter().enumerate() {
                    let Value::Char(c) = x else { unreachable!("[Char] holds chars") };
                    let next = match xs.get(i + 1) {
                        Some(Value::Char(n)) => Some(*n),
                        _ => None,
                    };
                    push_char_escaped(out, *c, '"', next);
                }
                out.push('"');
            } else {
                out.push('[');
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    render_into(out, x, elem, style, false);
                }
                out.push(']');
            }
        }
        (Value::Pair(a, b), Ty::Con(TyCon::Pair, args)) => {
            out.push('(');
            render_into(out, a, &args[0], style, false);
            out.push_str(", ");
            render_into(out, b, &args[1], style, false);
            out.push(')');
        }
        (Value::Maybe(None), _) => out.push_str("Nothing"),
        (Value::Maybe(Some(x)), Ty::Con(TyCon::Maybe, args)) => {
            if arg {
                out.push('(');
            }
            out.push_str("Just ");
            render_into(out, x, &args[0], style, true);
            if arg {
                out.push(')');
            }
        }
        (Value::Either(side, x), Ty::Con(TyCon::Either, args)) => {
            if arg {
                out.push('(');
            }
            let (name, inner) = match side {
                Side::Left => ("Left ", &args[0]),
                Side::Right => ("Right ", &args[1]),
            };
            out.push_str(name);
            render_into(out, x, inner, style, true);
            if arg {
                out.push(')');
            }
        }
        (Value::Fun(f), _) => match &f.label {
            Some(l) => out.push_str(l),
            None => out.push_str("<function>"),
        },
        (v, ty) => panic!("value {v:?} does not inhabit {ty}"),
    }
}

/// Canonical text of a value at type `ty`.
pub fn render_value(v: &Value, ty: &Ty, style: Style) -> String {
    let mut out = String::new();
    render_into(&mut out, v, ty, style, false);
    out
}

/// Input expression: every argument parenthesized, separated by spaces.
pub fn render_inputs(args: &[Value], tys: &[Ty]) -> String {
    args.iter()
        .zip(tys)
        .map(|(v, t)| format!("({})", render_value(v, t, Style::Input)))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse value at offset {offset}: {message}")]
pub struct ValueParseError {
    pub offset: usize,
    pub message: String,
}

struct ValueParser<'a> {
    src: &'a str,
    pos: usize,
    ops: &'a OperatorSet,
}

impl<'a> ValueParser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ValueParseError> {
        Err(ValueParseError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn ws(&mut self) {
        while self.rest().starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn eat(&mut self, s: &str) -> bool {
        self.ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), ValueParseError> {
        if self.eat(s) {
            Ok(())
        } else {
            self.err(format!("expected {s:?}"))
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.ws();
        let r = self.rest();
        if r.starts_with(kw) && !r[kw.len()..].starts_with(|c: char| c.is_alphanumeric()) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn int(&mut self) -> Result<i64, ValueParseError> {
        self.ws();
        let start = self.pos;
        if self.rest().starts_with('-') {
            self.pos += 1;
        }
        while self.rest().starts_with(|c: char| c.is_ascii_digit()) {
            self.pos += 1;
        }
        self.src[start..self.pos]
            .parse()
            .or_else(|_| self.err("expected integer"))
    }

    /// One possibly escaped character inside a literal. `None` for `\&`.
    fn lit_char(&mut self) -> Result<Option<char>, ValueParseError> {
        let mut chars = self.rest().chars();
        match chars.next() {
            Some('\\') => {
                self.pos += 1;
                let r = self.rest();
                let c = r.chars().next();
                match c {
                    Some('n') => {
                        self.pos += 1;
                        Ok(Some('\n'))
                    }
                    Some('t') => {
                        self.pos += 1;
                        Ok(Some('\t'))
                    }
                    Some('&') => {
                        self.pos += 1;
                        Ok(None)
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let len = r.find(|c: char| !c.is_ascii_digit()).unwrap_or(r.len());
                        let code: u32 = r[..len].parse().or_else(|_| self.err("bad escape"))?;
                        self.pos += len;
                        match char::from_u32(code) {
                            Some(c) => Ok(Some(c)),
                            None => self.err("escape out of range"),
                        }
                    }
                    Some(c) => {
                        self.pos += c.len_utf8();
                        Ok(Some(c))
                    }
                    None => self.err("unterminated escape"),
                }
            }
            Some(c) => {
                self.pos += c.len_utf8();
                Ok(Some(c))
            }
            None => self.err("unterminated literal"),
        }
    }

    fn value(&mut self, ty: &Ty) -> Result<Value, ValueParseError> {
        self.ws();
        let parenthesized_pair = matches!(ty, Ty::Con(TyCon::Pair, _));
        if !parenthesized_pair && !matches!(ty, Ty::Con(TyCon::Fun, _)) && self.eat("(") {
            let v = self.value(ty)?;
            self.expect(")")?;
            return Ok(v);
        }
        match ty {
            Ty::Con(TyCon::Int, _) => Ok(Value::Int(self.int()?)),
            Ty::Con(TyCon::Char, _) => {
                self.expect("'")?;
                let c = match self.lit_char()? {
                    Some(c) => c,
                    None => return self.err("empty character"),
                };
                self.expect("'")?;
                Ok(Value::Char(c))
            }
            Ty::Con(TyCon::Bool, _) => {
                if self.keyword("True") {
                    Ok(Value::Bool(true))
                } else if self.keyword("False") {
                    Ok(Value::Bool(false))
                } else {
                    self.err("expected Bool")
                }
            }
            Ty::Con(TyCon::List, args) => {
                if args[0] == Ty::char() && self.eat("\"") {
                    let mut xs = Vec::new();
                    while !self.rest().starts_with('"') {
                        if let Some(c) = self.lit_char()? {
                            xs.push(Value::Char(c));
                        }
                    }
                    self.pos += 1;
                    return Ok(Value::List(xs));
                }
                self.expect("[")?;
                let mut xs = Vec::new();
                if !self.eat("]") {
                    loop {
                        xs.push(self.value(&args[0])?);
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(Value::List(xs))
            }
            Ty::Con(TyCon::Pair, args) => {
                self.expect("(")?;
                let a = self.value(&args[0])?;
                self.expect(",")?;
                let b = self.value(&args[1])?;
                self.expect(")")?;
                Ok(Value::pair(a, b))
            }
            Ty::Con(TyCon::Maybe, args) => {
                if self.keyword("Nothing") {
                    Ok(Value::nothing())
                } else if self.keyword("Just") {
                    Ok(Value::just(self.value(&args[0])?))
                } else {
                    self.err("expected Maybe")
                }
            }
            Ty::Con(TyCon::Either, args) => {
                if self.keyword("Left") {
                    Ok(Value::left(self.value(&args[0])?))
                } else if self.keyword("Right") {
                    Ok(Value::right(self.value(&args[1])?))
                } else {
                    self.err("expected Either")
                }
            }
            Ty::Con(TyCon::Fun, _) => {
                let start = self.pos;
                let end = if self.rest().starts_with('(') {
                    let mut depth = 0i32;
                    let mut end = None;
                    for (i, c) in self.rest().char_indices() {
                        match c {
                            '(' => depth += 1,
                            ')' => {
                                depth -= 1;
                                if depth == 0 {
                                    end = Some(self.pos + i + 1);
                                    break;
                                }
                            }
                            _ => {}
                        }
                    }
                    match end {
                        Some(e) => e,
                        None => return self.err("unbalanced function text"),
                    }
                } else {
                    let r = self.rest();
                    self.pos
                        + r.find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '\''))
                            .unwrap_or(r.len())
                };
                let text = &self.src[start..end];
                let expr = parse_expr(text, self.ops).or_else(|e| self.err(e.to_string()))?;
                self.pos = end;
                match super::eval::program_value(&expr, self.ops, ty) {
                    Ok(v) => Ok(v),
                    Err(e) => self.err(e.to_string()),
                }
            }
            _ => self.err(format!("cannot parse values of type {ty}")),
        }
    }
}

/// Parses a value rendered in either style.
pub fn parse_value(text: &str, ty: &Ty, ops: &OperatorSet) -> Result<Value, ValueParseError> {
    let mut p = ValueParser { src: text, pos: 0, ops };
    let v = p.value(ty)?;
    p.ws();
    if p.pos != text.len() {
        return p.err("trailing input");
    }
    Ok(v)
}

/// Parses an input expression produced by [`render_inputs`].
pub fn parse_inputs(text: &str, tys: &[Ty], ops: &OperatorSet) -> Result<Vec<Value>, ValueParseError> {
    let mut p = ValueParser { src: text, pos: 0, ops };
    let mut out = Vec::with_capacity(tys.len());
    for t in tys {
        p.expect("(")?;
        out.push(p.value(t)?);
        p.expect(")")?;
    }
    p.ws();
    if p.pos != text.len() {
        return p.err("trailing input");
    }
    Ok(out)
}
