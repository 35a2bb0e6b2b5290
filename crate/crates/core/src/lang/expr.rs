//! DSL expressions: operator references, curried application and typed holes.

use std::fmt;

use thiserror::Error;

use super::grammar::OperatorSet;
use super::types::{parse_type, Ty};

pub type HoleId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    App(Box<Expr>, Box<Expr>),
    Hole { id: HoleId, ann: Ty },
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn app(f: Expr, x: Expr) -> Expr {
        Expr::App(Box::new(f), Box::new(x))
    }

    pub fn apply(head: Expr, args: impl IntoIterator<Item = Expr>) -> Expr {
        args.into_iter().fold(head, Expr::app)
    }

    pub fn hole(id: HoleId, ann: Ty) -> Expr {
        Expr::Hole { id, ann }
    }

    /// Head and arguments of an application spine.
    pub fn spine(&self) -> (&Expr, Vec<&Expr>) {
        let mut args = Vec::new();
        let mut cur = self;
        while let Expr::App(f, x) = cur {
            args.push(x.as_ref());
            cur = f;
        }
        args.reverse();
        (cur, args)
    }

    /// Number of operator occurrences.
    pub fn node_count(&self) -> usize {
        match self {
            Expr::Var(_) => 1,
            Expr::App(f, x) => f.node_count() + x.node_count(),
            Expr::Hole { .. } => 0,
        }
    }

    /// Holes in left-to-right order.
    pub fn holes(&self) -> Vec<(HoleId, &Ty)> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Hole { id, ann } = e {
                out.push((*id, ann));
            }
        });
        out
    }

    pub fn hole_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |e| {
            if matches!(e, Expr::Hole { .. }) {
                n += 1;
            }
        });
        n
    }

    pub fn is_complete(&self) -> bool {
        self.hole_count() == 0
    }

    pub fn max_hole_id(&self) -> Option<HoleId> {
        self.holes().into_iter().map(|(id, _)| id).max()
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        if let Expr::App(g, x) = self {
            g.visit(f);
            x.visit(f);
        }
    }

    /// Replaces the hole `id`, returning `None` when it does not occur.
    pub fn replace_hole(&self, id: HoleId, with: &Expr) -> Option<Expr> {
        match self {
            Expr::Hole { id: h, .. } if *h == id => Some(with.clone()),
            Expr::Hole { .. } | Expr::Var(_) => None,
            Expr::App(f, x) => {
                if let Some(f2) = f.replace_hole(id, with) {
                    Some(Expr::App(Box::new(f2), x.clone()))
                } else {
                    x.replace_hole(id, with)
                        .map(|x2| Expr::App(f.clone(), Box::new(x2)))
                }
            }
        }
    }

    /// Renumbers holes 0, 1, ... in left-to-right order.
    pub fn renumber_holes(&self) -> Expr {
        fn go(e: &Expr, next: &mut HoleId) -> Expr {
            match e {
                Expr::Var(_) => e.clone(),
                Expr::Hole { ann, .. } => {
                    let id = *next;
                    *next += 1;
                    Expr::Hole { id, ann: ann.clone() }
                }
                Expr::App(f, x) => {
                    let f = go(f, next);
                    let x = go(x, next);
                    Expr::app(f, x)
                }
            }
        }
        go(self, &mut 0)
    }

    fn fmt_inner(&self, f: &mut fmt::Formatter<'_>, nested: bool) -> fmt::Result {
        match self {
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Hole { ann, .. } => {
                if nested {
                    write!(f, "(undefined :: {ann})")
                } else {
                    write!(f, "undefined :: {ann}")
                }
            }
            Expr::App(..) => {
                let (head, args) = self.spine();
                write!(f, "(")?;
                head.fmt_inner(f, true)?;
                for a in args {
                    write!(f, " ")?;
                    a.fmt_inner(f, true)?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Canonical text: fully parenthesized applications, one space between terms.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_inner(f, false)
    }
}

pub fn print_expr(e: &Expr) -> String {
    e.to_string()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown operator {name:?} at offset {offset}")]
    UnknownOperator { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownOperator { offset, .. } => {
                *offset
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    ops: &'a OperatorSet,
    next_hole: HoleId,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    fn syntax<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset,
            message: message.into(),
        })
    }

    fn ident(&mut self) -> Option<(usize, &'a str)> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len()
            && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_' || bytes[self.pos] == b'\'')
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| (start, &self.src[start..self.pos]))
    }

    fn is_hole_start(&mut self) -> bool {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        rest.starts_with("undefined")
            && !rest[9..]
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
    }

    /// `undefined :: <type>` where the type extends to `end`.
    fn hole(&mut self, end: usize) -> Result<Expr, ParseError> {
        self.pos += "undefined".len();
        self.skip_ws();
        if !self.src[self.pos..].starts_with("::") {
            return self.syntax(self.pos, "expected '::' after undefined");
        }
        self.pos += 2;
        let start = self.pos;
        let ann = parse_type(&self.src[start..end]).map_err(|e| ParseError::Syntax {
            offset: start + e.offset,
            message: e.message,
        })?;
        self.pos = end;
        let id = self.next_hole;
        self.next_hole += 1;
        Ok(Expr::Hole { id, ann })
    }

    /// Offset of the parenthesis closing the one just consumed.
    fn matching_close(&self) -> Option<usize> {
        let mut depth = 1i32;
        for (i, b) in self.src.as_bytes()[self.pos..].iter().enumerate() {
            match b {
                b'(' | b'[' => depth += 1,
                b')' | b']' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(self.pos + i);
                    }
                }
                _ => {}
            }
        }
        None
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                let open = self.pos;
                self.pos += 1;
                if self.is_hole_start() {
                    let close = match self.matching_close() {
                        Some(c) => c,
                        None => return self.syntax(open, "unbalanced parenthesis"),
                    };
                    let h = self.hole(close)?;
                    self.pos = close + 1;
                    return Ok(h);
                }
                let e = self.application()?;
                if self.peek() != Some(b')') {
                    return self.syntax(self.pos, "expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(_) => {
                let here = self.pos;
                match self.ident() {
                    Some((offset, name)) => {
                        if name == "undefined" {
                            return self.syntax(offset, "hole must be parenthesized here");
                        }
                        match self.ops.canonical_name(name) {
                            Some(n) => Ok(Expr::Var(n.to_string())),
                            None => Err(ParseError::UnknownOperator {
                                name: name.to_string(),
                                offset,
                            }),
                        }
                    }
                    None => self.syntax(here, "unexpected character"),
                }
            }
            None => self.syntax(self.pos, "unexpected end of input"),
        }
    }

    fn application(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.atom()?;
        while let Some(c) = self.peek() {
            if c == b')' {
                break;
            }
            let arg = self.atom()?;
            e = Expr::app(e, arg);
        }
        Ok(e)
    }
}

/// Parses canonical DSL text. Holes are numbered left to right from 0.
pub fn parse_expr(text: &str, ops: &OperatorSet) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text,
        pos: 0,
        ops,
        next_hole: 0,
    };
    if p.is_hole_start() {
        return p.hole(text.len());
    }
    let e = p.application()?;
    if p.peek().is_some() {
        return p.syntax(p.pos, "trailing input");
    }
    Ok(e)
}
