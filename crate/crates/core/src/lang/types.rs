//! Monotypes, type schemes and the textual type syntax.
//!
//! Types are first-order terms over a closed set of constructors. A type
//! variable may also stand in head position (`t a`), which is how the
//! constructor classes (`Functor`, `Foldable`, ...) abstract over a
//! partially applied constructor such as `Either Int`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The closed set of type constructors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TyCon {
    Int,
    Char,
    Bool,
    Maybe,
    List,
    Pair,
    Either,
    Fun,
}

impl TyCon {
    pub const ALL: [TyCon; 8] = [
        TyCon::Int,
        TyCon::Char,
        TyCon::Bool,
        TyCon::Maybe,
        TyCon::List,
        TyCon::Pair,
        TyCon::Either,
        TyCon::Fun,
    ];

    pub fn arity(self) -> usize {
        match self {
            TyCon::Int | TyCon::Char | TyCon::Bool => 0,
            TyCon::Maybe | TyCon::List => 1,
            TyCon::Pair | TyCon::Either | TyCon::Fun => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TyCon::Int => "Int",
            TyCon::Char => "Char",
            TyCon::Bool => "Bool",
            TyCon::Maybe => "Maybe",
            TyCon::List => "[]",
            TyCon::Pair => "(,)",
            TyCon::Either => "Either",
            TyCon::Fun => "(->)",
        }
    }

    fn from_ident(s: &str) -> Option<TyCon> {
        Some(match s {
            "Int" => TyCon::Int,
            "Char" => TyCon::Char,
            "Bool" => TyCon::Bool,
            "Maybe" => TyCon::Maybe,
            "Either" => TyCon::Either,
            _ => return None,
        })
    }
}

/// A type. `Con` may be partially applied (fewer args than the arity) only
/// when it instantiates a higher-kinded variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    Con(TyCon, Vec<Ty>),
    Var(String),
    /// A type variable applied to one or more arguments, e.g. `t a`.
    App(String, Vec<Ty>),
}

impl Ty {
    pub fn int() -> Ty {
        Ty::Con(TyCon::Int, vec![])
    }
    pub fn char() -> Ty {
        Ty::Con(TyCon::Char, vec![])
    }
    pub fn bool() -> Ty {
        Ty::Con(TyCon::Bool, vec![])
    }
    pub fn var(name: &str) -> Ty {
        Ty::Var(name.to_string())
    }
    pub fn list(t: Ty) -> Ty {
        Ty::Con(TyCon::List, vec![t])
    }
    pub fn maybe(t: Ty) -> Ty {
        Ty::Con(TyCon::Maybe, vec![t])
    }
    pub fn pair(a: Ty, b: Ty) -> Ty {
        Ty::Con(TyCon::Pair, vec![a, b])
    }
    pub fn either(a: Ty, b: Ty) -> Ty {
        Ty::Con(TyCon::Either, vec![a, b])
    }
    pub fn fun(a: Ty, b: Ty) -> Ty {
        Ty::Con(TyCon::Fun, vec![a, b])
    }

    /// Builds `p1 -> p2 -> ... -> result`.
    pub fn arrows(params: &[Ty], result: Ty) -> Ty {
        params
            .iter()
            .rev()
            .fold(result, |acc, p| Ty::fun(p.clone(), acc))
    }

    pub fn as_fun(&self) -> Option<(&Ty, &Ty)> {
        match self {
            Ty::Con(TyCon::Fun, args) if args.len() == 2 => Some((&args[0], &args[1])),
            _ => None,
        }
    }

    /// Splits the leading arrows: `a -> b -> c` gives `([a, b], c)`.
    pub fn split_arrows(&self) -> (Vec<Ty>, Ty) {
        let mut params = Vec::new();
        let mut cur = self;
        while let Some((p, r)) = cur.as_fun() {
            params.push(p.clone());
            cur = r;
        }
        (params, cur.clone())
    }

    pub fn arrow_count(&self) -> usize {
        let mut n = 0;
        let mut cur = self;
        while let Some((_, r)) = cur.as_fun() {
            n += 1;
            cur = r;
        }
        n
    }

    pub fn is_mono(&self) -> bool {
        match self {
            Ty::Con(_, args) => args.iter().all(Ty::is_mono),
            Ty::Var(_) | Ty::App(..) => false,
        }
    }

    /// Free type variables in order of first occurrence.
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub(crate) fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Ty::Con(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Ty::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Ty::App(v, args) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
                args.iter().for_each(|a| a.collect_vars(out));
            }
        }
    }

    pub fn occurs(&self, var: &str) -> bool {
        match self {
            Ty::Con(_, args) => args.iter().any(|a| a.occurs(var)),
            Ty::Var(v) => v == var,
            Ty::App(v, args) => v == var || args.iter().any(|a| a.occurs(var)),
        }
    }

    /// Constructor nesting depth: base types are 0, `[Int]` is 1.
    pub fn depth(&self) -> usize {
        match self {
            Ty::Con(_, args) | Ty::App(_, args) => args
                .iter()
                .map(|a| a.depth() + 1)
                .max()
                .unwrap_or(0),
            Ty::Var(_) => 0,
        }
    }

    /// Renames variables through `f`.
    pub fn rename(&self, f: &mut impl FnMut(&str) -> String) -> Ty {
        match self {
            Ty::Con(c, args) => Ty::Con(*c, args.iter().map(|a| a.rename(f)).collect()),
            Ty::Var(v) => Ty::Var(f(v)),
            Ty::App(v, args) => Ty::App(f(v), args.iter().map(|a| a.rename(f)).collect()),
        }
    }

    /// Applies a type to further arguments, merging into the head.
    pub fn apply_args(self, more: Vec<Ty>) -> Ty {
        if more.is_empty() {
            return self;
        }
        match self {
            Ty::Con(c, mut args) => {
                args.extend(more);
                Ty::Con(c, args)
            }
            Ty::Var(v) => Ty::App(v, more),
            Ty::App(v, mut args) => {
                args.extend(more);
                Ty::App(v, args)
            }
        }
    }

    /// True when some constructor carries more arguments than its arity.
    pub fn is_overapplied(&self) -> bool {
        match self {
            Ty::Con(c, args) => args.len() > c.arity() || args.iter().any(Ty::is_overapplied),
            Ty::Var(_) => false,
            Ty::App(_, args) => args.iter().any(Ty::is_overapplied),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        // prec: 0 top level, 1 left of an arrow, 2 argument of an application
        match self {
            Ty::Var(v) => write!(f, "{v}"),
            Ty::Con(TyCon::List, args) if args.len() == 1 => write!(f, "[{}]", args[0]),
            Ty::Con(TyCon::Pair, args) if args.len() == 2 => {
                write!(f, "({}, {})", args[0], args[1])
            }
            Ty::Con(TyCon::Fun, args) if args.len() == 2 => {
                if prec > 0 {
                    write!(f, "(")?;
                }
                args[0].fmt_prec(f, 1)?;
                write!(f, " -> ")?;
                args[1].fmt_prec(f, 0)?;
                if prec > 0 {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Ty::Con(c, args) if args.is_empty() => write!(f, "{}", c.name()),
            Ty::Con(c, args) => fmt_app(f, prec, c.name(), args),
            Ty::App(v, args) => fmt_app(f, prec, v, args),
        }
    }
}

fn fmt_app(f: &mut fmt::Formatter<'_>, prec: u8, head: &str, args: &[Ty]) -> fmt::Result {
    if prec > 1 {
        write!(f, "(")?;
    }
    write!(f, "{head}")?;
    for a in args {
        write!(f, " ")?;
        a.fmt_prec(f, 2)?;
    }
    if prec > 1 {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Typeclasses known to the type checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    Enum,
    Foldable,
    Traversable,
    Functor,
    Monoid,
    Semigroup,
    Eq,
    Applicative,
}

impl Class {
    pub const ALL: [Class; 8] = [
        Class::Enum,
        Class::Foldable,
        Class::Traversable,
        Class::Functor,
        Class::Monoid,
        Class::Semigroup,
        Class::Eq,
        Class::Applicative,
    ];

    /// Constructor classes range over type constructors of kind `* -> *`.
    pub fn is_constructor_class(self) -> bool {
        matches!(
            self,
            Class::Foldable | Class::Traversable | Class::Functor | Class::Applicative
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Enum => "Enum",
            Class::Foldable => "Foldable",
            Class::Traversable => "Traversable",
            Class::Functor => "Functor",
            Class::Monoid => "Monoid",
            Class::Semigroup => "Semigroup",
            Class::Eq => "Eq",
            Class::Applicative => "Applicative",
        }
    }

    pub fn from_name(s: &str) -> Option<Class> {
        Class::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub class: Class,
    pub target: Ty,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.class)?;
        self.target.fmt_prec(f, 2)
    }
}

/// A type scheme `forall vars. constraints => body`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Scheme {
    pub quantified: Vec<String>,
    pub constraints: Vec<Constraint>,
    pub body: Ty,
}

impl Scheme {
    pub fn mono(body: Ty) -> Scheme {
        Scheme {
            quantified: body.vars(),
            constraints: vec![],
            body,
        }
    }

    /// Renames all variables to `a, b, c, ...` in order of first occurrence
    /// in the body, then in the constraints.
    pub fn canonical(&self) -> Scheme {
        let mut order = self.body.vars();
        for c in &self.constraints {
            c.target.collect_vars(&mut order);
        }
        for q in &self.quantified {
            if !order.contains(q) {
                order.push(q.clone());
            }
        }
        let names: Vec<String> = (0..order.len()).map(var_name).collect();
        let mut map = |v: &str| {
            order
                .iter()
                .position(|o| o == v)
                .map(|i| names[i].clone())
                .unwrap_or_else(|| v.to_string())
        };
        let body = self.body.rename(&mut map);
        let mut constraints: Vec<Constraint> = self
            .constraints
            .iter()
            .map(|c| Constraint {
                class: c.class,
                target: c.target.rename(&mut map),
            })
            .collect();
        constraints.sort();
        constraints.dedup();
        Scheme {
            quantified: names,
            constraints,
            body,
        }
    }
}

/// `a`, `b`, ..., `z`, `a1`, `b1`, ...
pub fn var_name(i: usize) -> String {
    let letter = (b'a' + (i % 26) as u8) as char;
    if i < 26 {
        letter.to_string()
    } else {
        format!("{letter}{}", i / 26)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constraints.len() {
            0 => {}
            1 => write!(f, "{} => ", self.constraints[0])?,
            _ => {
                write!(f, "(")?;
                for (i, c) in self.constraints.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ") => ")?;
            }
        }
        write!(f, "{}", self.body)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("type syntax error at offset {offset}: {message}")]
pub struct TypeSyntaxError {
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Arrow,
    DArrow,
}

fn lex_type(src: &str) -> Result<Vec<(usize, Tok)>, TypeSyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '(' => {
                out.push((i, Tok::LParen));
                i += 1
            }
            ')' => {
                out.push((i, Tok::RParen));
                i += 1
            }
            '[' => {
                out.push((i, Tok::LBracket));
                i += 1
            }
            ']' => {
                out.push((i, Tok::RBracket));
                i += 1
            }
            ',' => {
                out.push((i, Tok::Comma));
                i += 1
            }
            '-' if bytes.get(i + 1) == Some(&b'>') => {
                out.push((i, Tok::Arrow));
                i += 2
            }
            '=' if bytes.get(i + 1) == Some(&b'>') => {
                out.push((i, Tok::DArrow));
                i += 2
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
            }
            _ => {
                return Err(TypeSyntaxError {
                    offset: i,
                    message: format!("unexpected character {c:?}"),
                })
            }
        }
    }
    Ok(out)
}

struct TyParser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
    _src: &'a str,
}

impl<'a> TyParser<'a> {
    fn new(src: &'a str) -> Result<Self, TypeSyntaxError> {
        Ok(TyParser {
            toks: lex_type(src)?,
            pos: 0,
            len: src.len(),
            _src: src,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.len)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, TypeSyntaxError> {
        Err(TypeSyntaxError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), TypeSyntaxError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {tok:?}"))
        }
    }

    fn ty(&mut self) -> Result<Ty, TypeSyntaxError> {
        let lhs = self.btype()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            let rhs = self.ty()?;
            Ok(Ty::fun(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Ident(_)) | Some(Tok::LParen) | Some(Tok::LBracket)
        )
    }

    fn btype(&mut self) -> Result<Ty, TypeSyntaxError> {
        let head = self.atom()?;
        let mut args = Vec::new();
        while self.starts_atom() {
            args.push(self.atom()?);
        }
        let ty = head.apply_args(args);
        if ty.is_overapplied() {
            return self.err("constructor applied to too many arguments");
        }
        Ok(ty)
    }

    fn atom(&mut self) -> Result<Ty, TypeSyntaxError> {
        match self.peek().cloned() {
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(c) = TyCon::from_ident(&name) {
                    Ok(Ty::Con(c, vec![]))
                } else if name.chars().next().is_some_and(|c| c.is_ascii_lowercase()) {
                    Ok(Ty::Var(name))
                } else {
                    self.pos -= 1;
                    self.err(format!("unknown type constructor {name}"))
                }
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::RBracket) {
                    self.pos += 1;
                    return Ok(Ty::Con(TyCon::List, vec![]));
                }
                let inner = self.ty()?;
                self.expect(Tok::RBracket)?;
                Ok(Ty::list(inner))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Comma) => {
                        self.pos += 1;
                        self.expect(Tok::RParen)?;
                        return Ok(Ty::Con(TyCon::Pair, vec![]));
                    }
                    Some(Tok::Arrow) => {
                        self.pos += 1;
                        self.expect(Tok::RParen)?;
                        return Ok(Ty::Con(TyCon::Fun, vec![]));
                    }
                    _ => {}
                }
                let first = self.ty()?;
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    let second = self.ty()?;
                    self.expect(Tok::RParen)?;
                    Ok(Ty::pair(first, second))
                } else {
                    self.expect(Tok::RParen)?;
                    Ok(first)
                }
            }
            _ => self.err("expected a type"),
        }
    }

    fn finish(&self) -> Result<(), TypeSyntaxError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            self.err("trailing input")
        }
    }
}

/// Parses `Int`, `[a]`, `(a, b)`, `Maybe a`, `Either a b`, `a -> b`, `t a`.
pub fn parse_type(src: &str) -> Result<Ty, TypeSyntaxError> {
    let mut p = TyParser::new(src)?;
    let ty = p.ty()?;
    p.finish()?;
    Ok(ty)
}

/// Parses a scheme such as `(Foldable t, Monoid m) => (a -> m) -> t a -> m`.
/// All variables are implicitly quantified.
pub fn parse_scheme(src: &str) -> Result<Scheme, TypeSyntaxError> {
    let (ctx, body_src, body_off) = match src.find("=>") {
        Some(i) => (Some(&src[..i]), &src[i + 2..], i + 2),
        None => (None, src, 0),
    };
    let body = parse_type(body_src).map_err(|e| TypeSyntaxError {
        offset: e.offset + body_off,
        ..e
    })?;
    let mut constraints = Vec::new();
    if let Some(ctx) = ctx {
        let ctx = ctx.trim();
        let inner = if ctx.starts_with('(') && ctx.ends_with(')') && ctx.contains(',') {
            &ctx[1..ctx.len() - 1]
        } else {
            ctx
        };
        for part in split_top_level(inner) {
            let part = part.trim();
            let (cls, rest) = part.split_once(' ').ok_or_else(|| TypeSyntaxError {
                offset: 0,
                message: format!("malformed constraint {part:?}"),
            })?;
            let class = Class::from_name(cls).ok_or_else(|| TypeSyntaxError {
                offset: 0,
                message: format!("unknown class {cls}"),
            })?;
            constraints.push(Constraint {
                class,
                target: parse_type(rest)?,
            });
        }
    }
    let mut quantified = body.vars();
    for c in &constraints {
        c.target.collect_vars(&mut quantified);
    }
    Ok(Scheme {
        quantified,
        constraints,
        body,
    })
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// Every variable occurring anywhere in the given types.
pub fn vars_of<'a>(tys: impl IntoIterator<Item = &'a Ty>) -> BTreeSet<String> {
    let mut out = Vec::new();
    for t in tys {
        t.collect_vars(&mut out);
    }
    out.into_iter().collect()
}
