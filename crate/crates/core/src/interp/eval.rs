//! Strict, fuel-bounded evaluation of elaborated programs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::value::{Closure, Side, Value};
use crate::lang::{elaborate, Builtin, Expr, OperatorSet, Ty, TyCon, TypeError, TypedExpr};

pub const DEFAULT_FUEL: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorKind {
    OutOfRange,
    PartialFunction,
    Timeout,
    Other,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::OutOfRange => "OutOfRange",
            ErrorKind::PartialFunction => "PartialFunction",
            ErrorKind::Timeout => "Timeout",
            ErrorKind::Other => "Other",
        }
    }
}

/// A runtime failure. Equality looks at the kind only.
#[derive(Clone, Debug, Error)]
#[error("{}: {message}", kind.name())]
pub struct EvalError {
    pub kind: ErrorKind,
    pub message: String,
}

impl PartialEq for EvalError {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for EvalError {}

impl EvalError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        EvalError {
            kind,
            message: message.into(),
        }
    }
}

pub type Outcome = Result<Value, EvalError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

type R = Result<Value, EvalError>;

fn other(message: impl Into<String>) -> EvalError {
    EvalError::new(ErrorKind::Other, message)
}

/// Result type after peeling `n` arrows.
fn result_after(ty: &Ty, n: usize) -> &Ty {
    let mut cur = ty;
    for _ in 0..n {
        cur = cur.as_fun().map(|(_, r)| r).unwrap_or(cur);
    }
    cur
}

struct Machine {
    fuel: u64,
    used: u64,
}

impl Machine {
    fn tick(&mut self, n: u64) -> Result<(), EvalError> {
        self.used += n;
        if self.used > self.fuel {
            Err(EvalError::new(ErrorKind::Timeout, "fuel exhausted"))
        } else {
            Ok(())
        }
    }

    fn node(&mut self, e: &TypedExpr) -> R {
        match e {
            TypedExpr::Op(b, ty) => {
                if b.arity() == 0 {
                    self.tick(1)?;
                    self.run(*b, ty, Vec::new())
                } else {
                    Ok(Value::Fun(Arc::new(Closure {
                        op: *b,
                        ty: ty.clone(),
                        args: Vec::new(),
                        label: None,
                    })))
                }
            }
            TypedExpr::App(f, x) => {
                let f = self.node(f)?;
                let x = self.node(x)?;
                self.apply(&f, x)
            }
        }
    }

    fn apply(&mut self, f: &Value, x: Value) -> R {
        self.tick(1)?;
        let Value::Fun(c) = f else {
            return Err(other("application of a non-function"));
        };
        let mut args = c.args.clone();
        args.push(x);
        if args.len() == c.op.arity() {
            self.run(c.op, &c.ty, args)
        } else {
            Ok(Value::Fun(Arc::new(Closure {
                op: c.op,
                ty: c.ty.clone(),
                args,
                label: None,
            })))
        }
    }

    fn run(&mut self, op: Builtin, ty: &Ty, args: Vec<Value>) -> R {
        let mut it = args.into_iter();
        let mut next = || it.next().expect("arity checked");
        match op {
            Builtin::Zero => Ok(Value::Int(0)),
            Builtin::Nil => Ok(Value::List(Vec::new())),
            Builtin::False => Ok(Value::Bool(false)),
            Builtin::Mempty => mempty_at(ty),
            Builtin::Just => Ok(Value::just(next())),
            Builtin::Maybe => {
                let (default, f, m) = (next(), next(), next());
                match m {
                    Value::Maybe(None) => Ok(default),
                    Value::Maybe(Some(x)) => self.apply(&f, *x),
                    _ => Err(other("maybe_ on a non-Maybe")),
                }
            }
            Builtin::Cons => {
                let (x, xs) = (next(), next());
                let Value::List(mut xs) = xs else {
                    return Err(other("cons onto a non-list"));
                };
                self.tick(xs.len() as u64)?;
                xs.insert(0, x);
                Ok(Value::List(xs))
            }
            Builtin::Length => Ok(Value::Int(elements(next())?.len() as i64)),
            Builtin::Pair => Ok(Value::pair(next(), next())),
            Builtin::Zip => {
                let (Value::List(xs), Value::List(ys)) = (next(), next()) else {
                    return Err(other("zip on non-lists"));
                };
                self.tick(xs.len().min(ys.len()) as u64)?;
                Ok(Value::List(
                    xs.into_iter().zip(ys).map(|(a, b)| Value::pair(a, b)).collect(),
                ))
            }
            Builtin::Unzip => {
                let Value::List(ps) = next() else {
                    return Err(other("unzip on a non-list"));
                };
                self.tick(ps.len() as u64)?;
                let mut ls = Vec::with_capacity(ps.len());
                let mut rs = Vec::with_capacity(ps.len());
                for p in ps {
                    let Value::Pair(a, b) = p else {
                        return Err(other("unzip on a non-pair element"));
                    };
                    ls.push(*a);
                    rs.push(*b);
                }
                Ok(Value::pair(Value::List(ls), Value::List(rs)))
            }
            Builtin::ToEnum => {
                let Value::Int(n) = next() else {
                    return Err(other("toEnum on a non-Int"));
                };
                match result_after(ty, 1) {
                    Ty::Con(TyCon::Int, _) => Ok(Value::Int(n)),
                    Ty::Con(TyCon::Char, _) => u32::try_from(n)
                        .ok()
                        .and_then(char::from_u32)
                        .map(Value::Char)
                        .ok_or_else(|| {
                            EvalError::new(ErrorKind::OutOfRange, format!("toEnum {n} :: Char"))
                        }),
                    t => Err(other(format!("toEnum at {t}"))),
                }
            }
            Builtin::FromEnum => match next() {
                Value::Int(n) => Ok(Value::Int(n)),
                Value::Char(c) => Ok(Value::Int(c as i64)),
                _ => Err(other("fromEnum on a non-Enum")),
            },
            Builtin::FoldMap => {
                let (f, t) = (next(), next());
                let mut acc = mempty_at(result_after(ty, 2))?;
                for x in elements(t)? {
                    let y = self.apply(&f, x)?;
                    acc = self.mappend(acc, y)?;
                }
                Ok(acc)
            }
            Builtin::Elem => {
                let (x, t) = (next(), next());
                let xs = elements(t)?;
                self.tick(xs.len() as u64)?;
                Ok(Value::Bool(xs.contains(&x)))
            }
            Builtin::SequenceA | Builtin::Sequence => {
                let out_ty = result_after(ty, 1);
                self.sequence(next(), out_ty)
            }
            Builtin::Fmap => {
                let (f, t) = (next(), next());
                self.fmap(t, &mut |m, x| m.apply(&f, x))
            }
            Builtin::Mappend => {
                let (a, b) = (next(), next());
                self.mappend(a, b)
            }
            Builtin::Compose => {
                let (f, g, x) = (next(), next(), next());
                let y = self.apply(&g, x)?;
                self.apply(&f, y)
            }
            Builtin::And => match (next(), next()) {
                (Value::Bool(a), Value::Bool(b)) => Ok(Value::Bool(a && b)),
                _ => Err(other("and on non-Bools")),
            },
        }
    }

    fn fmap(&mut self, t: Value, f: &mut dyn FnMut(&mut Machine, Value) -> R) -> R {
        match t {
            Value::List(xs) => {
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    out.push(f(self, x)?);
                }
                Ok(Value::List(out))
            }
            Value::Maybe(None) => Ok(Value::nothing()),
            Value::Maybe(Some(x)) => Ok(Value::just(f(self, *x)?)),
            Value::Pair(a, b) => Ok(Value::Pair(a, Box::new(f(self, *b)?))),
            Value::Either(Side::Left, e) => Ok(Value::Either(Side::Left, e)),
            Value::Either(Side::Right, x) => Ok(Value::right(f(self, *x)?)),
            _ => Err(other("fmap over a non-functor")),
        }
    }

    fn mappend(&mut self, a: Value, b: Value) -> R {
        self.tick(1)?;
        match (a, b) {
            (Value::List(mut xs), Value::List(ys)) => {
                self.tick(ys.len() as u64)?;
                xs.extend(ys);
                Ok(Value::List(xs))
            }
            (Value::Maybe(None), b @ Value::Maybe(_)) => Ok(b),
            (a @ Value::Maybe(_), Value::Maybe(None)) => Ok(a),
            (Value::Maybe(Some(x)), Value::Maybe(Some(y))) => Ok(Value::just(self.mappend(*x, *y)?)),
            (Value::Pair(a1, b1), Value::Pair(a2, b2)) => {
                Ok(Value::pair(self.mappend(*a1, *a2)?, self.mappend(*b1, *b2)?))
            }
            (Value::Either(Side::Left, _), b @ Value::Either(..)) => Ok(b),
            (a @ Value::Either(Side::Right, _), Value::Either(..)) => Ok(a),
            _ => Err(other("mappend on non-semigroup values")),
        }
    }

    /// `liftA2 g fa fb` for the applicative given by the values' shape.
    fn lift_a2(&mut self, fa: Value, fb: Value, g: &dyn Fn(Value, Value) -> Value) -> R {
        match (fa, fb) {
            (Value::Maybe(Some(a)), Value::Maybe(Some(b))) => Ok(Value::just(g(*a, *b))),
            (Value::Maybe(_), Value::Maybe(_)) => Ok(Value::nothing()),
            (Value::List(xs), Value::List(ys)) => {
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for x in &xs {
                    for y in &ys {
                        let v = g(x.clone(), y.clone());
                        self.tick(v.size())?;
                        out.push(v);
                    }
                }
                Ok(Value::List(out))
            }
            (Value::Either(Side::Left, e), Value::Either(..)) => Ok(Value::Either(Side::Left, e)),
            (Value::Either(Side::Right, _), Value::Either(Side::Left, e)) => {
                Ok(Value::Either(Side::Left, e))
            }
            (Value::Either(Side::Right, a), Value::Either(Side::Right, b)) => Ok(Value::right(g(*a, *b))),
            _ => Err(other("liftA2 on mismatched applicatives")),
        }
    }

    /// `sequenceA` where `out_ty` is `f (t a)`; `pure` is taken from `f`.
    fn sequence(&mut self, t: Value, out_ty: &Ty) -> R {
        let pure = |v: Value| pure_at(out_ty, v);
        match t {
            Value::List(xs) => {
                let mut acc = pure(Value::List(Vec::new()))?;
                for fx in xs.into_iter().rev() {
                    acc = self.lift_a2(fx, acc, &|x, rest| {
                        let Value::List(mut r) = rest else { unreachable!() };
                        r.insert(0, x);
                        Value::List(r)
                    })?;
                }
                Ok(acc)
            }
            Value::Maybe(None) => pure(Value::nothing()),
            Value::Maybe(Some(fx)) => self.fmap(*fx, &mut |_, x| Ok(Value::just(x))),
            Value::Pair(a, fx) => self.fmap(*fx, &mut |_, x| Ok(Value::Pair(a.clone(), Box::new(x)))),
            Value::Either(Side::Left, e) => pure(Value::Either(Side::Left, e)),
            Value::Either(Side::Right, fx) => self.fmap(*fx, &mut |_, x| Ok(Value::right(x))),
            _ => Err(other("sequenceA over a non-traversable")),
        }
    }
}

/// Elements visited by the Foldable instance of the value's constructor.
fn elements(t: Value) -> Result<Vec<Value>, EvalError> {
    match t {
        Value::List(xs) => Ok(xs),
        Value::Maybe(m) => Ok(m.into_iter().map(|b| *b).collect()),
        Value::Pair(_, b) => Ok(vec![*b]),
        Value::Either(Side::Left, _) => Ok(vec![]),
        Value::Either(Side::Right, x) => Ok(vec![*x]),
        _ => Err(other("fold over a non-foldable")),
    }
}

fn mempty_at(ty: &Ty) -> R {
    match ty {
        Ty::Con(TyCon::List, _) => Ok(Value::List(Vec::new())),
        Ty::Con(TyCon::Maybe, _) => Ok(Value::nothing()),
        t => Err(other(format!("mempty at {t}"))),
    }
}

fn pure_at(fty: &Ty, v: Value) -> R {
    match fty {
        Ty::Con(TyCon::Maybe, _) => Ok(Value::just(v)),
        Ty::Con(TyCon::List, _) => Ok(Value::List(vec![v])),
        Ty::Con(TyCon::Either, _) => Ok(Value::right(v)),
        t => Err(other(format!("pure at {t}"))),
    }
}

/// A program elaborated at one monomorphic instance, ready to run on many
/// inputs.
#[derive(Clone, Debug)]
pub struct Evaluator {
    typed: TypedExpr,
}

impl Evaluator {
    /// `ty` is the full instance type, parameters included.
    pub fn new(program: &Expr, ops: &OperatorSet, ty: &Ty) -> Result<Evaluator, TypeError> {
        Ok(Evaluator {
            typed: elaborate(program, ops, ty)?,
        })
    }

    pub fn run(&self, args: &[Value], fuel: u64) -> Outcome {
        let mut m = Machine { fuel, used: 0 };
        let mut v = m.node(&self.typed)?;
        for a in args {
            v = m.apply(&v, a.clone())?;
        }
        Ok(v)
    }
}

/// Evaluates `program`, used at instance type `ty`, on `args`. Programs that
/// do not type-check at `ty` yield `Err(Other)`.
pub fn eval(program: &Expr, ops: &OperatorSet, ty: &Ty, args: &[Value], fuel: u64) -> Outcome {
    match Evaluator::new(program, ops, ty) {
        Ok(ev) => ev.run(args, fuel),
        Err(e) => Err(other(e.to_string())),
    }
}

/// The value of a closed program at `ty`; functions carry the program text
/// as their label.
pub fn program_value(program: &Expr, ops: &OperatorSet, ty: &Ty) -> Result<Value, ProgramError> {
    let v = Evaluator::new(program, ops, ty)?.run(&[], DEFAULT_FUEL)?;
    Ok(match v {
        Value::Fun(c) => {
            let mut c = (*c).clone();
            c.label = Some(Arc::from(program.to_string()));
            Value::Fun(Arc::new(c))
        }
        v => v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::value::{render_value, Style};
    use crate::lang::{parse_expr, parse_type};

    fn ops() -> OperatorSet {
        OperatorSet::experiment()
    }

    fn run(src: &str, ty: &str, args: &[Value]) -> Outcome {
        let e = parse_expr(src, &ops()).unwrap();
        eval(&e, &ops(), &parse_type(ty).unwrap(), args, DEFAULT_FUEL)
    }

    fn ints(xs: &[i64]) -> Value {
        Value::List(xs.iter().map(|&x| Value::Int(x)).collect())
    }

    #[test]
    fn figure_program() {
        let input = Value::List(vec![
            Value::pair(Value::Int(17), Value::Char('0')),
            Value::pair(Value::Int(20), Value::Char('2')),
        ]);
        let ty = "[(Int, Char)] -> Maybe ([Int], [Char])";
        let out = run("compose just unzip", ty, &[input]).unwrap();
        assert_eq!(
            render_value(&out, &parse_type("Maybe ([Int], [Char])").unwrap(), Style::Output),
            "Just ([17, 20], \"02\")"
        );
    }

    #[test]
    fn length_of_empty() {
        assert_eq!(run("length", "[Int] -> Int", &[ints(&[])]), Ok(Value::Int(0)));
        assert_eq!(
            run("length", "Either Char Int -> Int", &[Value::left(Value::Char('a'))]),
            Ok(Value::Int(0))
        );
        assert_eq!(
            run("length", "(Char, Int) -> Int", &[Value::pair(Value::Char('a'), Value::Int(1))]),
            Ok(Value::Int(1))
        );
    }

    #[test]
    fn to_enum_char_range() {
        let err = run("toEnum", "Int -> Char", &[Value::Int(-5)]).unwrap_err();
        assert_eq!(err.kind, ErrorKind::OutOfRange);
        assert_eq!(run("toEnum", "Int -> Char", &[Value::Int(48)]), Ok(Value::Char('0')));
        assert_eq!(run("toEnum", "Int -> Int", &[Value::Int(-5)]), Ok(Value::Int(-5)));
    }

    #[test]
    fn type_directed_mempty_and_pure() {
        assert_eq!(run("(foldMap just)", "[[Int]] -> Maybe [Int]", &[Value::List(vec![])]), Ok(Value::nothing()));
        assert_eq!(
            run("(foldMap just)", "[[Int]] -> Maybe [Int]", &[Value::List(vec![ints(&[1]), ints(&[2, 3])])]),
            Ok(Value::just(ints(&[1, 2, 3])))
        );
        assert_eq!(
            run("sequenceA", "[Maybe Int] -> Maybe [Int]", &[Value::List(vec![])]),
            Ok(Value::just(ints(&[])))
        );
        assert_eq!(
            run("sequenceA", "[[Int]] -> [[Int]]", &[Value::List(vec![ints(&[1, 2]), ints(&[3, 4])])]),
            Ok(Value::List(vec![ints(&[1, 3]), ints(&[1, 4]), ints(&[2, 3]), ints(&[2, 4])]))
        );
        assert_eq!(
            run(
                "sequence",
                "[Maybe Int] -> Maybe [Int]",
                &[Value::List(vec![Value::just(Value::Int(1)), Value::nothing()])]
            ),
            Ok(Value::nothing())
        );
        assert_eq!(
            run("sequenceA", "Maybe [Int] -> [Maybe Int]", &[Value::nothing()]),
            Ok(Value::List(vec![Value::nothing()]))
        );
    }

    #[test]
    fn semigroup_instances() {
        let e = |s: Side, v: i64| Value::Either(s, Box::new(Value::Int(v)));
        let ty = "Either Int Int -> Either Int Int -> Either Int Int";
        assert_eq!(run("mappend", ty, &[e(Side::Left, 1), e(Side::Right, 2)]), Ok(e(Side::Right, 2)));
        assert_eq!(run("mappend", ty, &[e(Side::Right, 1), e(Side::Right, 2)]), Ok(e(Side::Right, 1)));
        assert_eq!(
            run("mappend", "[Int] -> [Int] -> [Int]", &[ints(&[1]), ints(&[2])]),
            Ok(ints(&[1, 2]))
        );
    }

    #[test]
    fn fmap_and_elem() {
        assert_eq!(
            run("(fmap just)", "[Int] -> [Maybe Int]", &[ints(&[1, 2])]),
            Ok(Value::List(vec![Value::just(Value::Int(1)), Value::just(Value::Int(2))]))
        );
        assert_eq!(
            run("elem", "Int -> [Int] -> Bool", &[Value::Int(2), ints(&[1, 2])]),
            Ok(Value::Bool(true))
        );
        assert_eq!(
            run("(maybe_ zero fromEnum)", "Maybe Char -> Int", &[Value::just(Value::Char('0'))]),
            Ok(Value::Int(48))
        );
    }

    #[test]
    fn function_arguments() {
        let ty = parse_type("Int -> Maybe Int").unwrap();
        let f = program_value(&parse_expr("just", &ops()).unwrap(), &ops(), &ty).unwrap();
        assert_eq!(
            run("fmap", "(Int -> Maybe Int) -> [Int] -> [Maybe Int]", &[f, ints(&[4])]),
            Ok(Value::List(vec![Value::just(Value::Int(4))]))
        );
    }

    #[test]
    fn fuel_exhaustion_is_timeout() {
        let big = Value::List((0..6).map(|_| ints(&[1, 2, 3, 4, 5])).collect());
        let e = parse_expr("sequenceA", &ops()).unwrap();
        let ty = parse_type("[[Int]] -> [[Int]]").unwrap();
        let out = eval(&e, &ops(), &ty, &[big], 100);
        assert_eq!(out.unwrap_err().kind, ErrorKind::Timeout);
    }
}
