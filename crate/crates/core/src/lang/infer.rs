//! Unification and constraint-carrying type inference.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::expr::Expr;
use super::grammar::OperatorSet;
use super::ops::Builtin;
use super::typeclass::TypeclassTable;
use super::types::{vars_of, Class, Constraint, Scheme, Ty};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UnifyError {
    #[error("cannot unify {0} with {1}")]
    Mismatch(Ty, Ty),
    #[error("occurs check: {0} occurs in {1}")]
    OccursCheck(String, Ty),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("type mismatch: expected {expected}, found {found}")]
    Mismatch { expected: Ty, found: Ty },
    #[error("occurs check: {var} occurs in {ty}")]
    OccursCheck { var: String, ty: Ty },
    #[error("no instance for {class} {ty}")]
    UnsatisfiedConstraint { class: Class, ty: Ty },
    #[error("unknown operator {0}")]
    UnknownOperator(String),
    #[error("cannot elaborate an expression containing holes")]
    HasHoles,
}

impl From<UnifyError> for TypeError {
    fn from(e: UnifyError) -> Self {
        match e {
            UnifyError::Mismatch(a, b) => TypeError::Mismatch {
                expected: a,
                found: b,
            },
            UnifyError::OccursCheck(var, ty) => TypeError::OccursCheck { var, ty },
        }
    }
}

/// A substitution from type variables to types, kept in triangular form.
#[derive(Clone, Debug, Default)]
pub struct Subst {
    map: HashMap<String, Ty>,
}

impl Subst {
    pub fn get(&self, var: &str) -> Option<Ty> {
        self.map.get(var).map(|t| self.apply(t))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply(&self, t: &Ty) -> Ty {
        match t {
            Ty::Con(c, args) => Ty::Con(*c, args.iter().map(|a| self.apply(a)).collect()),
            Ty::Var(v) => match self.map.get(v) {
                Some(bound) => self.apply(bound),
                None => t.clone(),
            },
            Ty::App(v, args) => {
                let args: Vec<Ty> = args.iter().map(|a| self.apply(a)).collect();
                match self.map.get(v) {
                    Some(bound) => self.apply(bound).apply_args(args),
                    None => Ty::App(v.clone(), args),
                }
            }
        }
    }

    fn bind(&mut self, var: &str, t: Ty) -> Result<(), UnifyError> {
        if let Ty::Var(v) = &t {
            if v == var {
                return Ok(());
            }
        }
        if t.occurs(var) {
            return Err(UnifyError::OccursCheck(var.to_string(), t));
        }
        self.map.insert(var.to_string(), t);
        Ok(())
    }

    pub fn unify(&mut self, a: &Ty, b: &Ty) -> Result<(), UnifyError> {
        let a = self.apply(a);
        let b = self.apply(b);
        match (&a, &b) {
            (Ty::Var(x), _) => self.bind(x, b.clone()),
            (_, Ty::Var(y)) => self.bind(y, a.clone()),
            (Ty::Con(c1, xs), Ty::Con(c2, ys)) if c1 == c2 && xs.len() == ys.len() => {
                for (x, y) in xs.iter().zip(ys) {
                    self.unify(x, y)?;
                }
                Ok(())
            }
            (Ty::App(v, xs), other) | (other, Ty::App(v, xs)) => {
                let (other_head, other_args): (Ty, &[Ty]) = match other {
                    Ty::Con(c, ys) if ys.len() >= xs.len() => {
                        (Ty::Con(*c, ys[..ys.len() - xs.len()].to_vec()), ys.as_slice())
                    }
                    Ty::App(u, ys) if ys.len() >= xs.len() => {
                        let keep = ys.len() - xs.len();
                        let head = if keep == 0 {
                            Ty::Var(u.clone())
                        } else {
                            Ty::App(u.clone(), ys[..keep].to_vec())
                        };
                        (head, ys.as_slice())
                    }
                    Ty::App(_, ys) if ys.len() < xs.len() => {
                        // Symmetric case: the other side has fewer arguments.
                        return self.unify(other, &Ty::App(v.clone(), xs.clone()));
                    }
                    _ => return Err(UnifyError::Mismatch(a.clone(), b.clone())),
                };
                let tail = &other_args[other_args.len() - xs.len()..];
                self.bind(v, other_head)?;
                for (x, y) in xs.iter().zip(tail) {
                    self.unify(x, y)?;
                }
                Ok(())
            }
            _ => Err(UnifyError::Mismatch(a.clone(), b.clone())),
        }
    }
}

/// Most general unifier of two types.
pub fn unify(a: &Ty, b: &Ty) -> Result<Subst, UnifyError> {
    let mut s = Subst::default();
    s.unify(a, b)?;
    Ok(s)
}

/// An operator occurrence annotated with its type at one use site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypedExpr {
    Op(Builtin, Ty),
    App(Box<TypedExpr>, Box<TypedExpr>),
}

struct Infer<'a> {
    ops: &'a OperatorSet,
    table: TypeclassTable,
    subst: Subst,
    fresh: usize,
    constraints: Vec<Constraint>,
    occurrences: Vec<Ty>,
    hole_types: Vec<Ty>,
}

impl<'a> Infer<'a> {
    fn new(ops: &'a OperatorSet) -> Self {
        Infer {
            ops,
            table: TypeclassTable,
            subst: Subst::default(),
            fresh: 0,
            constraints: Vec::new(),
            occurrences: Vec::new(),
            hole_types: Vec::new(),
        }
    }

    fn fresh_name(&mut self) -> String {
        self.fresh += 1;
        format!("_{}", self.fresh)
    }

    fn freshen(&mut self, t: &Ty) -> (Ty, HashMap<String, String>) {
        let mut map: HashMap<String, String> = HashMap::new();
        let mut names = Vec::new();
        t.collect_vars(&mut names);
        for n in names {
            let f = self.fresh_name();
            map.insert(n, f);
        }
        let ty = t.rename(&mut |v| map[v].clone());
        (ty, map)
    }

    fn instantiate(&mut self, s: &Scheme) -> Ty {
        let (body, map) = self.freshen(&s.body);
        for c in &s.constraints {
            let target = c.target.rename(&mut |v| map.get(v).cloned().unwrap_or_else(|| v.to_string()));
            self.constraints.push(Constraint {
                class: c.class,
                target,
            });
        }
        body
    }

    fn infer(&mut self, e: &Expr) -> Result<Ty, TypeError> {
        match e {
            Expr::Var(name) => {
                let op = self
                    .ops
                    .get(name)
                    .ok_or_else(|| TypeError::UnknownOperator(name.clone()))?;
                let scheme = op.scheme.clone();
                let t = self.instantiate(&scheme);
                self.occurrences.push(t.clone());
                Ok(t)
            }
            Expr::Hole { ann, .. } => {
                let (t, _) = self.freshen(ann);
                self.hole_types.push(t.clone());
                Ok(t)
            }
            Expr::App(f, x) => {
                let tf = self.infer(f)?;
                let tx = self.infer(x)?;
                let r = Ty::Var(self.fresh_name());
                let tf = self.subst.apply(&tf);
                match tf.as_fun() {
                    Some((p, res)) => {
                        self.subst.unify(p, &tx).map_err(|err| match err {
                            UnifyError::Mismatch(..) => TypeError::Mismatch {
                                expected: self.subst.apply(p),
                                found: self.subst.apply(&tx),
                            },
                            other => other.into(),
                        })?;
                        Ok(res.clone())
                    }
                    None => {
                        self.subst.unify(&tf, &Ty::fun(tx, r.clone()))?;
                        Ok(r)
                    }
                }
            }
        }
    }

    fn residual_constraints(&self) -> Result<Vec<Constraint>, TypeError> {
        let mut out = Vec::new();
        for c in &self.constraints {
            let applied = Constraint {
                class: c.class,
                target: self.subst.apply(&c.target),
            };
            match self.table.reduce(&applied) {
                Ok(r) => out.extend(r),
                Err(bad) => {
                    return Err(TypeError::UnsatisfiedConstraint {
                        class: bad.class,
                        ty: bad.target,
                    })
                }
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Generalizes the inferred type, rejecting unresolvable constraints.
    fn finish(&self, ty: &Ty) -> Result<Scheme, TypeError> {
        let body = self.subst.apply(ty);
        let residual = self.residual_constraints()?;
        let holes: Vec<Ty> = self.hole_types.iter().map(|t| self.subst.apply(t)).collect();
        let hole_vars = vars_of(holes.iter());
        let mut visible: BTreeSet<String> = vars_of([&body]);
        visible.extend(hole_vars.iter().cloned());
        for c in &residual {
            let cvars = c.target.vars();
            let ambiguous = cvars.iter().any(|v| !visible.contains(v));
            // A bare constrained result has nothing left to resolve it.
            let bare = matches!((&body, &c.target), (Ty::Var(b), Ty::Var(t)) if b == t && !hole_vars.contains(t));
            if ambiguous || bare {
                return Err(TypeError::UnsatisfiedConstraint {
                    class: c.class,
                    ty: c.target.clone(),
                });
            }
        }
        let mut quantified = body.vars();
        for c in &residual {
            c.target.collect_vars(&mut quantified);
        }
        Ok(Scheme {
            quantified,
            constraints: residual,
            body,
        }
        .canonical())
    }
}

/// Principal scheme of an expression. Holes stand for values of their
/// annotated type, with annotation variables taken fresh per hole.
pub fn infer_type(e: &Expr, ops: &OperatorSet) -> Result<Scheme, TypeError> {
    infer_with_target(e, ops, None)
}

/// As [`infer_type`], additionally requiring the expression to have an
/// instance of `target` (variables in `target` are flexible).
pub fn infer_with_target(
    e: &Expr,
    ops: &OperatorSet,
    target: Option<&Ty>,
) -> Result<Scheme, TypeError> {
    let mut inf = Infer::new(ops);
    let ty = inf.infer(e)?;
    if let Some(target) = target {
        let (t, _) = inf.freshen(target);
        inf.subst.unify(&t, &ty)?;
    }
    inf.finish(&ty)
}

/// Types every operator occurrence of a complete program used at the
/// monomorphic type `instance`. Unconstrained leftover variables, which
/// cannot influence evaluation, default to `Int`.
pub fn elaborate(e: &Expr, ops: &OperatorSet, instance: &Ty) -> Result<TypedExpr, TypeError> {
    if !e.is_complete() {
        return Err(TypeError::HasHoles);
    }
    let mut inf = Infer::new(ops);
    let ty = inf.infer(e)?;
    inf.subst.unify(instance, &ty)?;
    inf.finish(&ty)?;
    let mut occ = inf.occurrences.iter();
    fn build(
        e: &Expr,
        ops: &OperatorSet,
        occ: &mut std::slice::Iter<'_, Ty>,
        subst: &Subst,
    ) -> TypedExpr {
        match e {
            Expr::Var(name) => {
                let t = subst.apply(occ.next().expect("occurrence recorded"));
                let t = t.rename(&mut |_| "_".to_string());
                let t = default_vars(&t);
                TypedExpr::Op(ops.get(name).expect("known operator").builtin, t)
            }
            Expr::App(f, x) => {
                let f = build(f, ops, occ, subst);
                let x = build(x, ops, occ, subst);
                TypedExpr::App(Box::new(f), Box::new(x))
            }
            Expr::Hole { .. } => unreachable!("checked complete"),
        }
    }
    Ok(build(e, ops, &mut occ, &inf.subst))
}

fn default_vars(t: &Ty) -> Ty {
    match t {
        Ty::Con(c, args) => Ty::Con(*c, args.iter().map(default_vars).collect()),
        Ty::Var(_) => Ty::int(),
        // A dangling higher-kinded variable: pick a lawful functor.
        Ty::App(_, args) => Ty::Con(
            super::types::TyCon::List,
            args.iter().map(default_vars).take(1).collect(),
        ),
    }
}

/// False when a function type hides inside a non-function constructor or a
/// constraint targets anything but a bare type variable.
pub fn sane_type(s: &Scheme) -> bool {
    fn fun_inside(t: &Ty, under_data: bool) -> bool {
        match t {
            Ty::Con(super::types::TyCon::Fun, args) => {
                under_data || args.iter().any(|a| fun_inside(a, false))
            }
            Ty::Con(_, args) | Ty::App(_, args) => args.iter().any(|a| fun_inside(a, true)),
            Ty::Var(_) => false,
        }
    }
    !fun_inside(&s.body, false)
        && s.constraints
            .iter()
            .all(|c| matches!(c.target, Ty::Var(_)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::expr::parse_expr;
    use crate::lang::types::{parse_scheme, parse_type, TyCon};

    fn ops() -> OperatorSet {
        OperatorSet::experiment()
    }

    fn ty(s: &str) -> Ty {
        parse_type(s).unwrap()
    }

    #[test]
    fn unify_examples() {
        let s = unify(&ty("a"), &ty("Int")).unwrap();
        assert_eq!(s.get("a"), Some(Ty::int()));
        let s = unify(&ty("[a]"), &ty("[Int]")).unwrap();
        assert_eq!(s.get("a"), Some(Ty::int()));
        assert!(matches!(
            unify(&ty("a"), &ty("[a]")),
            Err(UnifyError::OccursCheck(..))
        ));
        assert!(matches!(
            unify(&ty("Int"), &ty("Char")),
            Err(UnifyError::Mismatch(..))
        ));
    }

    #[test]
    fn unify_higher_kinded() {
        let s = unify(&ty("t a"), &ty("Either Int Char")).unwrap();
        assert_eq!(s.get("t"), Some(Ty::Con(TyCon::Either, vec![Ty::int()])));
        assert_eq!(s.get("a"), Some(Ty::char()));
        let s = unify(&ty("f (t a)"), &ty("[Maybe Bool]")).unwrap();
        assert_eq!(s.apply(&ty("t (f a)")), ty("Maybe [Bool]"));
        assert!(unify(&ty("t a"), &ty("Int")).is_err());
    }

    #[test]
    fn infers_constants() {
        let e = parse_expr("false", &OperatorSet::from_names(&["false"]).unwrap()).unwrap();
        let s = infer_type(&e, &OperatorSet::from_names(&["false"]).unwrap()).unwrap();
        assert_eq!(s.body, Ty::bool());
    }

    #[test]
    fn infers_figure_task() {
        let e = parse_expr("compose just unzip", &ops()).unwrap();
        let s = infer_type(&e, &ops()).unwrap();
        assert_eq!(s.to_string(), "[(a, b)] -> Maybe ([a], [b])");
        assert_eq!(s.quantified.len(), 2);
    }

    #[test]
    fn enum_on_maybe_is_unsatisfied() {
        let e = parse_expr("(fromEnum (just (undefined :: a)))", &ops()).unwrap();
        match infer_type(&e, &ops()) {
            Err(TypeError::UnsatisfiedConstraint { class, ty }) => {
                assert_eq!(class, Class::Enum);
                assert!(matches!(ty, Ty::Con(TyCon::Maybe, _)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn top_level_mempty_is_ambiguous() {
        let e = parse_expr("mempty", &ops()).unwrap();
        assert!(matches!(
            infer_type(&e, &ops()),
            Err(TypeError::UnsatisfiedConstraint {
                class: Class::Monoid,
                ..
            })
        ));
        let e = parse_expr("(just mempty)", &ops()).unwrap();
        assert_eq!(infer_type(&e, &ops()).unwrap().to_string(), "Monoid a => Maybe a");
        let e = parse_expr("mempty", &ops()).unwrap();
        assert!(infer_with_target(&e, &ops(), Some(&ty("[Int]"))).is_ok());
    }

    #[test]
    fn ambiguous_internal_variable() {
        let e = parse_expr("(compose fromEnum toEnum)", &ops()).unwrap();
        assert!(infer_type(&e, &ops()).is_err());
        // with a hole the variable may still be fixed later
        let e = parse_expr("(fromEnum (undefined :: a))", &ops()).unwrap();
        assert!(infer_type(&e, &ops()).is_ok());
    }

    #[test]
    fn constraints_propagate() {
        let e = parse_expr("length", &ops()).unwrap();
        assert_eq!(infer_type(&e, &ops()).unwrap().to_string(), "Foldable a => a b -> Int");
        let e = parse_expr("(foldMap just)", &ops()).unwrap();
        assert_eq!(
            infer_type(&e, &ops()).unwrap().to_string(),
            "(Foldable a, Semigroup b) => a b -> Maybe b"
        );
        let e = parse_expr("(length zero)", &ops()).unwrap();
        assert!(infer_type(&e, &ops()).is_err());
    }

    #[test]
    fn sane_type_examples() {
        assert!(sane_type(&parse_scheme("Int").unwrap()));
        assert!(!sane_type(&parse_scheme("[a -> b]").unwrap()));
        assert!(sane_type(&parse_scheme("(a -> b) -> [a] -> [b]").unwrap()));
        assert!(!sane_type(&parse_scheme("Eq (a -> Bool) => a").unwrap()));
        assert!(!sane_type(&parse_scheme("Semigroup (t a) => t a -> t a").unwrap()));
        assert!(!sane_type(&parse_scheme("Maybe (Int -> Int) -> Int").unwrap()));
    }

    #[test]
    fn elaboration_types_occurrences() {
        let e = parse_expr("(compose just unzip)", &ops()).unwrap();
        let inst = ty("[(Int, Char)] -> Maybe ([Int], [Char])");
        let te = elaborate(&e, &ops(), &inst).unwrap();
        let TypedExpr::App(f, _) = te else { panic!() };
        let TypedExpr::App(c, j) = *f else { panic!() };
        assert!(matches!(*c, TypedExpr::Op(Builtin::Compose, _)));
        assert_eq!(
            *j,
            TypedExpr::Op(Builtin::Just, ty("([Int], [Char]) -> Maybe ([Int], [Char])"))
        );
    }

    #[test]
    fn principal_type_ignores_hole_ids() {
        let a = parse_expr("(pair (undefined :: a) (undefined :: [b]))", &ops()).unwrap();
        let mut b = a.clone();
        if let Expr::App(f, x) = &mut b {
            if let Expr::Hole { id, .. } = x.as_mut() {
                *id = 41;
            }
            if let Expr::App(_, y) = f.as_mut() {
                if let Expr::Hole { id, .. } = y.as_mut() {
                    *id = 7;
                }
            }
        }
        assert_ne!(a, b);
        assert_eq!(infer_type(&a, &ops()), infer_type(&b, &ops()));
    }
}
