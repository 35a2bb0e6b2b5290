//! Operator sets, the unrolled expansion grammar and partial program trees.

use std::collections::HashMap;

use thiserror::Error;

use super::expr::{Expr, HoleId};
use super::infer::infer_with_target;
use super::ops::Builtin;
use super::types::{parse_scheme, Scheme, Ty};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("unknown operator {0}")]
    UnknownOperator(String),
    #[error("duplicate operator {0}")]
    DuplicateOperator(String),
    #[error("hole {0} does not occur in the program")]
    UnknownHole(HoleId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operator {
    pub name: String,
    pub builtin: Builtin,
    pub scheme: Scheme,
    /// Number of arrows in the scheme body.
    pub max_arity: usize,
}

impl Operator {
    pub fn new(builtin: Builtin) -> Operator {
        let scheme = parse_scheme(builtin.scheme_src()).expect("builtin schemes parse");
        Operator {
            name: builtin.name().to_string(),
            builtin,
            max_arity: scheme.body.arrow_count(),
            scheme,
        }
    }
}

/// An ordered set of operators with unique names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperatorSet {
    ops: Vec<Operator>,
    index: HashMap<String, usize>,
}

impl OperatorSet {
    pub fn new(builtins: &[Builtin]) -> Result<OperatorSet, GrammarError> {
        let mut index = HashMap::new();
        let mut ops = Vec::with_capacity(builtins.len());
        for &b in builtins {
            if index.insert(b.name().to_string(), ops.len()).is_some() {
                return Err(GrammarError::DuplicateOperator(b.name().to_string()));
            }
            ops.push(Operator::new(b));
        }
        Ok(OperatorSet { ops, index })
    }

    /// The operators used for dataset generation and the experiments.
    pub fn experiment() -> OperatorSet {
        OperatorSet::new(&Builtin::EXPERIMENT).expect("distinct builtins")
    }

    /// Builds a set from names or aliases, in the given order.
    pub fn from_names(names: &[&str]) -> Result<OperatorSet, GrammarError> {
        let builtins = names
            .iter()
            .map(|n| Builtin::from_name(n).ok_or_else(|| GrammarError::UnknownOperator(n.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        OperatorSet::new(&builtins)
    }

    pub fn get(&self, name: &str) -> Option<&Operator> {
        self.index.get(name).map(|&i| &self.ops[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Resolves a name or alias to the canonical name of a member operator.
    pub fn canonical_name(&self, name: &str) -> Option<&str> {
        let b = Builtin::from_name(name)?;
        self.get(b.name()).map(|op| op.name.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Operator> {
        self.ops.iter()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.ops.iter().map(|o| o.name.as_str()).collect()
    }
}

/// An expansion `op ?_1 ... ?_q` of a hole: the operator applied to `applied`
/// fresh holes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionRule {
    pub op: usize,
    pub name: String,
    pub applied: usize,
    /// Type of the whole expansion, in the operator's own variables.
    pub result_ty: Ty,
    /// Types of the `applied` holes, in the operator's own variables.
    pub hole_tys: Vec<Ty>,
}

impl ExpansionRule {
    /// Display form, e.g. `(compose ? ?)`.
    pub fn label(&self) -> String {
        if self.applied == 0 {
            self.name.clone()
        } else {
            let mut s = format!("({}", self.name);
            for _ in 0..self.applied {
                s.push_str(" ?");
            }
            s.push(')');
            s
        }
    }
}

/// One rule per operator and per application count `0..=max_arity`, ordered
/// by operator position, then by descending application count.
pub fn unroll_grammar(ops: &OperatorSet) -> Vec<ExpansionRule> {
    let mut rules = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        for q in (0..=op.max_arity).rev() {
            let (hole_tys, result_ty) = peel(&op.scheme.body, q);
            rules.push(ExpansionRule {
                op: i,
                name: op.name.clone(),
                applied: q,
                result_ty,
                hole_tys,
            });
        }
    }
    rules
}

fn peel(t: &Ty, q: usize) -> (Vec<Ty>, Ty) {
    let mut params = Vec::with_capacity(q);
    let mut cur = t;
    for _ in 0..q {
        let (p, r) = cur.as_fun().expect("q within arity");
        params.push(p.clone());
        cur = r;
    }
    (params, cur.clone())
}

/// A partial program tree together with the type it must inhabit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ppt {
    pub expr: Expr,
    /// Next unused hole id; ids are never reused within one derivation.
    pub next_hole: HoleId,
    pub target: Ty,
}

impl Ppt {
    /// The single-hole tree `undefined :: target`.
    pub fn root(target: Ty) -> Ppt {
        Ppt {
            expr: Expr::hole(0, target.clone()),
            next_hole: 1,
            target,
        }
    }

    pub fn from_expr(expr: Expr, target: Ty) -> Ppt {
        let next_hole = expr.max_hole_id().map_or(0, |m| m + 1);
        Ppt {
            expr,
            next_hole,
            target,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.expr.is_complete()
    }

    pub fn holes(&self) -> Vec<HoleId> {
        self.expr.holes().into_iter().map(|(id, _)| id).collect()
    }
}

/// Where a hole sits: the rule that created it and its argument position.
/// `None` for the root hole.
pub fn hole_parent(
    expr: &Expr,
    id: HoleId,
    ops: &OperatorSet,
) -> Result<Option<(usize, usize, usize)>, GrammarError> {
    if matches!(expr, Expr::Hole { id: h, .. } if *h == id) {
        return Ok(None);
    }
    fn search(e: &Expr, id: HoleId, ops: &OperatorSet) -> Option<(usize, usize, usize)> {
        if let Expr::App(..) = e {
            let (head, args) = e.spine();
            for (i, a) in args.iter().enumerate() {
                if matches!(a, Expr::Hole { id: h, .. } if *h == id) {
                    let op = match head {
                        Expr::Var(n) => ops.index_of(n)?,
                        _ => return None,
                    };
                    return Some((op, args.len(), i));
                }
            }
            if let Some(found) = search(head, id, ops) {
                return Some(found);
            }
            for a in args {
                if let Some(found) = search(a, id, ops) {
                    return Some(found);
                }
            }
        }
        None
    }
    match search(expr, id, ops) {
        Some(found) => Ok(Some(found)),
        None => Err(GrammarError::UnknownHole(id)),
    }
}

/// The local type of a hole: the parameter type of its parent rule, or the
/// annotation for the root hole.
pub fn hole_local_type(expr: &Expr, id: HoleId, ops: &OperatorSet) -> Result<Ty, GrammarError> {
    match hole_parent(expr, id, ops)? {
        None => match expr {
            Expr::Hole { ann, .. } => Ok(ann.clone()),
            _ => unreachable!(),
        },
        Some((op, q, i)) => {
            let op = ops.ops.get(op).expect("index from this set");
            if q > op.max_arity {
                return Ok(annotation_of(expr, id).expect("hole exists"));
            }
            Ok(peel(&op.scheme.body, q).0[i].clone())
        }
    }
}

fn annotation_of(expr: &Expr, id: HoleId) -> Option<Ty> {
    expr.holes()
        .into_iter()
        .find(|(h, _)| *h == id)
        .map(|(_, t)| t.clone())
}

/// Replaces hole `id` with the rule's template; new holes take fresh ids and
/// are annotated with the rule's parameter types.
pub fn fill_hole(ppt: &Ppt, id: HoleId, rule: &ExpansionRule) -> Result<Ppt, GrammarError> {
    let mut next = ppt.next_hole;
    let holes = rule.hole_tys.iter().map(|t| {
        let h = Expr::hole(next, t.clone());
        next += 1;
        h
    });
    let template = Expr::apply(Expr::Var(rule.name.clone()), holes.collect::<Vec<_>>());
    let expr = ppt
        .expr
        .replace_hole(id, &template)
        .ok_or(GrammarError::UnknownHole(id))?;
    Ok(Ppt {
        expr,
        next_hole: next,
        target: ppt.target.clone(),
    })
}

/// Does the tree have an instance of its target type, with every constraint
/// satisfiable or still resolvable through a hole?
pub fn type_checks(ppt: &Ppt, ops: &OperatorSet) -> bool {
    infer_with_target(&ppt.expr, ops, Some(&ppt.target)).is_ok()
}
