//! The typed DSL: types, typeclasses, expressions, grammar and inference.

pub mod expr;
pub mod grammar;
pub mod infer;
pub mod ops;
pub mod typeclass;
pub mod types;

pub use expr::{parse_expr, print_expr, Expr, HoleId, ParseError};
pub use grammar::{
    fill_hole, hole_local_type, type_checks, unroll_grammar, ExpansionRule, GrammarError,
    Operator, OperatorSet, Ppt,
};
pub use infer::{elaborate, infer_type, infer_with_target, sane_type, TypeError, TypedExpr};
pub use ops::Builtin;
pub use typeclass::TypeclassTable;
pub use types::{parse_scheme, parse_type, Class, Constraint, Scheme, Ty, TyCon};
