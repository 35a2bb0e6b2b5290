//! Closed typeclass membership table and constraint entailment.

use super::types::{Class, Constraint, Ty, TyCon};

/// Read-only typeclass membership.
///
/// The six figure classes (Enum, Foldable, Traversable, Functor, Monoid,
/// Semigroup) follow the published matrix cell for cell. `Eq` and
/// `Applicative` are needed by `elem` and `sequenceA`/`sequence` and hold
/// their standard Haskell memberships restricted to these constructors.
/// Instance contexts (`Semigroup a => Semigroup (Maybe a)`) are checked;
/// superclasses are not consulted.
#[derive(Clone, Copy, Debug, Default)]
pub struct TypeclassTable;

impl TypeclassTable {
    pub fn member(&self, class: Class, con: TyCon) -> bool {
        use Class::*;
        use TyCon::*;
        match class {
            Enum => matches!(con, Char | Int),
            Foldable | Traversable | Functor | Semigroup => {
                matches!(con, Maybe | List | Pair | Either)
            }
            Monoid => matches!(con, Maybe | List),
            Eq => con != Fun,
            Applicative => matches!(con, Maybe | List | Either),
        }
    }

    /// Constraints an instance requires of the constructor's arguments.
    fn context(&self, class: Class, con: TyCon, args: &[Ty]) -> Vec<Constraint> {
        let on = |class, t: &Ty| Constraint {
            class,
            target: t.clone(),
        };
        match (class, con) {
            (Class::Semigroup, TyCon::Maybe) | (Class::Monoid, TyCon::Maybe) => {
                vec![on(Class::Semigroup, &args[0])]
            }
            (Class::Semigroup, TyCon::Pair) => args.iter().map(|a| on(Class::Semigroup, a)).collect(),
            (Class::Eq, _) => args.iter().map(|a| on(Class::Eq, a)).collect(),
            _ => vec![],
        }
    }

    /// Reduces a constraint to residual constraints on type variables.
    /// Returns `Err` with the offending constraint when it cannot hold.
    pub fn reduce(&self, c: &Constraint) -> Result<Vec<Constraint>, Constraint> {
        match &c.target {
            Ty::Var(_) | Ty::App(..) => Ok(vec![c.clone()]),
            Ty::Con(con, args) => {
                let expected = if c.class.is_constructor_class() {
                    con.arity().checked_sub(1)
                } else {
                    Some(con.arity())
                };
                if expected != Some(args.len()) || !self.member(c.class, *con) {
                    return Err(c.clone());
                }
                let mut out = Vec::new();
                for sub in self.context(c.class, *con, args) {
                    out.extend(self.reduce(&sub)?);
                }
                Ok(out)
            }
        }
    }

    /// Does a ground constraint hold?
    pub fn entails(&self, class: Class, ty: &Ty) -> bool {
        match self.reduce(&Constraint {
            class,
            target: ty.clone(),
        }) {
            Ok(residual) => residual.is_empty(),
            Err(_) => false,
        }
    }
}
