use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{DatagenError, GenConfig};
use crate::lang::{Scheme, Ty, TyCon, TypeclassTable};

pub const BASE_TYPES: [TyCon; 3] = [TyCon::Int, TyCon::Char, TyCon::Bool];

const DATA_CONS: [TyCon; 7] = [
    TyCon::Int,
    TyCon::Char,
    TyCon::Bool,
    TyCon::Maybe,
    TyCon::List,
    TyCon::Pair,
    TyCon::Either,
];

fn base_types() -> Vec<Ty> {
    BASE_TYPES.iter().map(|&c| Ty::Con(c, vec![])).collect()
}

/// Draws one monotype: a uniform constructor, arguments drawn recursively
/// with one less nesting level; constructors with arguments are excluded
/// once the limit is reached.
fn draw_monotype(limit: usize, rng: &mut impl Rng) -> Ty {
    let cons: &[TyCon] = if limit == 0 { &BASE_TYPES } else { &DATA_CONS };
    let c = *cons.choose(rng).expect("nonempty");
    let args = (0..c.arity()).map(|_| draw_monotype(limit - 1, rng)).collect();
    Ty::Con(c, args)
}

/// Up to `max_monotypes` distinct monotypes of nesting depth at most
/// `type_nesting_limit`, in draw order.
pub fn sample_monotypes(cfg: &GenConfig, rng: &mut impl Rng) -> Vec<Ty> {
    let mut out: Vec<Ty> = Vec::new();
    let attempts = cfg.max_monotypes * 20;
    for _ in 0..attempts {
        if out.len() >= cfg.max_monotypes {
            break;
        }
        let t = draw_monotype(cfg.type_nesting_limit, rng);
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Partially applied constructors of kind `* -> *` with base arguments.
pub fn unary_constructors() -> Vec<Ty> {
    let mut out = vec![Ty::Con(TyCon::Maybe, vec![]), Ty::Con(TyCon::List, vec![])];
    for con in [TyCon::Pair, TyCon::Either] {
        for b in base_types() {
            out.push(Ty::Con(con, vec![b]));
        }
    }
    out
}

/// Monotypes keyed by the number of type parameters they still take.
pub fn monotypes_by_arity(monotypes: &[Ty]) -> BTreeMap<String, Vec<String>> {
    let mut m = BTreeMap::new();
    m.insert("0".to_string(), monotypes.iter().map(Ty::to_string).collect());
    m.insert(
        "1".to_string(),
        unary_constructors().iter().map(Ty::to_string).collect(),
    );
    m
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VarKind {
    /// Only ever a whole parameter or result type, possibly under arrows.
    Top,
    /// Somewhere inside a data constructor.
    Nested,
    /// Applied to arguments.
    HigherKinded,
}

fn classify(t: &Ty, under_data: bool, out: &mut Vec<(String, VarKind)>) {
    let mut note = |v: &String, k: VarKind| match out.iter_mut().find(|(n, _)| n == v) {
        Some((_, old)) => {
            if *old == VarKind::Top || k == VarKind::HigherKinded {
                *old = k;
            }
        }
        None => out.push((v.clone(), k)),
    };
    match t {
        Ty::Var(v) => note(v, if under_data { VarKind::Nested } else { VarKind::Top }),
        Ty::App(v, args) => {
            note(v, VarKind::HigherKinded);
            for a in args {
                classify(a, true, out);
            }
        }
        Ty::Con(TyCon::Fun, args) => {
            for a in args {
                classify(a, under_data, out);
            }
        }
        Ty::Con(_, args) => {
            for a in args {
                classify(a, true, out);
            }
        }
    }
}

fn substitute(t: &Ty, assignment: &[(String, Ty)]) -> Ty {
    match t {
        Ty::Var(v) => assignment
            .iter()
            .find(|(n, _)| n == v)
            .map(|(_, t)| t.clone())
            .unwrap_or_else(|| t.clone()),
        Ty::App(v, args) => {
            let args: Vec<Ty> = args.iter().map(|a| substitute(a, assignment)).collect();
            match assignment.iter().find(|(n, _)| n == v) {
                Some((_, head)) => head.clone().apply_args(args),
                None => Ty::App(v.clone(), args),
            }
        }
        Ty::Con(c, args) => Ty::Con(*c, args.iter().map(|a| substitute(a, assignment)).collect()),
    }
}

/// Assignments are enumerated exhaustively below this many combinations
/// and rejection-sampled above it.
const EXHAUSTIVE_LIMIT: usize = 50_000;

/// Up to `max_type_instances` distinct monomorphic instances of `scheme`,
/// sampled without replacement. Variables nested inside data constructors
/// take base types so instances respect the nesting limit; variables in
/// head position take unary constructors.
pub fn instantiate_task(
    scheme: &Scheme,
    monotypes: &[Ty],
    table: &TypeclassTable,
    cfg: &GenConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Ty>, DatagenError> {
    let mut kinds = Vec::new();
    classify(&scheme.body, false, &mut kinds);
    if kinds.is_empty() {
        return Ok(vec![scheme.body.clone()]);
    }
    let candidates: Vec<Vec<Ty>> = kinds
        .iter()
        .map(|(_, k)| match k {
            VarKind::Top => monotypes.to_vec(),
            VarKind::Nested => base_types(),
            VarKind::HigherKinded => unary_constructors(),
        })
        .collect();
    let valid = |choice: &[usize]| -> Option<Ty> {
        let assignment: Vec<(String, Ty)> = kinds
            .iter()
            .zip(choice)
            .zip(&candidates)
            .map(|(((v, _), &i), cands)| (v.clone(), cands[i].clone()))
            .collect();
        let ok = scheme
            .constraints
            .iter()
            .all(|c| table.entails(c.class, &substitute(&c.target, &assignment)));
        ok.then(|| substitute(&scheme.body, &assignment))
    };
    let total = candidates
        .iter()
        .try_fold(1usize, |acc, c| acc.checked_mul(c.len()))
        .unwrap_or(usize::MAX);
    let mut instances: Vec<Ty> = Vec::new();
    if total <= EXHAUSTIVE_LIMIT {
        let mut choice = vec![0usize; kinds.len()];
        'outer: loop {
            if let Some(t) = valid(&choice) {
                instances.push(t);
            }
            for i in (0..choice.len()).rev() {
                choice[i] += 1;
                if choice[i] < candidates[i].len() {
                    continue 'outer;
                }
                choice[i] = 0;
            }
            break;
        }
        instances.shuffle(rng);
        instances.truncate(cfg.max_type_instances);
    } else {
        for _ in 0..EXHAUSTIVE_LIMIT {
            if instances.len() >= cfg.max_type_instances {
                break;
            }
            let choice: Vec<usize> = candidates.iter().map(|c| rng.gen_range(0..c.len())).collect();
            if let Some(t) = valid(&choice) {
                if !instances.contains(&t) {
                    instances.push(t);
                }
            }
        }
    }
    if instances.is_empty() {
        return Err(DatagenError::NoValidInstance(scheme.to_string()));
    }
    Ok(instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_scheme, parse_type};
    use crate::rng::substream;

    fn cfg() -> GenConfig {
        GenConfig::default()
    }

    #[test]
    fn nesting_limit_one() {
        let mut c = cfg();
        c.max_monotypes = 1000;
        let tys = sample_monotypes(&c, &mut substream(1, "m"));
        assert!(tys.iter().all(|t| t.depth() <= 1));
        // the full universe at limit 1 has 3 + 2*3 + 2*9 types
        assert_eq!(tys.len(), 27);
        assert!(tys.contains(&parse_type("[Bool]").unwrap()));
        assert!(!tys.contains(&parse_type("[[Bool]]").unwrap()));
    }

    #[test]
    fn nesting_limit_zero() {
        let mut c = cfg();
        c.type_nesting_limit = 0;
        let tys = sample_monotypes(&c, &mut substream(1, "m"));
        assert_eq!(tys.len(), 3);
        assert!(tys.iter().all(|t| t.depth() == 0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_monotypes(&cfg(), &mut substream(5, "m"));
        let b = sample_monotypes(&cfg(), &mut substream(5, "m"));
        assert_eq!(a, b);
        assert!(a.len() <= cfg().max_monotypes);
    }

    fn all_monotypes() -> Vec<Ty> {
        let mut c = cfg();
        c.max_monotypes = 1000;
        sample_monotypes(&c, &mut substream(0, "m"))
    }

    #[test]
    fn identity_like_scheme() {
        let s = parse_scheme("a -> a").unwrap();
        let insts = instantiate_task(&s, &base_types(), &TypeclassTable, &cfg(), &mut substream(0, "i")).unwrap();
        let mut texts: Vec<String> = insts.iter().map(Ty::to_string).collect();
        texts.sort();
        assert_eq!(texts, ["Bool -> Bool", "Char -> Char", "Int -> Int"]);
    }

    #[test]
    fn enum_constraint_restricts() {
        let s = parse_scheme("Enum a => a -> Int").unwrap();
        let mut c = cfg();
        c.max_type_instances = 100;
        let insts = instantiate_task(&s, &all_monotypes(), &TypeclassTable, &c, &mut substream(0, "i")).unwrap();
        let mut texts: Vec<String> = insts.iter().map(Ty::to_string).collect();
        texts.sort();
        assert_eq!(texts, ["Char -> Int", "Int -> Int"]);
    }

    #[test]
    fn monomorphic_scheme_is_itself() {
        let s = parse_scheme("Int -> [Int]").unwrap();
        let insts = instantiate_task(&s, &all_monotypes(), &TypeclassTable, &cfg(), &mut substream(0, "i")).unwrap();
        assert_eq!(insts, vec![s.body]);
    }

    #[test]
    fn nested_and_higher_kinded_variables() {
        let s = parse_scheme("Foldable t => t a -> Int").unwrap();
        let mut c = cfg();
        c.max_type_instances = 1000;
        let insts = instantiate_task(&s, &all_monotypes(), &TypeclassTable, &c, &mut substream(0, "i")).unwrap();
        assert_eq!(insts.len(), 8 * 3);
        assert!(insts.contains(&parse_type("Either Char Int -> Int").unwrap()));
        assert!(insts.iter().all(|t| t.is_mono()));
    }

    #[test]
    fn constrained_result_variable_takes_any_monotype() {
        let s = parse_scheme("(Foldable t, Monoid m) => (a -> m) -> t a -> m").unwrap();
        let insts = instantiate_task(&s, &all_monotypes(), &TypeclassTable, &cfg(), &mut substream(0, "i")).unwrap();
        assert!(!insts.is_empty());
    }

    #[test]
    fn unsatisfiable_constraints() {
        let s = parse_scheme("Enum a => [a] -> a").unwrap();
        let mut c = cfg();
        c.max_type_instances = 1000;
        assert!(instantiate_task(&s, &[Ty::bool()], &TypeclassTable, &c, &mut substream(0, "i")).is_ok());
        let s = parse_scheme("(Enum a, Monoid a) => a -> a").unwrap();
        assert!(matches!(
            instantiate_task(&s, &all_monotypes(), &TypeclassTable, &c, &mut substream(0, "i")),
            Err(DatagenError::NoValidInstance(_))
        ));
    }
}
