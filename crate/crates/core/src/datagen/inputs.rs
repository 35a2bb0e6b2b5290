use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{DatagenError, GenConfig};
use crate::interp::{program_value, render_inputs, Value};
use crate::lang::{infer_with_target, Expr, OperatorSet, Ty, TyCon};

/// Generated programs usable as function-typed inputs, indexed lazily by
/// the monotype they are requested at.
pub struct FunctionPool<'a> {
    ops: &'a OperatorSet,
    programs: &'a [Expr],
    by_type: Mutex<HashMap<Ty, Vec<usize>>>,
}

impl<'a> FunctionPool<'a> {
    pub fn new(ops: &'a OperatorSet, programs: &'a [Expr]) -> Self {
        FunctionPool {
            ops,
            programs,
            by_type: Mutex::new(HashMap::new()),
        }
    }

    /// Programs that have an instance at `ty`, in enumeration order.
    pub fn matching(&self, ty: &Ty) -> Vec<&'a Expr> {
        let mut cache = self.by_type.lock().expect("pool lock");
        let idx = cache.entry(ty.clone()).or_insert_with(|| {
            self.programs
                .iter()
                .enumerate()
                .filter(|(_, p)| infer_with_target(p, self.ops, Some(ty)).is_ok())
                .map(|(i, _)| i)
                .collect()
        });
        idx.iter().map(|&i| &self.programs[i]).collect()
    }
}

/// One random value of monotype `ty` within the configured bounds.
pub fn gen_value(ty: &Ty, cfg: &GenConfig, rng: &mut impl Rng, pool: &FunctionPool) -> Result<Value, DatagenError> {
    let Ty::Con(con, args) = ty else {
        return Err(DatagenError::NoSamples(ty.to_string()));
    };
    Ok(match con {
        TyCon::Int => Value::Int(rng.gen_range(cfg.int_range.0..=cfg.int_range.1)),
        TyCon::Char => Value::Char(rng.gen_range(cfg.char_range.0..=cfg.char_range.1)),
        TyCon::Bool => Value::Bool(rng.gen()),
        TyCon::List => {
            let n = rng.gen_range(cfg.container_len_range.0..=cfg.container_len_range.1);
            let mut xs = Vec::with_capacity(n);
            for _ in 0..n {
                xs.push(gen_value(&args[0], cfg, rng, pool)?);
            }
            Value::List(xs)
        }
        TyCon::Maybe => {
            if rng.gen() {
                Value::just(gen_value(&args[0], cfg, rng, pool)?)
            } else {
                Value::nothing()
            }
        }
        TyCon::Pair => Value::pair(
            gen_value(&args[0], cfg, rng, pool)?,
            gen_value(&args[1], cfg, rng, pool)?,
        ),
        TyCon::Either => {
            if rng.gen() {
                Value::left(gen_value(&args[0], cfg, rng, pool)?)
            } else {
                Value::right(gen_value(&args[1], cfg, rng, pool)?)
            }
        }
        TyCon::Fun => {
            let candidates = pool.matching(ty);
            let p = candidates
                .choose(rng)
                .ok_or_else(|| DatagenError::NoSamples(ty.to_string()))?;
            program_value(p, pool.ops, ty).map_err(|_| DatagenError::NoSamples(ty.to_string()))?
        }
    })
}

/// Up to `max_inputs_per_instance` distinct argument tuples.
pub fn gen_input_tuples(
    tys: &[Ty],
    cfg: &GenConfig,
    rng: &mut impl Rng,
    pool: &FunctionPool,
) -> Result<Vec<Vec<Value>>, DatagenError> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for _ in 0..cfg.max_inputs_per_instance {
        let tuple = tys
            .iter()
            .map(|t| gen_value(t, cfg, rng, pool))
            .collect::<Result<Vec<_>, _>>()?;
        let text = render_inputs(&tuple, tys);
        if !seen.contains(&text) {
            seen.push(text);
            out.push(tuple);
        }
    }
    Ok(out)
}

/// Distinct values of a single type.
pub fn gen_inputs(ty: &Ty, cfg: &GenConfig, rng: &mut impl Rng, pool: &FunctionPool) -> Result<Vec<Value>, DatagenError> {
    Ok(gen_input_tuples(std::slice::from_ref(ty), cfg, rng, pool)?
        .into_iter()
        .map(|mut t| t.remove(0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::enumerate_programs;
    use crate::interp::{render_value, Style};
    use crate::lang::{parse_type, unroll_grammar};
    use crate::rng::substream;

    fn check_bounds(v: &Value, cfg: &GenConfig) {
        match v {
            Value::Int(n) => assert!((cfg.int_range.0..=cfg.int_range.1).contains(n)),
            Value::Char(c) => assert!(('0'..='9').contains(c)),
            Value::List(xs) => {
                assert!(xs.len() <= 5);
                xs.iter().for_each(|x| check_bounds(x, cfg));
            }
            Value::Pair(a, b) => {
                check_bounds(a, cfg);
                check_bounds(b, cfg);
            }
            Value::Maybe(Some(x)) | Value::Either(_, x) => check_bounds(x, cfg),
            _ => {}
        }
    }

    #[test]
    fn values_respect_bounds() {
        let ops = OperatorSet::experiment();
        let pool = FunctionPool::new(&ops, &[]);
        let cfg = GenConfig::default();
        let mut rng = substream(0, "v");
        for t in ["Int", "[Char]", "Maybe (Int, Char)", "Either [Int] Bool"] {
            let ty = parse_type(t).unwrap();
            let vals = gen_inputs(&ty, &cfg, &mut rng, &pool).unwrap();
            assert!(!vals.is_empty() && vals.len() <= 10);
            let texts: Vec<String> = vals.iter().map(|v| render_value(v, &ty, Style::Input)).collect();
            let mut dedup = texts.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), texts.len());
            vals.iter().for_each(|v| check_bounds(v, &cfg));
        }
    }

    #[test]
    fn function_inputs_come_from_generated_programs() {
        let ops = OperatorSet::experiment();
        let progs = enumerate_programs(&ops, &unroll_grammar(&ops), 3);
        let pool = FunctionPool::new(&ops, &progs);
        let cfg = GenConfig::default();
        let ty = parse_type("Int -> Int").unwrap();
        let vals = gen_inputs(&ty, &cfg, &mut substream(0, "f"), &pool).unwrap();
        let texts: Vec<String> = progs.iter().map(|p| p.to_string()).collect();
        for v in vals {
            let label = render_value(&v, &ty, Style::Input);
            assert!(texts.contains(&label), "{label}");
        }
        let none = FunctionPool::new(&ops, &[]);
        assert!(matches!(
            gen_inputs(&ty, &cfg, &mut substream(0, "f"), &none),
            Err(DatagenError::NoSamples(_))
        ));
    }
}
