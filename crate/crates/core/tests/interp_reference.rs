//! The interpreter against an independent table of builtin semantics.

use proptest::prelude::*;
use synth_core::datagen::{
    enumerate_programs, gen_input_tuples, instantiate_task, sample_monotypes, FunctionPool, GenConfig,
};
use synth_core::interp::{
    eval, parse_inputs, parse_value, program_value, render_inputs, render_outcome, render_value, ErrorKind,
    Outcome, Side, Style, Value, DEFAULT_FUEL,
};
use synth_core::lang::{
    parse_expr, parse_type, sane_type, unroll_grammar, Builtin, Expr, OperatorSet, Ty, TyCon,
    TypeclassTable,
};
use synth_core::rng::substream;

type Res = Result<Value, ErrorKind>;

fn call(f: &Value, ty: &Ty, x: Value) -> Res {
    // Function arguments are generated programs; apply them through eval.
    let Value::Fun(c) = f else { panic!("not a function") };
    let label = c.label.as_deref().expect("generated function");
    let ops = OperatorSet::experiment();
    let p = parse_expr(label, &ops).unwrap();
    eval(&p, &ops, ty, &[x], DEFAULT_FUEL).map_err(|e| e.kind)
}

fn fold_items(v: &Value) -> Vec<Value> {
    match v {
        Value::List(xs) => xs.clone(),
        Value::Maybe(Some(x)) => vec![(**x).clone()],
        Value::Maybe(None) => vec![],
        Value::Pair(_, b) => vec![(**b).clone()],
        Value::Either(Side::Right, x) => vec![(**x).clone()],
        Value::Either(Side::Left, _) => vec![],
        _ => panic!("not foldable"),
    }
}

fn combine(a: &Value, b: &Value) -> Value {
    match (a, b) {
        (Value::List(x), Value::List(y)) => Value::List(x.iter().chain(y).cloned().collect()),
        (Value::Maybe(None), _) => b.clone(),
        (_, Value::Maybe(None)) => a.clone(),
        (Value::Maybe(Some(x)), Value::Maybe(Some(y))) => Value::just(combine(x, y)),
        (Value::Pair(a1, b1), Value::Pair(a2, b2)) => Value::pair(combine(a1, a2), combine(b1, b2)),
        (Value::Either(Side::Left, _), _) => b.clone(),
        _ => a.clone(),
    }
}

fn arrows(ty: &Ty) -> (Vec<Ty>, Ty) {
    ty.split_arrows()
}

/// Distributes `t (f a)` to `f (t a)` by listing every choice.
fn sequence_ref(t: &Value, out_ty: &Ty) -> Value {
    let Ty::Con(f, _) = out_ty else { panic!() };
    let rebuild = |items: Vec<Value>| -> Value {
        match t {
            Value::List(_) => Value::List(items),
            Value::Maybe(_) => Value::just(items.into_iter().next().unwrap()),
            Value::Pair(a, _) => Value::Pair(a.clone(), Box::new(items.into_iter().next().unwrap())),
            Value::Either(..) => Value::right(items.into_iter().next().unwrap()),
            _ => unreachable!(),
        }
    };
    let empty_shape = match t {
        Value::Maybe(None) => Some(Value::nothing()),
        Value::Either(Side::Left, _) => Some(t.clone()),
        _ => None,
    };
    let wrap = |v: Value| match f {
        TyCon::Maybe => Value::just(v),
        TyCon::List => Value::List(vec![v]),
        TyCon::Either => Value::right(v),
        _ => unreachable!(),
    };
    if let Some(v) = empty_shape {
        return wrap(v);
    }
    let effects = fold_items(t);
    match f {
        TyCon::Maybe => {
            let mut xs = Vec::new();
            for e in &effects {
                match e {
                    Value::Maybe(Some(x)) => xs.push((**x).clone()),
                    _ => return Value::nothing(),
                }
            }
            Value::just(rebuild(xs))
        }
        TyCon::Either => {
            let mut xs = Vec::new();
            for e in &effects {
                match e {
                    Value::Either(Side::Right, x) => xs.push((**x).clone()),
                    left => return left.clone(),
                }
            }
            Value::right(rebuild(xs))
        }
        TyCon::List => {
            let lists: Vec<Vec<Value>> = effects.iter().map(fold_items).collect();
            let total: usize = lists.iter().map(Vec::len).product();
            let mut out = Vec::with_capacity(total);
            for mut k in 0..total {
                // mixed-radix digits, most significant first
                let mut pick = vec![Value::Int(0); lists.len()];
                for (i, l) in lists.iter().enumerate().rev() {
                    pick[i] = l[k % l.len()].clone();
                    k /= l.len();
                }
                out.push(rebuild(pick));
            }
            Value::List(out)
        }
        _ => unreachable!(),
    }
}

fn reference(b: Builtin, ty: &Ty, args: &[Value]) -> Res {
    let (params, out) = arrows(ty);
    let a = |i: usize| args[i].clone();
    Ok(match b {
        Builtin::Zero => Value::Int(0),
        Builtin::Nil => Value::List(vec![]),
        Builtin::False => Value::Bool(false),
        Builtin::Mempty => match out {
            Ty::Con(TyCon::List, _) => Value::List(vec![]),
            _ => Value::nothing(),
        },
        Builtin::Just => Value::just(a(0)),
        Builtin::Maybe => match &args[2] {
            Value::Maybe(None) => a(0),
            Value::Maybe(Some(x)) => return call(&args[1], &params[1], (**x).clone()),
            _ => unreachable!(),
        },
        Builtin::Cons => {
            let Value::List(xs) = a(1) else { unreachable!() };
            Value::List(std::iter::once(a(0)).chain(xs).collect())
        }
        Builtin::Length => Value::Int(fold_items(&args[0]).len() as i64),
        Builtin::Pair => Value::pair(a(0), a(1)),
        Builtin::Zip => {
            let (Value::List(xs), Value::List(ys)) = (a(0), a(1)) else { unreachable!() };
            let n = xs.len().min(ys.len());
            Value::List((0..n).map(|i| Value::pair(xs[i].clone(), ys[i].clone())).collect())
        }
        Builtin::Unzip => {
            let Value::List(ps) = a(0) else { unreachable!() };
            let firsts = ps.iter().map(|p| match p {
                Value::Pair(x, _) => (**x).clone(),
                _ => unreachable!(),
            });
            let seconds = ps.iter().map(|p| match p {
                Value::Pair(_, y) => (**y).clone(),
                _ => unreachable!(),
            });
            Value::pair(Value::List(firsts.collect()), Value::List(seconds.collect()))
        }
        Builtin::ToEnum => {
            let Value::Int(n) = a(0) else { unreachable!() };
            if out == Ty::int() {
                Value::Int(n)
            } else if (0..=0x10FFFF).contains(&n) && !(0xD800..=0xDFFF).contains(&n) {
                Value::Char(char::from_u32(n as u32).unwrap())
            } else {
                return Err(ErrorKind::OutOfRange);
            }
        }
        Builtin::FromEnum => match a(0) {
            Value::Char(c) => Value::Int(u32::from(c) as i64),
            v => v,
        },
        Builtin::FoldMap => {
            let mut acc = match out {
                Ty::Con(TyCon::List, _) => Value::List(vec![]),
                _ => Value::nothing(),
            };
            for x in fold_items(&args[1]) {
                acc = combine(&acc, &call(&args[0], &params[0], x)?);
            }
            acc
        }
        Builtin::Elem => Value::Bool(fold_items(&args[1]).contains(&args[0])),
        Builtin::SequenceA | Builtin::Sequence => sequence_ref(&args[0], &out),
        Builtin::Fmap => {
            let f = |x: Value| call(&args[0], &params[0], x);
            match a(1) {
                Value::List(xs) => Value::List(xs.into_iter().map(f).collect::<Result<_, _>>()?),
                Value::Maybe(Some(x)) => Value::just(f(*x)?),
                Value::Pair(l, r) => Value::Pair(l, Box::new(f(*r)?)),
                Value::Either(Side::Right, x) => Value::right(f(*x)?),
                other => other,
            }
        }
        Builtin::Mappend => combine(&args[0], &args[1]),
        Builtin::Compose => {
            let y = call(&args[1], &params[1], a(2))?;
            return call(&args[0], &params[0], y);
        }
        Builtin::And => match (a(0), a(1)) {
            (Value::Bool(x), Value::Bool(y)) => Value::Bool(x && y),
            _ => unreachable!(),
        },
    })
}

#[test]
fn builtins_match_reference_table() {
    let ops = OperatorSet::experiment();
    let programs = enumerate_programs(&ops, &unroll_grammar(&ops), 2);
    let pool = FunctionPool::new(&ops, &programs);
    let cfg = GenConfig {
        max_type_instances: 4,
        ..GenConfig::default()
    };
    let all = GenConfig {
        max_monotypes: 1000,
        ..cfg.clone()
    };
    let monos = sample_monotypes(&all, &mut substream(3, "monotypes"));
    let mut checked = 0;
    for b in Builtin::EXPERIMENT {
        let op = ops.get(b.name()).unwrap();
        if !sane_type(&op.scheme) {
            continue;
        }
        let mut rng = substream(3, b.name());
        let insts = instantiate_task(&op.scheme, &monos, &TypeclassTable, &cfg, &mut rng).unwrap();
        for inst in insts {
            let (params, out) = inst.split_arrows();
            let prog = Expr::var(b.name());
            for _ in 0..100 {
                let Ok(tuples) = gen_input_tuples(&params, &GenConfig { max_inputs_per_instance: 1, ..cfg.clone() }, &mut rng, &pool) else {
                    break;
                };
                let args = &tuples[0];
                let got = eval(&prog, &ops, &inst, args, DEFAULT_FUEL).map_err(|e| e.kind);
                let want = if params.is_empty() { reference(b, &inst, &[]) } else { reference(b, &inst, args) };
                if got == Err(ErrorKind::Timeout) {
                    continue;
                }
                assert_eq!(
                    got.as_ref().map(|v| render_value(v, &out, Style::Output)),
                    want.as_ref().map(|v| render_value(v, &out, Style::Output)),
                    "{} at {inst} on {}",
                    b.name(),
                    render_inputs(args, &params)
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "only {checked} comparisons");
}

#[test]
fn to_enum_char_out_of_range() {
    let ops = OperatorSet::experiment();
    let ty = parse_type("Int -> Char").unwrap();
    let got = eval(&Expr::var("toEnum"), &ops, &ty, &[Value::Int(-5)], DEFAULT_FUEL);
    assert_eq!(got.unwrap_err().kind, ErrorKind::OutOfRange);
    assert_eq!(reference(Builtin::ToEnum, &ty, &[Value::Int(-5)]), Err(ErrorKind::OutOfRange));
}

fn arb_type() -> impl Strategy<Value = Ty> {
    let leaf = prop_oneof![Just(Ty::int()), Just(Ty::char()), Just(Ty::bool())];
    leaf.prop_recursive(2, 8, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Ty::list),
            inner.clone().prop_map(Ty::maybe),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Ty::pair(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Ty::either(a, b)),
        ]
    })
}

fn value_of(ty: &Ty, seed: u64) -> Value {
    let ops = OperatorSet::experiment();
    let pool = FunctionPool::new(&ops, &[]);
    let cfg = GenConfig {
        int_range: (-300, 300),
        char_range: ('\0', '\u{7f}'),
        ..GenConfig::default()
    };
    let mut rng = substream(seed, "value");
    synth_core::datagen::gen_value(ty, &cfg, &mut rng, &pool).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rendering_round_trips(ty in arb_type(), seed in any::<u64>()) {
        let ops = OperatorSet::experiment();
        let v = value_of(&ty, seed);
        for style in [Style::Input, Style::Output] {
            let text = render_value(&v, &ty, style);
            prop_assert_eq!(parse_value(&text, &ty, &ops).unwrap(), v.clone());
        }
        let inputs = render_inputs(std::slice::from_ref(&v), std::slice::from_ref(&ty));
        prop_assert_eq!(parse_inputs(&inputs, &[ty.clone()], &ops).unwrap(), vec![v]);
    }

    #[test]
    fn rendering_is_injective(ty in arb_type(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (value_of(&ty, s1), value_of(&ty, s2));
        let (ra, rb) = (render_value(&a, &ty, Style::Output), render_value(&b, &ty, Style::Output));
        prop_assert_eq!(a == b, ra == rb);
    }

    #[test]
    fn eval_is_pure_and_fuel_monotone(xs in proptest::collection::vec(proptest::collection::vec(-3i64..3, 0..4), 0..5), fuel in 1u64..400, extra in 1u64..1000) {
        let ops = OperatorSet::experiment();
        let prog = parse_expr("sequenceA", &ops).unwrap();
        let ty = parse_type("[[Int]] -> [[Int]]").unwrap();
        let arg = Value::List(xs.iter().map(|l| Value::List(l.iter().map(|&x| Value::Int(x)).collect())).collect());
        let out_ty = parse_type("[[Int]]").unwrap();
        let a: Outcome = eval(&prog, &ops, &ty, std::slice::from_ref(&arg), fuel);
        let b: Outcome = eval(&prog, &ops, &ty, std::slice::from_ref(&arg), fuel);
        prop_assert_eq!(render_outcome(&a, &out_ty), render_outcome(&b, &out_ty));
        if a.is_ok() {
            let c = eval(&prog, &ops, &ty, &[arg], fuel + extra);
            prop_assert_eq!(render_outcome(&a, &out_ty), render_outcome(&c, &out_ty));
        }
    }
}

#[test]
fn equivalent_programs_share_fingerprints() {
    use synth_core::interp::{behavior_fingerprint, IoPair};
    let ops = OperatorSet::experiment();
    let ty = parse_type("Int -> Maybe Int").unwrap();
    let a = parse_expr("just", &ops).unwrap();
    let b = parse_expr("(compose just fromEnum)", &ops).unwrap();
    let out = parse_type("Maybe Int").unwrap();
    let ios = |p: &Expr| -> Vec<IoPair> {
        (-3..3)
            .map(|n| IoPair {
                input: render_inputs(&[Value::Int(n)], &[Ty::int()]),
                output: render_outcome(&eval(p, &ops, &ty, &[Value::Int(n)], DEFAULT_FUEL), &out),
            })
            .collect()
    };
    assert_eq!(behavior_fingerprint(&ios(&a)), behavior_fingerprint(&ios(&b)));
    let f = program_value(&a, &ops, &ty).unwrap();
    assert_eq!(render_value(&f, &ty, Style::Input), "just");
}
