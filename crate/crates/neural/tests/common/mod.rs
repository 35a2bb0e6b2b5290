#![allow(dead_code)]

use synth_core::datagen::{Dataset, GenConfig, TaskInstance};
use synth_core::interp::IoPair;
use synth_core::lang::{infer_type, parse_expr, parse_type, OperatorSet};

/// A task with hand-written examples; the examples need not be the
/// program's real behavior when only shapes or gradients matter.
pub fn task(ops: &OperatorSet, prog: &str, params: &[&str], out: &str, ios: &[(&str, &str)]) -> TaskInstance {
    let program = parse_expr(prog, ops).unwrap();
    TaskInstance {
        scheme: infer_type(&program, ops).unwrap(),
        program,
        param_tys: params.iter().map(|p| parse_type(p).unwrap()).collect(),
        out_ty: parse_type(out).unwrap(),
        ios: ios
            .iter()
            .map(|(i, o)| IoPair {
                input: i.to_string(),
                output: o.to_string(),
            })
            .collect(),
        split: None,
    }
}

pub fn dataset(names: &[&str], pairs: usize, train: Vec<TaskInstance>) -> Dataset {
    let ops = OperatorSet::from_names(names).unwrap();
    let cfg = GenConfig {
        operators: names.iter().map(|s| s.to_string()).collect(),
        io_pairs_fixed: pairs,
        ..GenConfig::default()
    };
    Dataset::from_splits(ops, cfg, train, vec![], vec![])
}

/// Two rules: `just` applied to one argument and bare `just`.
pub fn just_dataset() -> Dataset {
    let ops = OperatorSet::from_names(&["just"]).unwrap();
    let t = task(&ops, "just", &["Bool"], "Maybe Bool", &[("(T)", "R (J T)"), ("(F)", "R (J F)"), ("(T)", "R J")]);
    dataset(&["just"], 2, vec![t])
}

/// Boolean toy set with multi-step derivations.
pub fn bool_dataset() -> Dataset {
    let ops = OperatorSet::from_names(&["and", "false", "just"]).unwrap();
    let tasks = vec![
        task(&ops, "and false", &["Bool"], "Bool", &[("(True)", "Right (False)"), ("(False)", "Right (False)")]),
        task(&ops, "just", &["Bool"], "Maybe Bool", &[("(True)", "Right (Just True)")]),
        task(&ops, "and (and false false)", &["Bool"], "Bool", &[("(True)", "Right (False)")]),
    ];
    dataset(&["and", "false", "just"], 2, tasks)
}
