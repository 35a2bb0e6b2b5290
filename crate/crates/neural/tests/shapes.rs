mod common;

use synth_core::lang::{fill_hole, Ppt};
use synth_neural::graph::Graph;
use synth_neural::model::{Model, ModelConfig, StepContext, Variant};
use synth_neural::r3nn::Policy;

/// Trees over `Bool -> Bool` with one to three holes, built from `and`
/// applied to one or two arguments.
fn trees(model: &Model, target: &str) -> Vec<(usize, Ppt)> {
    let rule = |q: usize| {
        let op = model.grammar.ops.index_of("and").unwrap();
        &model.grammar.rules[model.grammar.rule_index(op, q).unwrap()]
    };
    let root = Ppt::root(synth_core::lang::parse_type(target).unwrap());
    let one = fill_hole(&root, 0, rule(1)).unwrap();
    let two = fill_hole(&root, 0, rule(2)).unwrap();
    let three = fill_hole(&two, two.holes()[0], rule(2)).unwrap();
    let mixed = fill_hole(&two, two.holes()[1], rule(1)).unwrap();
    vec![(1, one), (2, two), (3, three), (2, mixed)]
}

#[test]
fn widths_for_every_variant_and_tree() {
    let ds = common::bool_dataset();
    for variant in Variant::ALL {
        let mut cfg = ModelConfig::for_dataset(variant, &ds);
        cfg.h = 3;
        cfg.m = 4;
        let (h, m, t) = (cfg.h, cfg.m, cfg.t);
        let model = Model::new(cfg, 5).unwrap();
        let per_pair = if variant.typed() { 8 * h * t } else { 4 * h * t };
        assert_eq!(model.cfg.pair_width(), per_pair);
        assert_eq!(model.cfg.type_width(), m * t);
        assert_eq!(model.cfg.score_width(), if variant.typed() { m * (t + 1) } else { m });

        let task = &ds.train[0];
        let mut g = Graph::new(&model.params);
        let pairs = model.task_pairs(task).unwrap();
        assert_eq!(pairs.len(), model.cfg.pairs);
        let (p, o) = task.type_texts();
        let enc = model.encode_pairs(&mut g, &pairs, (&p, &o)).unwrap();
        assert_eq!(g.len(enc), model.cfg.pairs * per_pair);
        let cond = model.condition(&mut g, enc);
        assert_eq!(g.len(cond), 2 * h);

        let frozen = model.freeze_types().unwrap();
        if variant.typed() {
            assert_eq!(frozen.omega.len(), model.n_rules() * m * (t + 1));
            assert!(frozen.types.values().all(|v| v.len() == m * t));
        } else {
            assert!(frozen.omega.is_empty() && frozen.types.is_empty());
        }

        for (holes, ppt) in trees(&model, "Bool -> Bool") {
            let mut ctx = StepContext::new(cond);
            let s = model.score(&mut g, &mut ctx, &ppt, Policy::AnyHole).unwrap();
            assert_eq!(s.holes.len(), holes);
            assert_eq!(g.len(s.logits), holes * model.n_rules());
            let s = model.score(&mut g, &mut ctx, &ppt, Policy::FirstHole).unwrap();
            assert_eq!(s.holes, vec![ppt.holes()[0]]);
            assert_eq!(g.len(s.logits), model.n_rules());
        }
    }
}
