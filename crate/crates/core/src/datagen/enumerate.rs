use rayon::prelude::*;

use crate::lang::{fill_hole, type_checks, ExpansionRule, Expr, OperatorSet, Ppt, Ty};

/// Every well-typed, hole-free program of at most `max_nodes` operators, in
/// leftmost-derivation order over `rules`.
pub fn enumerate_programs(ops: &OperatorSet, rules: &[ExpansionRule], max_nodes: usize) -> Vec<Expr> {
    if max_nodes == 0 {
        return Vec::new();
    }
    let root = Ppt::root(Ty::var("a"));
    rules
        .par_iter()
        .map(|rule| {
            let mut out = Vec::new();
            if let Some(next) = expand(&root, 0, rule, ops, max_nodes) {
                walk(next, ops, rules, max_nodes, &mut out);
            }
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Fills `hole` if the result can still fit in `max_nodes` and type-checks.
fn expand(ppt: &Ppt, hole: u32, rule: &ExpansionRule, ops: &OperatorSet, max_nodes: usize) -> Option<Ppt> {
    // Every remaining hole needs at least one operator.
    let lower_bound = ppt.expr.node_count() + ppt.expr.hole_count() + rule.applied;
    if lower_bound > max_nodes {
        return None;
    }
    let next = fill_hole(ppt, hole, rule).ok()?;
    type_checks(&next, ops).then_some(next)
}

fn walk(ppt: Ppt, ops: &OperatorSet, rules: &[ExpansionRule], max_nodes: usize, out: &mut Vec<Expr>) {
    let Some(&(hole, _)) = ppt.expr.holes().first() else {
        out.push(ppt.expr);
        return;
    };
    for rule in rules {
        if let Some(next) = expand(&ppt, hole, rule, ops, max_nodes) {
            walk(next, ops, rules, max_nodes, out);
        }
    }
}
