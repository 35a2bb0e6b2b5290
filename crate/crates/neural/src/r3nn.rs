//! Recursive and reverse-recursive passes over partial program trees and the
//! resulting expansion distributions.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use synth_core::lang::{fill_hole, type_checks, unroll_grammar, Expr, ExpansionRule, HoleId, OperatorSet, Ppt};

use crate::encoding::BiLstmStack;
use crate::graph::{softmax, Graph, NodeId, MASKED};
use crate::params::{ParamId, ParamStore};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum R3nnError {
    #[error("no rule for {0}")]
    UnknownRule(String),
    #[error("the tree has no holes")]
    NoHoles,
    #[error("every expansion is ill-typed")]
    AllMasked,
}

/// Operators, their unrolled rules and the `(operator, arity) -> rule`
/// index.
#[derive(Clone, Debug)]
pub struct Grammar {
    pub ops: OperatorSet,
    pub rules: Vec<ExpansionRule>,
    index: HashMap<(usize, usize), usize>,
}

impl Grammar {
    pub fn new(ops: OperatorSet) -> Grammar {
        let rules = unroll_grammar(&ops);
        let index = rules.iter().enumerate().map(|(i, r)| ((r.op, r.applied), i)).collect();
        Grammar { ops, rules, index }
    }

    pub fn rule_index(&self, op: usize, applied: usize) -> Option<usize> {
        self.index.get(&(op, applied)).copied()
    }

    /// Leaf symbols: one per operator plus the hole symbol.
    pub fn symbol_count(&self) -> usize {
        self.ops.len() + 1
    }

    pub fn hole_symbol(&self) -> usize {
        self.ops.len()
    }
}

/// A partial program as R3NN sees it: an application spine is one branch
/// labelled with its unrolled rule, whose children are the arguments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tree {
    Leaf { symbol: usize, hole: Option<HoleId> },
    Branch { rule: usize, children: Vec<Tree> },
}

impl Tree {
    pub fn build(expr: &Expr, grammar: &Grammar) -> Result<Tree, R3nnError> {
        let op_of = |name: &str| grammar.ops.index_of(name).ok_or_else(|| R3nnError::UnknownRule(name.to_string()));
        match expr {
            Expr::Var(name) => Ok(Tree::Leaf {
                symbol: op_of(name)?,
                hole: None,
            }),
            Expr::Hole { id, .. } => Ok(Tree::Leaf {
                symbol: grammar.hole_symbol(),
                hole: Some(*id),
            }),
            Expr::App(..) => {
                let (head, args) = expr.spine();
                let Expr::Var(name) = head else {
                    return Err(R3nnError::UnknownRule(expr.to_string()));
                };
                let rule = grammar
                    .rule_index(op_of(name)?, args.len())
                    .ok_or_else(|| R3nnError::UnknownRule(expr.to_string()))?;
                let children = args.iter().map(|a| Tree::build(a, grammar)).collect::<Result<_, _>>()?;
                Ok(Tree::Branch { rule, children })
            }
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<(usize, Option<HoleId>)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<(usize, Option<HoleId>)>) {
        match self {
            Tree::Leaf { symbol, hole } => out.push((*symbol, *hole)),
            Tree::Branch { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

fn dense(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Dense {
    let bound = 1.0 / (input as f64).sqrt();
    Dense {
        w: store.add_uniform(&format!("{name}.w"), &[input, output], bound, rng),
        b: store.add_uniform(&format!("{name}.b"), &[output], bound, rng),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct R3nnParams {
    pub m: usize,
    /// `symbols x m`.
    pub phi: ParamId,
    /// `rules x m`.
    pub omega: ParamId,
    /// Per rule with at least one argument: `Q*m -> m`.
    pub f: Vec<Option<Dense>>,
    /// Per rule with at least one argument: `m -> Q*m`.
    pub g: Vec<Option<Dense>>,
    /// `cond + m -> m`.
    pub cond_proj: Dense,
    pub cond_width: usize,
    /// One bidirectional layer of width `m / 2` per direction.
    pub leaf: BiLstmStack,
}

impl R3nnParams {
    pub fn create(store: &mut ParamStore, grammar: &Grammar, m: usize, cond_width: usize, rng: &mut impl Rng) -> R3nnParams {
        assert!(m % 2 == 0, "embedding width must be even");
        let bound = 1.0 / (m as f64).sqrt();
        let phi = store.add_uniform("r3nn.phi", &[grammar.symbol_count(), m], bound, rng);
        let omega = store.add_uniform("r3nn.omega", &[grammar.rules.len(), m], bound, rng);
        let mut f = Vec::new();
        let mut g = Vec::new();
        for (i, r) in grammar.rules.iter().enumerate() {
            let q = r.applied;
            if q == 0 {
                f.push(None);
                g.push(None);
            } else {
                f.push(Some(dense(store, &format!("r3nn.f{i}"), q * m, m, rng)));
                g.push(Some(dense(store, &format!("r3nn.g{i}"), m, q * m, rng)));
            }
        }
        let cond_proj = dense(store, "r3nn.cond", cond_width + m, m, rng);
        let leaf = BiLstmStack::create(store, "r3nn.leaf", m, m / 2, 1, rng);
        R3nnParams {
            m,
            phi,
            omega,
            f,
            g,
            cond_proj,
            cond_width,
            leaf,
        }
    }
}

/// `proj([cond; phi(symbol)])`.
pub fn condition_leaf(g: &mut Graph, p: &R3nnParams, cond: NodeId, symbol: usize) -> NodeId {
    let e = g.row(p.phi, symbol);
    let x = g.concat(&[cond, e]);
    g.affine(p.cond_proj.w, p.cond_proj.b, x)
}

/// Bottom-up `tanh(f_r [children])`; a lone leaf is its own root.
pub fn recursive_pass(g: &mut Graph, p: &R3nnParams, tree: &Tree, leaf: &mut impl FnMut(&mut Graph, usize) -> NodeId) -> NodeId {
    match tree {
        Tree::Leaf { symbol, .. } => leaf(g, *symbol),
        Tree::Branch { rule, children } => {
            let kids: Vec<NodeId> = children.iter().map(|c| recursive_pass(g, p, c, leaf)).collect();
            let x = g.concat(&kids);
            let d = p.f[*rule].expect("branch rules take arguments");
            let y = g.affine(d.w, d.b, x);
            g.tanh(y)
        }
    }
}

/// Top-down `tanh(g_r parent)` split into one `m`-slice per child; returns
/// the leaf vectors in left-to-right order.
pub fn reverse_pass(g: &mut Graph, p: &R3nnParams, tree: &Tree, root: NodeId) -> Vec<NodeId> {
    let mut out = Vec::new();
    down(g, p, tree, root, &mut out);
    out
}

fn down(g: &mut Graph, p: &R3nnParams, tree: &Tree, v: NodeId, out: &mut Vec<NodeId>) {
    match tree {
        Tree::Leaf { .. } => out.push(v),
        Tree::Branch { rule, children } => {
            let d = p.g[*rule].expect("branch rules take arguments");
            let y = g.affine(d.w, d.b, v);
            let y = g.tanh(y);
            for (i, c) in children.iter().enumerate() {
                let s = g.slice(y, i * p.m, p.m);
                down(g, p, c, s, out);
            }
        }
    }
}

/// Leaf vectors after the bidirectional leaf LSTM, in leaf order.
pub fn process_leaves(g: &mut Graph, p: &R3nnParams, leaves: &[NodeId]) -> Vec<NodeId> {
    let x = g.concat(leaves);
    let h = p.leaf.run(g, x);
    (0..leaves.len()).map(|i| g.slice(h, i * p.m, p.m)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Normalize over the leftmost hole's row.
    FirstHole,
    /// Normalize over every (hole, rule) pair.
    AnyHole,
}

/// Scores and probabilities over `holes x rules`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionDistribution {
    pub holes: Vec<HoleId>,
    pub n_rules: usize,
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ExpansionDistribution {
    /// Softmax over the whole matrix; pass only the leftmost hole's row for
    /// the first-hole policy.
    pub fn new(holes: Vec<HoleId>, n_rules: usize, scores: Vec<f64>) -> ExpansionDistribution {
        assert_eq!(holes.len() * n_rules, scores.len(), "score matrix shape");
        let probs = softmax(&scores);
        ExpansionDistribution {
            holes,
            n_rules,
            scores,
            probs,
        }
    }

    pub fn prob(&self, hole: HoleId, rule: usize) -> f64 {
        self.holes
            .iter()
            .position(|&h| h == hole)
            .map_or(0.0, |i| self.probs[i * self.n_rules + rule])
    }
}

/// Which `(hole, rule)` expansions of `ppt` still type-check, row-major
/// over `holes`.
pub fn type_mask(ppt: &Ppt, holes: &[HoleId], grammar: &Grammar) -> Vec<bool> {
    let mut keep = Vec::with_capacity(holes.len() * grammar.rules.len());
    for &h in holes {
        for r in &grammar.rules {
            keep.push(fill_hole(ppt, h, r).is_ok_and(|next| type_checks(&next, &grammar.ops)));
        }
    }
    keep
}

/// Ill-typed expansions get score [`MASKED`] and the rest renormalize.
pub fn mask_illtyped(dist: &ExpansionDistribution, ppt: &Ppt, grammar: &Grammar) -> Result<ExpansionDistribution, R3nnError> {
    let keep = type_mask(ppt, &dist.holes, grammar);
    apply_mask(dist, &keep)
}

pub fn apply_mask(dist: &ExpansionDistribution, keep: &[bool]) -> Result<ExpansionDistribution, R3nnError> {
    if !keep.iter().any(|&k| k) {
        return Err(R3nnError::AllMasked);
    }
    let scores = dist
        .scores
        .iter()
        .zip(keep)
        .map(|(&s, &k)| if k { s } else { MASKED })
        .collect();
    Ok(ExpansionDistribution::new(dist.holes.clone(), dist.n_rules, scores))
}

/// Draws `(hole, rule)`: from the leftmost hole's row under
/// [`Policy::FirstHole`], from the flattened matrix under
/// [`Policy::AnyHole`].
pub fn sample_expansion(dist: &ExpansionDistribution, rng: &mut impl Rng, policy: Policy) -> (HoleId, usize) {
    let n = dist.n_rules;
    match policy {
        Policy::FirstHole => {
            let row = if dist.holes.len() == 1 {
                dist.probs.clone()
            } else {
                softmax(&dist.scores[..n])
            };
            let r = WeightedIndex::new(&row).expect("valid distribution").sample(rng);
            (dist.holes[0], r)
        }
        Policy::AnyHole => {
            let k = WeightedIndex::new(&dist.probs).expect("valid distribution").sample(rng);
            (dist.holes[k / n], k % n)
        }
    }
}
