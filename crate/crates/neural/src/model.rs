//! Model variants and the full scoring pipeline: io encoding, conditioning,
//! R3NN passes and typed augmentation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use synth_core::datagen::{CharMap, Dataset, TaskInstance};
use synth_core::interp::IoPair;
use synth_core::lang::{hole_local_type, GrammarError, HoleId, OperatorSet, Ppt};
use synth_core::rng::substream;

use crate::encoding::{encode_pair, encode_type_string, fix_sample_count, BiLstmStack, EncodeError, PairEncoder, TypeEncoder};
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::r3nn::{
    apply_mask, condition_leaf, process_leaves, recursive_pass, reverse_pass, type_mask, ExpansionDistribution, Grammar,
    Policy, R3nnError, R3nnParams, Tree,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Vanilla,
    /// Vanilla with doubled encoder width.
    Large,
    /// Io and type one-hots encoded together, type-augmented embeddings.
    Typed,
    /// Typed, with ill-typed expansions masked before the softmax.
    TypedMask,
    /// Vanilla scoring normalized over every hole.
    Anyhole,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Vanilla,
        Variant::Large,
        Variant::Typed,
        Variant::TypedMask,
        Variant::Anyhole,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Large => "large",
            Variant::Typed => "typed",
            Variant::TypedMask => "typed-mask",
            Variant::Anyhole => "anyhole",
        }
    }

    pub fn from_name(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn typed(self) -> bool {
        matches!(self, Variant::Typed | Variant::TypedMask)
    }

    pub fn masked(self) -> bool {
        self == Variant::TypedMask
    }

    pub fn policy(self) -> Policy {
        if self == Variant::Anyhole {
            Policy::AnyHole
        } else {
            Policy::FirstHole
        }
    }

    /// Encoder width per direction before the typed doubling.
    pub fn default_hidden(self) -> usize {
        if self == Variant::Large {
            64
        } else {
            32
        }
    }
}

/// Everything that fixes parameter shapes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// `H`: features per direction in the io encoders; the typed variant
    /// uses `2H` so io and types each get `H`.
    pub h: usize,
    /// `M`: symbol and rule embedding width.
    pub m: usize,
    pub layers: usize,
    pub cond_layers: usize,
    /// io pairs per task fed to the encoder.
    pub pairs: usize,
    /// `T`: maximum string length.
    pub t: usize,
    pub charmap: CharMap,
    pub operators: Vec<String>,
}

impl ModelConfig {
    /// Defaults for `variant` on `ds`: `T` and the charmap come from io
    /// strings, or from io and type strings for typed variants.
    pub fn for_dataset(variant: Variant, ds: &Dataset) -> ModelConfig {
        let (t, charmap) = if variant.typed() {
            (ds.charmaps.max_len_either, ds.charmaps.union.clone())
        } else {
            (ds.charmaps.max_len_io, ds.charmaps.io.clone())
        };
        ModelConfig {
            variant,
            h: variant.default_hidden(),
            m: 32,
            layers: 3,
            cond_layers: 3,
            pairs: ds.gen_config.io_pairs_fixed,
            t,
            charmap,
            operators: ds.ops.names().into_iter().map(String::from).collect(),
        }
    }

    /// Stack width per direction in the pair encoders.
    pub fn encoder_hidden(&self) -> usize {
        if self.variant.typed() {
            2 * self.h
        } else {
            self.h
        }
    }

    /// Features per io pair: `4HT`, or `8HT` when typed.
    pub fn pair_width(&self) -> usize {
        4 * self.encoder_hidden() * self.t
    }

    /// Rule and hole type embeddings: `M*T`.
    pub fn type_width(&self) -> usize {
        self.m * self.t
    }

    /// Width of the vectors whose dot product scores an expansion: `M`, or
    /// `M*(T+1)` when typed.
    pub fn score_width(&self) -> usize {
        if self.variant.typed() {
            self.m * (self.t + 1)
        } else {
            self.m
        }
    }

    /// Why this model cannot read `ds`, if it cannot.
    pub fn mismatch(&self, ds: &Dataset) -> Option<String> {
        let names: Vec<String> = ds.ops.names().into_iter().map(String::from).collect();
        if names != self.operators {
            return Some(format!("operators differ: model {:?}, dataset {:?}", self.operators, names));
        }
        let other = ModelConfig::for_dataset(self.variant, ds);
        if let Some(c) = other.charmap.chars().iter().find(|&&c| self.charmap.index(c).is_none()) {
            return Some(format!("dataset character {c:?} is unknown to the model"));
        }
        if other.t > self.t {
            return Some(format!("dataset strings reach length {}, model holds {}", other.t, self.t));
        }
        None
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    R3nn(#[from] R3nnError),
    #[error("hole {hole} is not the leftmost hole")]
    NotFirstHole { hole: HoleId },
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub grammar: Grammar,
    pub params: ParamStore,
    pub enc: PairEncoder,
    pub types: Option<TypeEncoder>,
    pub cond: BiLstmStack,
    pub r3nn: R3nnParams,
}

/// Precomputed type-augmented rule embeddings and type-string embeddings.
#[derive(Clone, Debug, Default)]
pub struct FrozenTypes {
    /// `rules x score_width`, row-major.
    pub omega: Vec<f64>,
    pub types: HashMap<String, Vec<f64>>,
}

/// Per-graph caches for one task.
pub struct StepContext<'a> {
    pub cond: NodeId,
    symbols: HashMap<usize, NodeId>,
    types: HashMap<String, NodeId>,
    omega: Option<NodeId>,
    frozen: Vec<&'a FrozenTypes>,
}

impl<'a> StepContext<'a> {
    pub fn new(cond: NodeId) -> StepContext<'a> {
        StepContext {
            cond,
            symbols: HashMap::new(),
            types: HashMap::new(),
            omega: None,
            frozen: Vec::new(),
        }
    }

    /// Looks type embeddings and augmented rule embeddings up in `frozen`
    /// instead of recomputing them.
    pub fn with_frozen(mut self, frozen: &'a FrozenTypes) -> StepContext<'a> {
        self.frozen.push(frozen);
        self
    }
}

/// Holes scored in one step and their logits, row-major `holes x rules`.
#[derive(Clone, Debug)]
pub struct ScoredStep {
    pub holes: Vec<HoleId>,
    pub logits: NodeId,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Model, ModelError> {
        let names: Vec<&str> = cfg.operators.iter().map(String::as_str).collect();
        let grammar = Grammar::new(OperatorSet::from_names(&names)?);
        let mut rng = substream(seed, "init");
        let mut params = ParamStore::new();
        let v = cfg.charmap.len();
        let enc = PairEncoder::create(&mut params, v, cfg.t, cfg.encoder_hidden(), cfg.layers, cfg.variant.typed(), &mut rng);
        let types = cfg
            .variant
            .typed()
            .then(|| TypeEncoder::create(&mut params, v, cfg.t, cfg.h, cfg.layers, cfg.m, &mut rng));
        let cond = BiLstmStack::create(&mut params, "cond", enc.width(), cfg.h, cfg.cond_layers, &mut rng);
        let r3nn = R3nnParams::create(&mut params, &grammar, cfg.m, 2 * cfg.h, &mut rng);
        Ok(Model {
            cfg,
            grammar,
            params,
            enc,
            types,
            cond,
            r3nn,
        })
    }

    pub fn n_rules(&self) -> usize {
        self.grammar.rules.len()
    }

    /// The fixed-size pair sample for `task`, determined by its behavior.
    pub fn task_pairs(&self, task: &TaskInstance) -> Result<Vec<IoPair>, ModelError> {
        let mut rng = substream(0, &format!("pairs/{}", task.behavior_key()));
        Ok(fix_sample_count(&task.ios, self.cfg.pairs, &mut rng)?)
    }

    /// Per-pair features, `pairs x pair_width`.
    pub fn encode_pairs(&self, g: &mut Graph, pairs: &[IoPair], types: (&str, &str)) -> Result<NodeId, ModelError> {
        if pairs.len() != self.cfg.pairs {
            return Err(EncodeError::ShapeMismatch {
                expected: self.cfg.pairs,
                found: pairs.len(),
            }
            .into());
        }
        let typed = self.cfg.variant.typed().then_some(types);
        let rows = pairs
            .iter()
            .map(|p| encode_pair(g, &self.enc, &self.cfg.charmap, &p.input, &p.output, typed))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(g.concat(&rows))
    }

    /// Conditioning vector: final forward state and first backward state of
    /// the recurrent pass over the pair axis, `2H` features.
    pub fn condition(&self, g: &mut Graph, encoded: NodeId) -> NodeId {
        let h = self.cfg.h;
        let out = self.cond.run(g, encoded);
        let steps = g.len(out) / (2 * h);
        let fwd = g.slice(out, (steps - 1) * 2 * h, h);
        let bwd = g.slice(out, h, h);
        g.concat(&[fwd, bwd])
    }

    pub fn encode_task(&self, g: &mut Graph, task: &TaskInstance) -> Result<NodeId, ModelError> {
        let pairs = self.task_pairs(task)?;
        let (p, o) = task.type_texts();
        let enc = self.encode_pairs(g, &pairs, (&p, &o))?;
        Ok(self.condition(g, enc))
    }

    fn type_embedding(&self, g: &mut Graph, ctx: &mut StepContext, text: &str) -> Result<NodeId, ModelError> {
        if let Some(&n) = ctx.types.get(text) {
            return Ok(n);
        }
        let node = match ctx.frozen.iter().find_map(|f| f.types.get(text)) {
            Some(v) => g.input(v.clone()),
            None => {
                let enc = self.types.as_ref().expect("typed model");
                encode_type_string(g, enc, &self.cfg.charmap, text)?
            }
        };
        ctx.types.insert(text.to_string(), node);
        Ok(node)
    }

    /// `rules x score_width` matrix of (augmented) rule embeddings.
    fn omega(&self, g: &mut Graph, ctx: &mut StepContext) -> Result<NodeId, ModelError> {
        if let Some(n) = ctx.omega {
            return Ok(n);
        }
        let node = if let Some(f) = ctx.frozen.iter().find(|f| !f.omega.is_empty()) {
            g.input(f.omega.clone())
        } else {
            let base = g.param(self.r3nn.omega);
            if self.cfg.variant.typed() {
                let rows = self
                    .grammar
                    .rules
                    .iter()
                    .map(|r| self.type_embedding(g, ctx, &r.result_ty.to_string()))
                    .collect::<Result<Vec<_>, _>>()?;
                let tys = g.concat(&rows);
                g.concat_cols(base, tys, self.n_rules())
            } else {
                base
            }
        };
        ctx.omega = Some(node);
        Ok(node)
    }

    /// Scores expansions of `ppt`: the leftmost hole only under
    /// [`Policy::FirstHole`], every hole under [`Policy::AnyHole`].
    pub fn score(&self, g: &mut Graph, ctx: &mut StepContext, ppt: &Ppt, policy: Policy) -> Result<ScoredStep, ModelError> {
        let tree = Tree::build(&ppt.expr, &self.grammar)?;
        let leaves = tree.leaves();
        if leaves.iter().all(|(_, h)| h.is_none()) {
            return Err(R3nnError::NoHoles.into());
        }
        let mut symbol = |g: &mut Graph, s: usize| {
            *ctx.symbols
                .entry(s)
                .or_insert_with(|| condition_leaf(g, &self.r3nn, ctx.cond, s))
        };
        let root = recursive_pass(g, &self.r3nn, &tree, &mut symbol);
        let down = reverse_pass(g, &self.r3nn, &tree, root);
        let processed = process_leaves(g, &self.r3nn, &down);
        let omega = self.omega(g, ctx)?;
        let mut holes = Vec::new();
        let mut rows = Vec::new();
        for (pos, (_, hole)) in leaves.iter().enumerate() {
            let Some(h) = *hole else { continue };
            let mut v = processed[pos];
            if self.cfg.variant.typed() {
                let ty = hole_local_type(&ppt.expr, h, &self.grammar.ops)?.to_string();
                let te = self.type_embedding(g, ctx, &ty)?;
                v = g.concat(&[v, te]);
            }
            holes.push(h);
            rows.push(g.mat_vec(omega, v));
            if policy == Policy::FirstHole {
                break;
            }
        }
        let logits = if rows.len() == 1 { rows[0] } else { g.concat(&rows) };
        Ok(ScoredStep { holes, logits })
    }

    /// The model's expansion distribution at `ppt`, masked for
    /// [`Variant::TypedMask`].
    pub fn distribution(&self, g: &mut Graph, ctx: &mut StepContext, ppt: &Ppt) -> Result<ExpansionDistribution, ModelError> {
        let s = self.score(g, ctx, ppt, self.cfg.variant.policy())?;
        let d = ExpansionDistribution::new(s.holes, self.n_rules(), g.value(s.logits).to_vec());
        if self.cfg.variant.masked() {
            let keep = type_mask(ppt, &d.holes, &self.grammar);
            Ok(apply_mask(&d, &keep)?)
        } else {
            Ok(d)
        }
    }

    /// Cross-entropy of expanding `hole` with `rule` at `ppt`.
    pub fn step_loss(
        &self,
        g: &mut Graph,
        ctx: &mut StepContext,
        ppt: &Ppt,
        hole: HoleId,
        rule: usize,
    ) -> Result<NodeId, ModelError> {
        let policy = self.cfg.variant.policy();
        let s = self.score(g, ctx, ppt, policy)?;
        let pos = s.holes.iter().position(|&h| h == hole).ok_or(ModelError::NotFirstHole { hole })?;
        let mut logits = s.logits;
        if self.cfg.variant.masked() {
            logits = g.mask(logits, type_mask(ppt, &s.holes, &self.grammar));
        }
        Ok(g.cross_entropy(logits, pos * self.n_rules() + rule))
    }

    /// Embeddings of every rule type string and the augmented rule matrix,
    /// computed once for inference.
    pub fn freeze_types(&self) -> Result<FrozenTypes, ModelError> {
        if !self.cfg.variant.typed() {
            return Ok(FrozenTypes::default());
        }
        let mut texts: Vec<String> = Vec::new();
        for r in &self.grammar.rules {
            texts.push(r.result_ty.to_string());
            texts.extend(r.hole_tys.iter().map(|t| t.to_string()));
        }
        let mut frozen = self.embed_types(texts.iter().map(String::as_str))?;
        let mut g = Graph::new(&self.params);
        let mut ctx = StepContext::new(0).with_frozen(&frozen);
        let omega = self.omega(&mut g, &mut ctx)?;
        frozen.omega = g.value(omega).to_vec();
        Ok(frozen)
    }

    /// Type embeddings for `texts`, without the rule matrix.
    pub fn embed_types<'t>(&self, texts: impl IntoIterator<Item = &'t str>) -> Result<FrozenTypes, ModelError> {
        let mut out = FrozenTypes::default();
        let Some(enc) = &self.types else { return Ok(out) };
        for text in texts {
            if out.types.contains_key(text) {
                continue;
            }
            let mut g = Graph::new(&self.params);
            let n = encode_type_string(&mut g, enc, &self.cfg.charmap, text)?;
            out.types.insert(text.to_string(), g.value(n).to_vec());
        }
        Ok(out)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use synth_core::datagen::{build_char_maps, GenConfig, TaskInstance};
    use synth_core::lang::{fill_hole, infer_type, parse_expr, parse_type, unroll_grammar};

    fn task(ops: &OperatorSet, prog: &str, params: &[&str], out: &str, ios: &[(&str, &str)]) -> TaskInstance {
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

    pub(crate) fn toy_dataset() -> Dataset {
        let ops = OperatorSet::from_names(&["and", "false", "just"]).unwrap();
        let rules = unroll_grammar(&ops);
        let tasks = vec![
            task(&ops, "and false", &["Bool"], "Bool", &[("(True)", "Right (False)"), ("(False)", "Right (False)")]),
            task(&ops, "just", &["Bool"], "Maybe Bool", &[("(True)", "Right (Just True)")]),
        ];
        let refs: Vec<&TaskInstance> = tasks.iter().collect();
        let charmaps = build_char_maps(&refs, &rules);
        Dataset {
            ops,
            rules,
            train: tasks,
            val: vec![],
            test: vec![],
            charmaps,
            gen_config: GenConfig {
                io_pairs_fixed: 3,
                ..GenConfig::default()
            },
            monotypes_by_arity: Default::default(),
        }
    }

    fn tiny(variant: Variant) -> (Dataset, Model) {
        let ds = toy_dataset();
        let mut cfg = ModelConfig::for_dataset(variant, &ds);
        cfg.h = 3;
        cfg.m = 4;
        let m = Model::new(cfg, 1).unwrap();
        (ds, m)
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::from_name(v.name()), Some(v));
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
    }

    #[test]
    fn shapes_for_every_variant() {
        for v in Variant::ALL {
            let (ds, model) = tiny(v);
            let cfg = &model.cfg;
            let (h, t, m) = (cfg.h, cfg.t, cfg.m);
            let per = if v.typed() { 8 } else { 4 };
            assert_eq!(cfg.pair_width(), per * h * t);
            let mut g = Graph::new(&model.params);
            let pairs = model.task_pairs(&ds.train[0]).unwrap();
            let (p, o) = ds.train[0].type_texts();
            let enc = model.encode_pairs(&mut g, &pairs, (&p, &o)).unwrap();
            assert_eq!(g.len(enc), 3 * per * h * t);
            let cond = model.condition(&mut g, enc);
            assert_eq!(g.len(cond), 2 * h);
            let mut ctx = StepContext::new(cond);
            let ty = ds.train[0].instance_ty();
            let mut ppt = Ppt::root(ty);
            let rule = &model.grammar.rules[model.grammar.rule_index(0, 2).unwrap()];
            ppt = fill_hole(&ppt, 0, rule).unwrap();
            let s = model.score(&mut g, &mut ctx, &ppt, Policy::AnyHole).unwrap();
            assert_eq!(s.holes.len(), 2);
            assert_eq!(g.len(s.logits), 2 * model.n_rules());
            let omega = ctx.omega.unwrap();
            assert_eq!(g.len(omega), model.n_rules() * cfg.score_width());
            if v.typed() {
                assert_eq!(cfg.score_width(), m * (t + 1));
                let te = model.type_embedding(&mut g, &mut ctx, "Bool").unwrap();
                assert_eq!(g.len(te), m * t);
                assert_eq!(cfg.type_width(), m * t);
            } else {
                assert_eq!(cfg.score_width(), m);
            }
        }
    }

    #[test]
    fn frozen_types_reproduce_graph_scores() {
        let (ds, model) = tiny(Variant::Typed);
        let frozen = model.freeze_types().unwrap();
        let t = &ds.train[0];
        let root = model.embed_types([t.instance_ty().to_string().as_str()]).unwrap();
        let ppt = Ppt::root(t.instance_ty());
        let live = {
            let mut g = Graph::new(&model.params);
            let c = model.encode_task(&mut g, t).unwrap();
            let mut ctx = StepContext::new(c);
            model.distribution(&mut g, &mut ctx, &ppt).unwrap()
        };
        let cached = {
            let mut g = Graph::new(&model.params);
            let c = model.encode_task(&mut g, t).unwrap();
            let mut ctx = StepContext::new(c).with_frozen(&frozen).with_frozen(&root);
            model.distribution(&mut g, &mut ctx, &ppt).unwrap()
        };
        for (a, b) in live.probs.iter().zip(&cached.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatch_detection() {
        let (ds, model) = tiny(Variant::Vanilla);
        assert_eq!(model.cfg.mismatch(&ds), None);
        let mut other = toy_dataset();
        other.ops = OperatorSet::from_names(&["and", "false"]).unwrap();
        assert!(model.cfg.mismatch(&other).is_some());
    }
}
