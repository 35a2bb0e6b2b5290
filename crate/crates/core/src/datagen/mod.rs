//! Synthetic task generation: enumerate programs, instantiate their types,
//! sample inputs, record behavior, deduplicate and split.

mod config;
mod enumerate;
mod inputs;
mod instances;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{GenConfig, SplitRatios};
pub use enumerate::enumerate_programs;
pub use inputs::{gen_input_tuples, gen_inputs, gen_value, FunctionPool};
pub use instances::{instantiate_task, monotypes_by_arity, sample_monotypes, unary_constructors};

use crate::interp::{
    behavior_fingerprint, parse_inputs, render_inputs, render_outcome, Evaluator, IoPair, Value,
    ValueParseError,
};
use crate::lang::{
    infer_type, parse_expr, parse_scheme, parse_type, sane_type, unroll_grammar, ExpansionRule, Expr,
    OperatorSet, Scheme, Ty, TypeclassTable,
};
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no valid type instance for {0}")]
    NoValidInstance(String),
    #[error("no samples for type {0}")]
    NoSamples(String),
    #[error("all candidate tasks were filtered out")]
    EmptyDataset,
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A task function at one monomorphic type, with its examples.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskInstance {
    pub program: Expr,
    pub scheme: Scheme,
    pub param_tys: Vec<Ty>,
    pub out_ty: Ty,
    pub ios: Vec<IoPair>,
    pub split: Option<Split>,
}

impl TaskInstance {
    /// The full instance type `p1 -> ... -> out`.
    pub fn instance_ty(&self) -> Ty {
        Ty::arrows(&self.param_tys, self.out_ty.clone())
    }

    /// Parameter types as one string, `p1 -> p2`.
    pub fn params_text(&self) -> String {
        self.param_tys
            .iter()
            .map(|t| match t.as_fun() {
                Some(_) => format!("({t})"),
                None => t.to_string(),
            })
            .collect::<Vec<_>>()
            .join(" -> ")
    }

    pub fn fingerprint(&self) -> String {
        behavior_fingerprint(&self.ios)
    }

    /// Behavioral identity: parameter types plus io fingerprint.
    pub fn behavior_key(&self) -> String {
        format!("{}\n{}", self.params_text(), self.fingerprint())
    }

    pub fn input_values(&self, ops: &OperatorSet) -> Result<Vec<Vec<Value>>, ValueParseError> {
        self.ios
            .iter()
            .map(|io| parse_inputs(&io.input, &self.param_tys, ops))
            .collect()
    }

    /// Type strings seen by the typed encoder for each io pair: the
    /// parameter types and the output type.
    pub fn type_texts(&self) -> (String, String) {
        (self.params_text(), self.out_ty.to_string())
    }
}

/// Characters in sorted order; a character's index is its position.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CharMap {
    chars: Vec<char>,
}

impl CharMap {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> CharMap {
        let set: BTreeSet<char> = texts.into_iter().flat_map(str::chars).collect();
        CharMap {
            chars: set.into_iter().collect(),
        }
    }

    pub fn index(&self, c: char) -> Option<usize> {
        self.chars.binary_search(&c).ok()
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharMaps {
    pub io: CharMap,
    pub types: CharMap,
    pub union: CharMap,
    pub max_len_io: usize,
    pub max_len_either: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub ops: OperatorSet,
    pub rules: Vec<ExpansionRule>,
    pub train: Vec<TaskInstance>,
    pub val: Vec<TaskInstance>,
    pub test: Vec<TaskInstance>,
    pub charmaps: CharMaps,
    pub gen_config: GenConfig,
    pub monotypes_by_arity: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[TaskInstance] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn all_tasks(&self) -> impl Iterator<Item = &TaskInstance> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

/// Every type string a model may embed: rule result and hole types.
pub fn rule_type_texts(rules: &[ExpansionRule]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rules {
        out.push(r.result_ty.to_string());
        out.extend(r.hole_tys.iter().map(Ty::to_string));
    }
    out
}

/// Type strings attached to a task: its io-side type texts and the full
/// instance type used as the root hole type.
pub fn task_type_texts(t: &TaskInstance) -> Vec<String> {
    let (p, o) = t.type_texts();
    vec![p, o, t.instance_ty().to_string()]
}

/// Character vocabularies and maximum lengths over rendered io strings and
/// (for the typed variant) type strings.
pub fn build_char_maps(tasks: &[&TaskInstance], rules: &[ExpansionRule]) -> CharMaps {
    let io_texts: Vec<&str> = tasks
        .iter()
        .flat_map(|t| t.ios.iter().flat_map(|p| [p.input.as_str(), p.output.as_str()]))
        .collect();
    let mut type_texts: Vec<String> = if tasks.is_empty() { Vec::new() } else { rule_type_texts(rules) };
    for t in tasks {
        type_texts.extend(task_type_texts(t));
    }
    let max_len_io = io_texts.iter().map(|s| s.chars().count()).max().unwrap_or(0);
    let max_len_types = type_texts.iter().map(|s| s.chars().count()).max().unwrap_or(0);
    CharMaps {
        io: CharMap::from_texts(io_texts.iter().copied()),
        types: CharMap::from_texts(type_texts.iter().map(String::as_str)),
        union: CharMap::from_texts(io_texts.iter().copied().chain(type_texts.iter().map(String::as_str))),
        max_len_io,
        max_len_either: max_len_io.max(max_len_types),
    }
}

/// Keeps one instance per behavior: the program with the most instances,
/// then the fewest nodes, then the smallest canonical text. Survivors keep
/// their input order.
pub fn dedup_by_behavior(tasks: Vec<TaskInstance>) -> Vec<TaskInstance> {
    let mut generality: HashMap<String, usize> = HashMap::new();
    for t in &tasks {
        *generality.entry(t.program.to_string()).or_default() += 1;
    }
    let rank = |t: &TaskInstance| {
        let text = t.program.to_string();
        (std::cmp::Reverse(generality[&text]), t.program.node_count(), text)
    };
    let mut best: HashMap<String, usize> = HashMap::new();
    for (i, t) in tasks.iter().enumerate() {
        let key = t.behavior_key();
        match best.get(&key) {
            Some(&j) if rank(&tasks[j]) <= rank(t) => {}
            _ => {
                best.insert(key, i);
            }
        }
    }
    let keep: BTreeSet<usize> = best.into_values().collect();
    tasks
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, t)| t)
        .collect()
}

/// Split sizes: `round(n * train)`, `round(n * val)`, remainder to test.
pub fn split_sizes(n: usize, ratios: &SplitRatios) -> (usize, usize, usize) {
    let train = ((n as f64) * ratios.train).round() as usize;
    let val = (((n as f64) * ratios.val).round() as usize).min(n - train.min(n));
    let train = train.min(n);
    (train, val, n - train - val)
}

/// Uniform random partition into (train, val, test).
pub fn split_dataset(
    tasks: Vec<TaskInstance>,
    ratios: &SplitRatios,
    rng: &mut impl rand::Rng,
) -> (Vec<TaskInstance>, Vec<TaskInstance>, Vec<TaskInstance>) {
    let (n_train, n_val, _) = split_sizes(tasks.len(), ratios);
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(rng);
    let mut slots: Vec<Option<TaskInstance>> = tasks.into_iter().map(Some).collect();
    let mut take = |range: std::ops::Range<usize>, s: Split| -> Vec<TaskInstance> {
        order[range]
            .iter()
            .map(|&i| {
                let mut t = slots[i].take().expect("each index once");
                t.split = Some(s);
                t
            })
            .collect()
    };
    let train = take(0..n_train, Split::Train);
    let val = take(n_train..n_train + n_val, Split::Val);
    let test = take(n_train + n_val..order.len(), Split::Test);
    (train, val, test)
}

/// Programs kept as task functions: functions with a sane principal type.
pub fn task_programs(programs: &[Expr], ops: &OperatorSet) -> Vec<(Expr, Scheme)> {
    programs
        .iter()
        .filter_map(|p| {
            let s = infer_type(p, ops).ok()?;
            (s.body.arrow_count() >= 1 && sane_type(&s)).then(|| (p.clone(), s))
        })
        .collect()
}

/// Instances of one program with their evaluated examples.
fn program_instances(
    program: &Expr,
    scheme: &Scheme,
    monotypes: &[Ty],
    cfg: &GenConfig,
    ops: &OperatorSet,
    pool: &FunctionPool,
) -> Vec<TaskInstance> {
    let text = program.to_string();
    let mut rng = substream(cfg.seed, &format!("instances/{text}"));
    let Ok(instances) = instantiate_task(scheme, monotypes, &TypeclassTable, cfg, &mut rng) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for inst in instances {
        let (param_tys, out_ty) = inst.split_arrows();
        let mut rng = substream(cfg.seed, &format!("inputs/{text}/{inst}"));
        let Ok(tuples) = gen_input_tuples(&param_tys, cfg, &mut rng, pool) else {
            continue;
        };
        let Ok(ev) = Evaluator::new(program, ops, &inst) else {
            continue;
        };
        let ios: Vec<IoPair> = tuples
            .iter()
            .map(|args| IoPair {
                input: render_inputs(args, &param_tys),
                output: render_outcome(&ev.run(args, cfg.fuel), &out_ty),
            })
            .filter(|p| p.input.chars().count() <= cfg.max_render_len && p.output.chars().count() <= cfg.max_render_len)
            .collect();
        if ios.is_empty() {
            continue;
        }
        out.push(TaskInstance {
            program: program.clone(),
            scheme: scheme.clone(),
            param_tys,
            out_ty,
            ios,
            split: None,
        });
    }
    out
}

/// One program at a fixed monomorphic instance type, with inputs drawn
/// as in full generation. `None` when the type does not instantiate the
/// program's scheme or no example survives the render limit.
pub fn task_at(program: &Expr, instance: &Ty, ops: &OperatorSet, cfg: &GenConfig) -> Option<TaskInstance> {
    let scheme = infer_type(program, ops).ok()?;
    let rules = unroll_grammar(ops);
    let programs = enumerate_programs(ops, &rules, cfg.max_nodes);
    let pool = FunctionPool::new(ops, &programs);
    let text = program.to_string();
    let (param_tys, out_ty) = instance.split_arrows();
    let mut rng = substream(cfg.seed, &format!("inputs/{text}/{instance}"));
    let tuples = gen_input_tuples(&param_tys, cfg, &mut rng, &pool).ok()?;
    let ev = Evaluator::new(program, ops, instance).ok()?;
    let ios: Vec<IoPair> = tuples
        .iter()
        .map(|args| IoPair {
            input: render_inputs(args, &param_tys),
            output: render_outcome(&ev.run(args, cfg.fuel), &out_ty),
        })
        .filter(|p| p.input.chars().count() <= cfg.max_render_len && p.output.chars().count() <= cfg.max_render_len)
        .collect();
    (!ios.is_empty()).then(|| TaskInstance {
        program: program.clone(),
        scheme,
        param_tys,
        out_ty,
        ios,
        split: None,
    })
}

impl Dataset {
    /// A dataset over hand-picked splits; char maps are derived from them.
    pub fn from_splits(
        ops: OperatorSet,
        cfg: GenConfig,
        train: Vec<TaskInstance>,
        val: Vec<TaskInstance>,
        test: Vec<TaskInstance>,
    ) -> Dataset {
        let tag = |ts: Vec<TaskInstance>, s: Split| {
            ts.into_iter()
                .map(|mut t| {
                    t.split = Some(s);
                    t
                })
                .collect::<Vec<_>>()
        };
        let (train, val, test) = (tag(train, Split::Train), tag(val, Split::Val), tag(test, Split::Test));
        let rules = unroll_grammar(&ops);
        let all: Vec<&TaskInstance> = train.iter().chain(&val).chain(&test).collect();
        let charmaps = build_char_maps(&all, &rules);
        Dataset {
            ops,
            rules,
            train,
            val,
            test,
            charmaps,
            gen_config: cfg,
            monotypes_by_arity: BTreeMap::new(),
        }
    }
}

/// Runs the full generation pipeline. Deterministic in `cfg`.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset, DatagenError> {
    cfg.validate()?;
    let names: Vec<&str> = cfg.operators.iter().map(String::as_str).collect();
    let ops = OperatorSet::from_names(&names).map_err(|e| DatagenError::InvalidConfig(e.to_string()))?;
    let rules = unroll_grammar(&ops);
    let programs = enumerate_programs(&ops, &rules, cfg.max_nodes);
    let monotypes = sample_monotypes(cfg, &mut substream(cfg.seed, "monotypes"));
    let candidates = task_programs(&programs, &ops);
    let pool = FunctionPool::new(&ops, &programs);
    let tasks: Vec<TaskInstance> = candidates
        .par_iter()
        .map(|(p, s)| program_instances(p, s, &monotypes, cfg, &ops, &pool))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut tasks = dedup_by_behavior(tasks);
    if tasks.is_empty() {
        return Err(DatagenError::EmptyDataset);
    }
    if tasks.len() > cfg.train_sample_cap {
        let mut rng = substream(cfg.seed, "cap");
        let mut keep = index::sample(&mut rng, tasks.len(), cfg.train_sample_cap).into_vec();
        keep.sort_unstable();
        let mut slots: Vec<Option<TaskInstance>> = tasks.into_iter().map(Some).collect();
        tasks = keep.into_iter().map(|i| slots[i].take().expect("distinct")).collect();
    }
    let (train, val, test) = split_dataset(tasks, &cfg.ratios, &mut substream(cfg.seed, "split"));
    let all: Vec<&TaskInstance> = train.iter().chain(&val).chain(&test).collect();
    let charmaps = build_char_maps(&all, &rules);
    Ok(Dataset {
        ops,
        rules,
        train,
        val,
        test,
        charmaps,
        gen_config: cfg.clone(),
        monotypes_by_arity: monotypes_by_arity(&monotypes),
    })
}

// ---- serialization ----

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    name: String,
    scheme: String,
}

#[derive(Serialize, Deserialize)]
struct RuleJson {
    operator: String,
    applied: usize,
    result_ty: String,
    hole_tys: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TaskJson {
    program: String,
    scheme: String,
    param_tys: Vec<String>,
    out_ty: String,
    ios: Vec<IoPair>,
}

#[derive(Serialize, Deserialize)]
struct TasksJson {
    train: Vec<TaskJson>,
    val: Vec<TaskJson>,
    test: Vec<TaskJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetJson {
    operators: Vec<OperatorJson>,
    rules: Vec<RuleJson>,
    tasks: TasksJson,
    charmap_io: CharMap,
    charmap_types: CharMap,
    charmap_union: CharMap,
    max_len_io: usize,
    max_len_either: usize,
    gen_config: GenConfig,
    monotypes_by_arity: BTreeMap<String, Vec<String>>,
}

fn task_json(t: &TaskInstance) -> TaskJson {
    TaskJson {
        program: t.program.to_string(),
        scheme: t.scheme.to_string(),
        param_tys: t.param_tys.iter().map(Ty::to_string).collect(),
        out_ty: t.out_ty.to_string(),
        ios: t.ios.clone(),
    }
}

fn task_from_json(j: TaskJson, ops: &OperatorSet, split: Split) -> Result<TaskInstance, DatagenError> {
    let bad = |e: String| DatagenError::Malformed(e);
    Ok(TaskInstance {
        program: parse_expr(&j.program, ops).map_err(|e| bad(e.to_string()))?,
        scheme: parse_scheme(&j.scheme).map_err(|e| bad(e.to_string()))?,
        param_tys: j
            .param_tys
            .iter()
            .map(|t| parse_type(t).map_err(|e| bad(e.to_string())))
            .collect::<Result<_, _>>()?,
        out_ty: parse_type(&j.out_ty).map_err(|e| bad(e.to_string()))?,
        ios: j.ios,
        split: Some(split),
    })
}

impl Dataset {
    /// Single JSON document; byte-identical for identical datasets.
    pub fn to_json(&self) -> String {
        let doc = DatasetJson {
            operators: self
                .ops
                .iter()
                .map(|o| OperatorJson {
                    name: o.name.clone(),
                    scheme: o.scheme.to_string(),
                })
                .collect(),
            rules: self
                .rules
                .iter()
                .map(|r| RuleJson {
                    operator: r.name.clone(),
                    applied: r.applied,
                    result_ty: r.result_ty.to_string(),
                    hole_tys: r.hole_tys.iter().map(Ty::to_string).collect(),
                })
                .collect(),
            tasks: TasksJson {
                train: self.train.iter().map(task_json).collect(),
                val: self.val.iter().map(task_json).collect(),
                test: self.test.iter().map(task_json).collect(),
            },
            charmap_io: self.charmaps.io.clone(),
            charmap_types: self.charmaps.types.clone(),
            charmap_union: self.charmaps.union.clone(),
            max_len_io: self.charmaps.max_len_io,
            max_len_either: self.charmaps.max_len_either,
            gen_config: self.gen_config.clone(),
            monotypes_by_arity: self.monotypes_by_arity.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Dataset, DatagenError> {
        let doc: DatasetJson = serde_json::from_str(text)?;
        let names: Vec<&str> = doc.operators.iter().map(|o| o.name.as_str()).collect();
        let ops = OperatorSet::from_names(&names).map_err(|e| DatagenError::Malformed(e.to_string()))?;
        let rules = unroll_grammar(&ops);
        if rules.len() != doc.rules.len() {
            return Err(DatagenError::Malformed("rule table does not match operators".into()));
        }
        let convert = |ts: Vec<TaskJson>, s: Split| {
            ts.into_iter()
                .map(|t| task_from_json(t, &ops, s))
                .collect::<Result<Vec<_>, _>>()
        };
        let train = convert(doc.tasks.train, Split::Train)?;
        let val = convert(doc.tasks.val, Split::Val)?;
        let test = convert(doc.tasks.test, Split::Test)?;
        Ok(Dataset {
            rules,
            train,
            val,
            test,
            charmaps: CharMaps {
                io: doc.charmap_io,
                types: doc.charmap_types,
                union: doc.charmap_union,
                max_len_io: doc.max_len_io,
                max_len_either: doc.max_len_either,
            },
            gen_config: doc.gen_config,
            monotypes_by_arity: doc.monotypes_by_arity,
            ops,
        })
    }
}
