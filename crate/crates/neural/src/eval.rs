//! Sampling programs for tasks, checking them against stored behavior and
//! aggregating accuracies across runs.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use synth_core::datagen::TaskInstance;
use synth_core::interp::{render_outcome, Evaluator};
use synth_core::lang::{fill_hole, hole_local_type, type_checks, Expr, OperatorSet, Ppt};
use synth_core::rng::substream;

use crate::graph::Graph;
use crate::model::{FrozenTypes, Model, ModelError, StepContext};
use crate::r3nn::{sample_expansion, Grammar, R3nnError};
use crate::train::golden_expansion;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub samples: usize,
    /// Sampled programs with more operator nodes are discarded.
    pub node_limit: usize,
    pub seed: u64,
    /// Restrict the random baseline to expansions that type-check.
    pub typed_random: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 100,
            node_limit: 6,
            seed: 0,
            typed_random: false,
        }
    }
}

/// Source of expansions during synthesis.
pub enum Synthesizer<'a> {
    Model { model: &'a Model, frozen: FrozenTypes },
    /// Uniform over rules for the leftmost hole.
    Random { grammar: Grammar },
    /// Always the expansion toward the task's own program.
    Oracle { grammar: Grammar },
}

impl<'a> Synthesizer<'a> {
    pub fn for_model(model: &'a Model) -> Result<Synthesizer<'a>, ModelError> {
        Ok(Synthesizer::Model {
            model,
            frozen: model.freeze_types()?,
        })
    }

    pub fn grammar(&self) -> &Grammar {
        match self {
            Synthesizer::Model { model, .. } => &model.grammar,
            Synthesizer::Random { grammar } | Synthesizer::Oracle { grammar } => grammar,
        }
    }
}

/// Per-task state of a model synthesizer.
struct TaskState {
    cond: Vec<f64>,
    root_types: FrozenTypes,
}

/// `cfg.samples` attempts for `task`, each grown from the root hole at the
/// task's instance type; `None` marks a discarded attempt.
pub fn sample_attempts(
    synth: &Synthesizer,
    task: &TaskInstance,
    cfg: &EvalConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Option<Expr>>, ModelError> {
    let target = task.instance_ty();
    let state = match synth {
        Synthesizer::Model { model, .. } => {
            let mut g = Graph::new(&model.params);
            let c = model.encode_task(&mut g, task)?;
            let root = if model.cfg.variant.typed() {
                model.embed_types([target.to_string().as_str()])?
            } else {
                FrozenTypes::default()
            };
            Some(TaskState {
                cond: g.value(c).to_vec(),
                root_types: root,
            })
        }
        _ => None,
    };
    let grammar = synth.grammar();
    let mut out = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let mut ppt = Ppt::root(target.clone());
        let program = loop {
            if ppt.is_complete() {
                break Some(ppt.expr);
            }
            // every open hole needs at least one more node
            if ppt.expr.node_count() + ppt.expr.hole_count() > cfg.node_limit {
                break None;
            }
            let Some((hole, rule)) = next_expansion(synth, state.as_ref(), task, &ppt, cfg, rng)? else {
                break None;
            };
            ppt = fill_hole(&ppt, hole, &grammar.rules[rule])?;
        };
        out.push(program);
    }
    Ok(out)
}

fn next_expansion(
    synth: &Synthesizer,
    state: Option<&TaskState>,
    task: &TaskInstance,
    ppt: &Ppt,
    cfg: &EvalConfig,
    rng: &mut impl Rng,
) -> Result<Option<(u32, usize)>, ModelError> {
    match synth {
        Synthesizer::Model { model, frozen } => {
            let state = state.expect("model state");
            let mut g = Graph::new(&model.params);
            let cond = g.input(state.cond.clone());
            let mut ctx = StepContext::new(cond).with_frozen(frozen).with_frozen(&state.root_types);
            match model.distribution(&mut g, &mut ctx, ppt) {
                Ok(d) => Ok(Some(sample_expansion(&d, rng, model.cfg.variant.policy()))),
                Err(ModelError::R3nn(R3nnError::AllMasked)) => Ok(None),
                Err(e) => Err(e),
            }
        }
        Synthesizer::Random { grammar } => {
            let hole = ppt.holes()[0];
            let n = grammar.rules.len();
            if !cfg.typed_random {
                return Ok(Some((hole, rng.gen_range(0..n))));
            }
            let ok: Vec<usize> = (0..n)
                .filter(|&r| fill_hole(ppt, hole, &grammar.rules[r]).is_ok_and(|p| type_checks(&p, &grammar.ops)))
                .collect();
            Ok((!ok.is_empty()).then(|| (hole, ok[rng.gen_range(0..ok.len())])))
        }
        Synthesizer::Oracle { grammar } => Ok(golden_expansion(ppt, &task.program, grammar)),
    }
}

/// The hole-free programs among `cfg.samples` attempts.
pub fn synthesize(synth: &Synthesizer, task: &TaskInstance, cfg: &EvalConfig, rng: &mut impl Rng) -> Result<Vec<Expr>, ModelError> {
    Ok(sample_attempts(synth, task, cfg, rng)?.into_iter().flatten().collect())
}

/// Does `program` reproduce every stored outcome of `task`?
pub fn behaves_like(program: &Expr, task: &TaskInstance, ops: &OperatorSet, fuel: u64) -> bool {
    let Ok(ev) = Evaluator::new(program, ops, &task.instance_ty()) else {
        return false;
    };
    let Ok(inputs) = task.input_values(ops) else {
        return false;
    };
    inputs
        .iter()
        .zip(&task.ios)
        .all(|(args, io)| render_outcome(&ev.run(args, fuel), &task.out_ty) == io.output)
}

/// The first program, if any, that matches the task's stored behavior.
pub fn task_success<'p>(programs: &'p [Expr], task: &TaskInstance, ops: &OperatorSet, fuel: u64) -> Option<&'p Expr> {
    let mut seen: HashMap<&Expr, bool> = HashMap::new();
    programs
        .iter()
        .find(|p| *seen.entry(p).or_insert_with(|| behaves_like(p, task, ops, fuel)))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub tasks: usize,
    pub successes: usize,
    pub mean: f64,
}

impl Bucket {
    fn of(flags: impl Iterator<Item = bool>) -> Bucket {
        let (mut tasks, mut successes) = (0, 0);
        for f in flags {
            tasks += 1;
            successes += usize::from(f);
        }
        let mean = if tasks == 0 { f64::NAN } else { successes as f64 / tasks as f64 };
        Bucket { tasks, successes, mean }
    }
}

/// Accuracy over a task set, overall and by golden program node count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub tasks: usize,
    pub successes: usize,
    pub mean: f64,
    pub by_nodes: BTreeMap<usize, Bucket>,
}

pub fn accuracy_report(flags: &[bool], tasks: &[&TaskInstance]) -> AccuracySummary {
    assert_eq!(flags.len(), tasks.len(), "one flag per task");
    let all = Bucket::of(flags.iter().copied());
    let mut by_nodes = BTreeMap::new();
    let mut sizes: Vec<usize> = tasks.iter().map(|t| t.program.node_count()).collect();
    sizes.sort();
    sizes.dedup();
    for n in sizes {
        let b = Bucket::of(flags.iter().zip(tasks).filter(|(_, t)| t.program.node_count() == n).map(|(f, _)| *f));
        by_nodes.insert(n, b);
    }
    AccuracySummary {
        tasks: all.tasks,
        successes: all.successes,
        mean: all.mean,
        by_nodes,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub program: String,
    pub instance_type: String,
    pub nodes: usize,
    pub attempts: usize,
    pub discarded: usize,
    /// Success within the first `n` attempts, keyed by `n`.
    pub success: BTreeMap<usize, bool>,
    pub solved_by: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub seed: u64,
    pub split: String,
    pub config: EvalConfig,
    /// Keyed by sample count: 20 (when at least 20 are drawn) and the full
    /// count; the smaller set is a prefix of the larger.
    pub summaries: BTreeMap<usize, AccuracySummary>,
    pub tasks: Vec<TaskRecord>,
}

impl EvalReport {
    pub fn summary(&self, n: usize) -> Option<&AccuracySummary> {
        self.summaries.get(&n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// One row per task.
    pub fn to_csv(&self) -> String {
        let ns: Vec<usize> = self.summaries.keys().copied().collect();
        let mut s = String::from("program,instance_type,nodes,attempts,discarded");
        for n in &ns {
            s.push_str(&format!(",success@{n}"));
        }
        s.push_str(",solved_by\n");
        for t in &self.tasks {
            s.push_str(&format!(
                "{},{},{},{},{}",
                csv_field(&t.program),
                csv_field(&t.instance_type),
                t.nodes,
                t.attempts,
                t.discarded
            ));
            for n in &ns {
                s.push_str(&format!(",{}", u8::from(t.success.get(n).copied().unwrap_or(false))));
            }
            s.push_str(&format!(",{}\n", csv_field(t.solved_by.as_deref().unwrap_or(""))));
        }
        s
    }
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Sample counts reported for `samples` draws.
pub fn report_points(samples: usize) -> Vec<usize> {
    if samples > 20 {
        vec![20, samples]
    } else {
        vec![samples]
    }
}

/// Runs `synth` on every task in parallel; task `i` draws from its own
/// substream so results do not depend on scheduling.
pub fn evaluate(
    synth: &Synthesizer,
    tasks: &[&TaskInstance],
    ops: &OperatorSet,
    fuel: u64,
    cfg: &EvalConfig,
) -> Result<EvalReport, ModelError> {
    let points = report_points(cfg.samples);
    let records = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let mut rng = substream(cfg.seed, &format!("synth/{i}"));
            let attempts = sample_attempts(synth, task, cfg, &mut rng)?;
            let mut success = BTreeMap::new();
            let mut solved_by = None;
            let mut memo: HashMap<Expr, bool> = HashMap::new();
            let mut first_hit: Option<usize> = None;
            for (k, a) in attempts.iter().enumerate() {
                if let Some(p) = a {
                    let ok = *memo.entry(p.clone()).or_insert_with(|| behaves_like(p, task, ops, fuel));
                    if ok {
                        first_hit = Some(k);
                        solved_by = Some(p.to_string());
                        break;
                    }
                }
            }
            for &n in &points {
                success.insert(n, first_hit.is_some_and(|k| k < n));
            }
            Ok(TaskRecord {
                program: task.program.to_string(),
                instance_type: task.instance_ty().to_string(),
                nodes: task.program.node_count(),
                attempts: attempts.len(),
                discarded: attempts.iter().filter(|a| a.is_none()).count(),
                success,
                solved_by,
            })
        })
        .collect::<Result<Vec<TaskRecord>, ModelError>>()?;
    let mut summaries = BTreeMap::new();
    for &n in &points {
        let flags: Vec<bool> = records.iter().map(|r| r.success[&n]).collect();
        summaries.insert(n, accuracy_report(&flags, tasks));
    }
    let variant = match synth {
        Synthesizer::Model { model, .. } => model.cfg.variant.name().to_string(),
        Synthesizer::Random { .. } => "random".into(),
        Synthesizer::Oracle { .. } => "oracle".into(),
    };
    Ok(EvalReport {
        variant,
        seed: cfg.seed,
        split: String::new(),
        config: cfg.clone(),
        summaries,
        tasks: records,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("at least two samples per side are required")]
    TooFewSamples,
    #[error("both samples are constant with different means")]
    DegenerateVariance,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

impl TTest {
    /// One-sided p-value for the alternative that the first mean is larger.
    pub fn p_greater(&self) -> f64 {
        if self.t == 0.0 && self.p == 1.0 {
            return 0.5;
        }
        let d = StudentsT::new(0.0, 1.0, self.df).expect("df > 0");
        1.0 - d.cdf(self.t)
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Independent two-sample t-test with pooled variance. Two constant
/// samples with equal means give `p = 1`.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFewSamples);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    if pooled == 0.0 {
        return if ma == mb {
            Ok(TTest { t: 0.0, df, p: 1.0 })
        } else {
            Err(StatsError::DegenerateVariance)
        };
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let d = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p = (2.0 * (1.0 - d.cdf(t.abs()))).min(1.0);
    Ok(TTest { t, df, p })
}

/// Per-seed results of one variant, aggregated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub seeds: Vec<u64>,
    /// Keyed by sample count.
    pub points: BTreeMap<usize, SeedAggregate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Sample variance across seeds; NaN with one seed.
    pub variance: f64,
    /// Mean over seeds of per-node accuracies.
    pub by_nodes: BTreeMap<usize, f64>,
}

/// Groups reports by variant, in first-seen order.
pub fn summarize_runs(reports: &[EvalReport]) -> Vec<VariantSummary> {
    let mut order: Vec<String> = Vec::new();
    for r in reports {
        if !order.contains(&r.variant) {
            order.push(r.variant.clone());
        }
    }
    order
        .into_iter()
        .map(|v| {
            let runs: Vec<&EvalReport> = reports.iter().filter(|r| r.variant == v).collect();
            let mut points = BTreeMap::new();
            let mut ns: Vec<usize> = runs.iter().flat_map(|r| r.summaries.keys().copied()).collect();
            ns.sort();
            ns.dedup();
            for n in ns {
                let sums: Vec<&AccuracySummary> = runs.iter().filter_map(|r| r.summary(n)).collect();
                let per_seed: Vec<f64> = sums.iter().map(|s| s.mean).collect();
                let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
                let variance = if per_seed.len() < 2 { f64::NAN } else { mean_var(&per_seed).1 };
                let mut by_nodes: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                for s in &sums {
                    for (k, b) in &s.by_nodes {
                        by_nodes.entry(*k).or_default().push(b.mean);
                    }
                }
                let by_nodes = by_nodes
                    .into_iter()
                    .map(|(k, xs)| (k, xs.iter().sum::<f64>() / xs.len() as f64))
                    .collect();
                points.insert(
                    n,
                    SeedAggregate {
                        per_seed,
                        mean,
                        variance,
                        by_nodes,
                    },
                );
            }
            VariantSummary {
                variant: v,
                seeds: runs.iter().map(|r| r.seed).collect(),
                points,
            }
        })
        .collect()
}

/// Pairwise two-sided p-values at sample count `n`; `None` where either
/// side has fewer than two seeds.
pub fn p_value_matrix(groups: &[VariantSummary], n: usize) -> Vec<Vec<Option<f64>>> {
    groups
        .iter()
        .map(|a| {
            groups
                .iter()
                .map(|b| {
                    let xa = &a.points.get(&n)?.per_seed;
                    let xb = &b.points.get(&n)?.per_seed;
                    match t_test(xa, xb) {
                        Ok(t) => Some(t.p),
                        Err(StatsError::DegenerateVariance) => Some(0.0),
                        Err(StatsError::TooFewSamples) => None,
                    }
                })
                .collect()
        })
        .collect()
}

/// The local type of the leftmost hole of `ppt`, as text.
pub fn leftmost_hole_type(ppt: &Ppt, ops: &OperatorSet) -> Option<String> {
    let h = *ppt.holes().first()?;
    hole_local_type(&ppt.expr, h, ops).ok().map(|t| t.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy_dataset;
    use crate::model::{ModelConfig, Variant};
    use synth_core::lang::parse_expr;

    #[test]
    fn oracle_solves_everything() {
        let ds = toy_dataset();
        let synth = Synthesizer::Oracle {
            grammar: Grammar::new(ds.ops.clone()),
        };
        let tasks: Vec<&TaskInstance> = ds.train.iter().collect();
        let r = evaluate(&synth, &tasks, &ds.ops, 1000, &EvalConfig::default()).unwrap();
        assert_eq!(r.summary(100).unwrap().mean, 1.0);
        assert_eq!(r.summary(20).unwrap().mean, 1.0);
    }

    #[test]
    fn model_samples_respect_the_limit_and_seed() {
        let ds = toy_dataset();
        let mut cfg = ModelConfig::for_dataset(Variant::Typed, &ds);
        cfg.h = 3;
        cfg.m = 4;
        let model = Model::new(cfg, 0).unwrap();
        let synth = Synthesizer::for_model(&model).unwrap();
        let ec = EvalConfig {
            samples: 30,
            node_limit: 3,
            ..EvalConfig::default()
        };
        let t = &ds.train[0];
        let a = sample_attempts(&synth, t, &ec, &mut substream(1, "s")).unwrap();
        let b = sample_attempts(&synth, t, &ec, &mut substream(1, "s")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        for p in a.iter().flatten() {
            assert!(p.is_complete() && p.node_count() <= 3);
        }
    }

    #[test]
    fn success_checks_behavior_not_text() {
        let ds = toy_dataset();
        let t = &ds.train[0]; // and false
        let p = |s: &str| parse_expr(s, &ds.ops).unwrap();
        assert!(task_success(&[], t, &ds.ops, 100).is_none());
        assert!(task_success(&[p("and false")], t, &ds.ops, 100).is_some());
        // `and false` on Bool is constantly False on both stored inputs,
        // as is `and (and false false)`
        let progs = [p("just"), p("and (and false false)")];
        assert_eq!(task_success(&progs, t, &ds.ops, 100), Some(&progs[1]));
    }

    #[test]
    fn buckets_partition_tasks() {
        let ds = toy_dataset();
        let tasks: Vec<&TaskInstance> = ds.train.iter().collect();
        let r = accuracy_report(&[true, false], &tasks);
        assert_eq!(r.mean, 0.5);
        assert_eq!(r.by_nodes.values().map(|b| b.tasks).sum::<usize>(), 2);
        let all = accuracy_report(&[true, true], &tasks);
        assert_eq!((all.mean, all.successes), (1.0, 2));
    }

    #[test]
    fn t_test_cases() {
        let a = [0.3, 0.3, 0.3, 0.3];
        assert_eq!(t_test(&a, &a).unwrap().p, 1.0);
        let b = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(t_test(&b, &b).unwrap().p, 1.0);
        assert_eq!(t_test(&a, &[0.2, 0.2]), Err(StatsError::DegenerateVariance));
        assert_eq!(t_test(&a, &[0.2]), Err(StatsError::TooFewSamples));
        let t = t_test(&[1.0, 2.0], &[3.0, 5.0]).unwrap();
        // pooled variance (0.5 + 2) / 2 = 1.25, se = sqrt(1.25), t = -2.5 / se
        let want = -2.5 / 1.25f64.sqrt();
        assert!((t.t - want).abs() < 1e-12);
        assert_eq!(t.df, 2.0);
        // with two degrees of freedom the two-sided p is 1 - |t| / sqrt(2 + t^2)
        assert!((t.p - (1.0 - want.abs() / (2.0 + want * want).sqrt())).abs() < 1e-9);
        assert!((t.p_greater() - (1.0 - t.p / 2.0)).abs() < 1e-9);
    }
}
