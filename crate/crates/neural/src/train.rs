//! Strong supervision: golden derivations, teacher-forced losses, clipped
//! Adam updates and the epoch loop with periodic validation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use synth_core::datagen::{Dataset, Split, TaskInstance};
use synth_core::lang::{fill_hole, Expr, GrammarError, HoleId, Ppt, Ty};
use synth_core::rng::substream;

use crate::eval::{evaluate, EvalConfig, Synthesizer};
use crate::graph::Graph;
use crate::model::{Model, ModelConfig, ModelError, StepContext, Variant};
use crate::params::{round_f32, Grads, ParamStore};
use crate::r3nn::{Grammar, Policy};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("program {0} cannot be derived from the grammar")]
    Underivable(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss at epoch {epoch} on task {program}")]
    Diverged { epoch: usize, program: String },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

impl From<GrammarError> for TrainError {
    fn from(e: GrammarError) -> Self {
        TrainError::Model(e.into())
    }
}

/// One teacher-forced step: the tree before the step and the expansion that
/// leads toward the golden program.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldenStep {
    pub ppt: Ppt,
    pub hole: HoleId,
    pub rule: usize,
}

/// The subexpression of `full` standing where `hole` stands in `partial`.
fn aligned<'a>(partial: &Expr, full: &'a Expr, hole: HoleId) -> Option<&'a Expr> {
    match (partial, full) {
        (Expr::Hole { id, .. }, _) => (*id == hole).then_some(full),
        (Expr::App(f1, x1), Expr::App(f2, x2)) => aligned(f1, f2, hole).or_else(|| aligned(x1, x2, hole)),
        _ => None,
    }
}

/// The rule that grows `hole` of `ppt` toward `program`.
pub fn golden_rule(ppt: &Ppt, hole: HoleId, program: &Expr, grammar: &Grammar) -> Option<usize> {
    let sub = aligned(&ppt.expr, program, hole)?;
    let (head, args) = sub.spine();
    let Expr::Var(name) = head else { return None };
    grammar.rule_index(grammar.ops.index_of(name)?, args.len())
}

/// The leftmost-hole expansion toward `program`.
pub fn golden_expansion(ppt: &Ppt, program: &Expr, grammar: &Grammar) -> Option<(HoleId, usize)> {
    let hole = *ppt.holes().first()?;
    golden_rule(ppt, hole, program, grammar).map(|r| (hole, r))
}

/// Derivation of `program` from the root hole at `target`, filling the hole
/// chosen by `pick` among the open holes at every step.
pub fn derivation_with(
    program: &Expr,
    target: &Ty,
    grammar: &Grammar,
    mut pick: impl FnMut(&[HoleId]) -> usize,
) -> Result<Vec<GoldenStep>, TrainError> {
    let underivable = || TrainError::Underivable(program.to_string());
    let mut ppt = Ppt::root(target.clone());
    let mut steps = Vec::new();
    while !ppt.is_complete() {
        let holes = ppt.holes();
        let hole = holes[pick(&holes)];
        let rule = golden_rule(&ppt, hole, program, grammar).ok_or_else(underivable)?;
        let next = fill_hole(&ppt, hole, &grammar.rules[rule])?;
        steps.push(GoldenStep { ppt, hole, rule });
        ppt = next;
    }
    if &ppt.expr != program {
        return Err(underivable());
    }
    Ok(steps)
}

/// Leftmost-hole derivation; one step per operator node.
pub fn golden_derivation(program: &Expr, target: &Ty, grammar: &Grammar) -> Result<Vec<GoldenStep>, TrainError> {
    derivation_with(program, target, grammar, |_| 0)
}

/// Derivation used for the loss under `policy`: leftmost holes, or a hole
/// drawn uniformly at every step under the any-hole policy when `rng` is
/// given.
pub fn policy_derivation(
    task: &TaskInstance,
    grammar: &Grammar,
    policy: Policy,
    rng: Option<&mut dyn rand::RngCore>,
) -> Result<Vec<GoldenStep>, TrainError> {
    let target = task.instance_ty();
    match (policy, rng) {
        (Policy::AnyHole, Some(rng)) => derivation_with(&task.program, &target, grammar, |h| rng.gen_range(0..h.len())),
        _ => golden_derivation(&task.program, &target, grammar),
    }
}

/// Mean teacher-forced cross-entropy over `steps` and its gradients.
#[derive(Clone, Debug)]
pub struct TaskLoss {
    pub loss: f64,
    pub step_losses: Vec<f64>,
    /// Steps whose golden probability fell below the floor.
    pub clipped: usize,
    pub grads: Option<Grads>,
}

pub fn steps_loss(model: &Model, task: &TaskInstance, steps: &[GoldenStep], with_grads: bool) -> Result<TaskLoss, TrainError> {
    let mut g = Graph::new(&model.params);
    let cond = model.encode_task(&mut g, task)?;
    let mut ctx = StepContext::new(cond);
    let mut nodes = Vec::with_capacity(steps.len());
    for s in steps {
        nodes.push(model.step_loss(&mut g, &mut ctx, &s.ppt, s.hole, s.rule)?);
    }
    let out = g.mean(&nodes);
    Ok(TaskLoss {
        loss: g.value(out)[0],
        step_losses: nodes.iter().map(|&n| g.value(n)[0]).collect(),
        clipped: g.clipped_losses(),
        grads: with_grads.then(|| g.backward(out)),
    })
}

/// Loss of `task` along its leftmost derivation.
pub fn task_loss(model: &Model, task: &TaskInstance) -> Result<f64, TrainError> {
    let steps = golden_derivation(&task.program, &task.instance_ty(), &model.grammar)?;
    Ok(steps_loss(model, task, &steps, false)?.loss)
}

/// Largest disagreement between analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Relative error with the denominator floored at `1e-6`, so coordinates
/// whose true gradient is zero are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares gradients of the teacher-forced loss along `steps` with central
/// differences of width `2 * step`, on at most `per_array` coordinates of
/// every parameter array (all of them when `None`).
pub fn gradient_check(
    model: &Model,
    task: &TaskInstance,
    steps: &[GoldenStep],
    step: f64,
    per_array: Option<usize>,
    rng: &mut impl Rng,
) -> Result<GradientCheck, TrainError> {
    let grads = steps_loss(model, task, steps, true)?.grads.expect("requested");
    let mut probe = model.clone();
    let mut out = GradientCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in 0..model.params.len() {
        let n = model.params.entry(id).len();
        let coords: Vec<usize> = match per_array {
            Some(k) if k < n => rand::seq::index::sample(rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = model.params.data(id)[i];
            probe.params.data_mut(id)[i] = orig + step;
            let up = steps_loss(&probe, task, steps, false)?.loss;
            probe.params.data_mut(id)[i] = orig - step;
            let down = steps_loss(&probe, task, steps, false)?.loss;
            probe.params.data_mut(id)[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let e = relative_error(grads.get(id)[i], numeric);
            out.checked += 1;
            if e > out.max_rel_error || out.worst.is_none() {
                out.max_rel_error = out.max_rel_error.max(e);
                out.worst = Some((model.params.entry(id).name.clone(), i));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradient coordinates are clipped to `[-clip, clip]`.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 1.0,
        }
    }
}

/// One bias-corrected Adam update of a single coordinate at step `t >= 1`.
pub fn adam_step(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, t: u64, c: &AdamConfig) {
    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
    let mhat = *m / (1.0 - c.beta1.powi(t as i32));
    let vhat = *v / (1.0 - c.beta2.powi(t as i32));
    *p -= c.lr * mhat / (vhat.sqrt() + c.eps);
}

pub fn clip(g: f64, bound: f64) -> f64 {
    g.clamp(-bound, bound)
}

/// Moment estimates aligned with a [`ParamStore`]. Stored values stay
/// f32-exact like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Adam {
        let z = params.zero_grads().data;
        Adam {
            step: 0,
            m: z.clone(),
            v: z,
        }
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &Grads, c: &AdamConfig) {
        self.step += 1;
        for id in 0..params.len() {
            let (ms, vs) = (&mut self.m[id], &mut self.v[id]);
            let ps = params.data_mut(id);
            for (i, &g) in grads.get(id).iter().enumerate() {
                let (mut p, mut m, mut v) = (ps[i], ms[i], vs[i]);
                adam_step(&mut p, &mut m, &mut v, clip(g, c.clip), self.step, c);
                ps[i] = round_f32(p);
                ms[i] = round_f32(m);
                vs[i] = round_f32(v);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub seed: u64,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    pub eval_every: usize,
    /// Evaluations per convergence window.
    pub window: usize,
    /// Programs sampled per task when measuring accuracy.
    pub eval_samples: usize,
    pub node_limit: usize,
    /// Encoder width override; the variant's default otherwise.
    pub hidden: Option<usize>,
    pub embedding: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Vanilla,
            seed: 0,
            adam: AdamConfig::default(),
            max_epochs: 1000,
            eval_every: 5,
            window: 2,
            eval_samples: 100,
            node_limit: 6,
            hidden: None,
            embedding: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        let a = &self.adam;
        if !(a.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) || !(a.clip > 0.0) {
            return bad("adam constants out of range");
        }
        if self.window == 0 || self.eval_every == 0 {
            return bad("window and eval_every must be at least 1");
        }
        if self.eval_samples == 0 || self.node_limit == 0 {
            return bad("eval_samples and node_limit must be at least 1");
        }
        if self.embedding == 0 || self.embedding % 2 != 0 {
            return bad("embedding width must be even and positive");
        }
        Ok(())
    }

    pub fn model_config(&self, ds: &Dataset) -> ModelConfig {
        let mut cfg = ModelConfig::for_dataset(self.variant, ds);
        if let Some(h) = self.hidden {
            cfg.h = h;
        }
        cfg.m = self.embedding;
        cfg
    }

    pub fn eval_config(&self, seed: u64) -> EvalConfig {
        EvalConfig {
            samples: self.eval_samples,
            node_limit: self.node_limit,
            seed,
            typed_random: false,
        }
    }
}

/// One metrics row: the training split's loss is the epoch mean, other
/// splits report their mean task loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy_at_20: f64,
    pub accuracy_at_n: f64,
    pub seconds: f64,
}

/// Column names for [`MetricRow::csv`]; accuracy columns are labelled with
/// the sample counts they were measured at.
pub fn metrics_header(samples: usize) -> String {
    format!("epoch,split,loss,accuracy@{},accuracy@{samples},seconds", 20.min(samples))
}

impl MetricRow {
    pub fn csv(&self) -> String {
        let split = match self.split {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        format!(
            "{},{},{:.6},{:.4},{:.4},{:.2}",
            self.epoch, split, self.loss, self.accuracy_at_20, self.accuracy_at_n, self.seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub clipped: usize,
}

/// Model and optimizer state between epochs.
pub struct Trainer<'d> {
    pub ds: &'d Dataset,
    pub cfg: TrainConfig,
    pub model: Model,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
}

impl<'d> Trainer<'d> {
    pub fn new(ds: &'d Dataset, cfg: TrainConfig) -> Result<Trainer<'d>, TrainError> {
        let model = Model::new(cfg.model_config(ds), cfg.seed)?;
        let adam = Adam::new(&model.params);
        Ok(Trainer {
            ds,
            cfg,
            model,
            adam,
            epoch: 0,
        })
    }

    /// Resumes from saved state; `model` must match the dataset.
    pub fn resume(ds: &'d Dataset, cfg: TrainConfig, model: Model, adam: Adam, epoch: usize) -> Result<Trainer<'d>, TrainError> {
        if let Some(why) = model.cfg.mismatch(ds) {
            return Err(TrainError::InvalidConfig(why));
        }
        Ok(Trainer {
            ds,
            cfg,
            model,
            adam,
            epoch,
        })
    }

    /// One pass over the training split in a seeded order, updating after
    /// every task.
    pub fn train_epoch(&mut self) -> Result<EpochStats, TrainError> {
        let epoch = self.epoch + 1;
        let tasks = &self.ds.train;
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        order.shuffle(&mut substream(self.cfg.seed, &format!("epoch/{epoch}")));
        let policy = self.model.cfg.variant.policy();
        let mut total = 0.0;
        let mut clipped = 0;
        for &i in &order {
            let task = &tasks[i];
            let mut rng = substream(self.cfg.seed, &format!("holes/{epoch}/{i}"));
            let steps = policy_derivation(task, &self.model.grammar, policy, Some(&mut rng))?;
            let out = steps_loss(&self.model, task, &steps, true)?;
            let grads = out.grads.expect("requested");
            if !out.loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    program: task.program.to_string(),
                });
            }
            self.adam.update(&mut self.model.params, &grads, &self.cfg.adam);
            total += out.loss;
            clipped += out.clipped;
        }
        self.epoch = epoch;
        Ok(EpochStats {
            epoch,
            loss: if tasks.is_empty() { 0.0 } else { total / tasks.len() as f64 },
            clipped,
        })
    }

    /// Mean leftmost-derivation loss over `tasks`.
    pub fn mean_loss(&self, tasks: &[TaskInstance]) -> Result<f64, TrainError> {
        if tasks.is_empty() {
            return Ok(f64::NAN);
        }
        let mut s = 0.0;
        for t in tasks {
            s += task_loss(&self.model, t)?;
        }
        Ok(s / tasks.len() as f64)
    }

    /// Accuracy at 20 samples and at `eval_samples` on `tasks`.
    pub fn accuracy(&self, tasks: &[TaskInstance], label: &str) -> Result<(f64, f64), TrainError> {
        if tasks.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        let synth = Synthesizer::for_model(&self.model)?;
        let seed = substream(self.cfg.seed, &format!("eval/{label}/{}", self.epoch)).gen();
        let refs: Vec<&TaskInstance> = tasks.iter().collect();
        let report = evaluate(&synth, &refs, &self.ds.ops, self.ds.gen_config.fuel, &self.cfg.eval_config(seed))?;
        let at = |n: usize| report.summary(n).map_or(f64::NAN, |s| s.mean);
        Ok((at(20.min(self.cfg.eval_samples)), at(self.cfg.eval_samples)))
    }
}

/// Result of a training run.
pub struct TrainOutcome<'d> {
    pub trainer: Trainer<'d>,
    /// Parameters at the best evaluation, or the final ones when no
    /// evaluation ran.
    pub best: ParamStore,
    pub best_epoch: usize,
    pub metrics: Vec<MetricRow>,
    pub converged: bool,
}

/// Trains until `max_epochs` or until the mean validation loss of the last
/// `window` evaluations exceeds that of the window before. The best
/// parameters maximize validation accuracy, or training accuracy when the
/// validation split is empty; ties keep the earlier epoch.
pub fn train<'d>(mut trainer: Trainer<'d>, mut on_row: impl FnMut(&Trainer<'d>, &MetricRow)) -> Result<TrainOutcome<'d>, TrainError> {
    trainer.cfg.validate()?;
    let start = Instant::now();
    let cfg = trainer.cfg.clone();
    let ds = trainer.ds;
    let mut metrics = Vec::new();
    let mut val_losses: Vec<f64> = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut converged = false;
    let mut epoch_losses = Vec::new();
    while trainer.epoch < cfg.max_epochs {
        let stats = trainer.train_epoch()?;
        epoch_losses.push(stats.loss);
        if stats.epoch % cfg.eval_every != 0 {
            continue;
        }
        let (tr20, trn) = trainer.accuracy(&ds.train, "train")?;
        let row = MetricRow {
            epoch: stats.epoch,
            split: Split::Train,
            loss: stats.loss,
            accuracy_at_20: tr20,
            accuracy_at_n: trn,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_row(&trainer, &row);
        metrics.push(row);
        let mut score = trn;
        if !ds.val.is_empty() {
            let vloss = trainer.mean_loss(&ds.val)?;
            if !vloss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch: stats.epoch,
                    program: "validation".into(),
                });
            }
            let (v20, vn) = trainer.accuracy(&ds.val, "val")?;
            let row = MetricRow {
                epoch: stats.epoch,
                split: Split::Val,
                loss: vloss,
                accuracy_at_20: v20,
                accuracy_at_n: vn,
                seconds: start.elapsed().as_secs_f64(),
            };
            on_row(&trainer, &row);
            metrics.push(row);
            val_losses.push(vloss);
            score = vn;
        }
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, stats.epoch, trainer.model.params.clone()));
        }
        if window_increased(&val_losses, cfg.window) {
            converged = true;
            break;
        }
    }
    let (best_epoch, best) = match best {
        Some((_, e, p)) => (e, p),
        None => (trainer.epoch, trainer.model.params.clone()),
    };
    Ok(TrainOutcome {
        trainer,
        best,
        best_epoch,
        metrics,
        converged,
    })
}

/// Did the mean of the last `w` values rise above the mean of the `w`
/// before them?
pub fn window_increased(xs: &[f64], w: usize) -> bool {
    if w == 0 || xs.len() < 2 * w {
        return false;
    }
    let n = xs.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    mean(&xs[n - w..]) > mean(&xs[n - 2 * w..n - w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy_dataset;
    use synth_core::lang::{parse_expr, OperatorSet};

    fn grammar() -> Grammar {
        Grammar::new(OperatorSet::from_names(&["and", "false", "just"]).unwrap())
    }

    #[test]
    fn derivations_follow_leftmost_holes() {
        let gr = grammar();
        let p = |s: &str| parse_expr(s, &gr.ops).unwrap();
        let steps = golden_derivation(&p("false"), &Ty::bool(), &gr).unwrap();
        assert_eq!(steps.len(), 1);
        let steps = golden_derivation(&p("and false"), &Ty::fun(Ty::bool(), Ty::bool()), &gr).unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(gr.rules[steps[0].rule].label(), "(and ?)");
        assert_eq!(gr.rules[steps[1].rule].label(), "false");
        let prog = p("and false false");
        let steps = golden_derivation(&prog, &Ty::bool(), &gr).unwrap();
        assert_eq!(steps.len(), prog.node_count());
        // replaying reconstructs the program; each step fills the leftmost hole
        let mut ppt = Ppt::root(Ty::bool());
        for s in &steps {
            assert_eq!(s.ppt, ppt);
            assert_eq!(s.hole, ppt.holes()[0]);
            ppt = fill_hole(&ppt, s.hole, &gr.rules[s.rule]).unwrap();
        }
        assert_eq!(ppt.expr, prog);
    }

    #[test]
    fn random_hole_order_reaches_the_same_program() {
        let gr = grammar();
        let prog = parse_expr("and (and false false) (and false false)", &gr.ops).unwrap();
        let mut rng = substream(3, "h");
        let steps = derivation_with(&prog, &Ty::bool(), &gr, |h| rng.gen_range(0..h.len())).unwrap();
        assert_eq!(steps.len(), 7);
        assert!(steps.iter().any(|s| s.hole != s.ppt.holes()[0]));
    }

    #[test]
    fn foreign_programs_are_underivable() {
        let gr = grammar();
        let other = OperatorSet::from_names(&["zero"]).unwrap();
        let prog = parse_expr("zero", &other).unwrap();
        assert!(matches!(golden_derivation(&prog, &Ty::int(), &gr), Err(TrainError::Underivable(_))));
    }

    #[test]
    fn adam_matches_reference_and_clips() {
        let c = AdamConfig::default();
        let (mut p, mut m, mut v) = (0.5, 0.0, 0.0);
        let gs = [0.3, -0.7, 0.2];
        // reference with explicitly accumulated moment sums
        let (mut rp, mut rm, mut rv) = (0.5f64, 0.0f64, 0.0f64);
        for (t, &g) in gs.iter().enumerate() {
            adam_step(&mut p, &mut m, &mut v, g, t as u64 + 1, &c);
            let t = t as i32 + 1;
            rm = 0.9 * rm + 0.1 * g;
            rv = 0.999 * rv + 0.001 * g * g;
            let step = 1e-2 * (rm / (1.0 - 0.9f64.powi(t))) / ((rv / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            rp -= step;
        }
        assert!((p - rp).abs() < 1e-10);
        assert_eq!(clip(3.7, 1.0), 1.0);
        assert_eq!(clip(-3.7, 1.0), -1.0);
        assert_eq!(clip(0.25, 1.0), 0.25);
    }

    #[test]
    fn convergence_window() {
        assert!(!window_increased(&[3.0, 2.0, 1.0], 2));
        assert!(!window_increased(&[4.0, 3.0, 2.0, 1.0], 2));
        assert!(window_increased(&[4.0, 1.0, 2.0, 4.0], 2));
        assert!(window_increased(&[1.0, 2.0], 1));
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            hidden: Some(3),
            embedding: 4,
            eval_samples: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let ds = toy_dataset();
        let mut cfg = tiny_cfg();
        cfg.adam.lr = 0.0;
        let mut tr = Trainer::new(&ds, cfg).unwrap();
        let before = tr.model.params.clone();
        for _ in 0..3 {
            tr.train_epoch().unwrap();
        }
        assert_eq!(tr.model.params, before);
        assert_eq!(tr.adam.step, 3 * ds.train.len() as u64);
    }

    #[test]
    fn task_loss_is_the_mean_of_replayed_steps() {
        let ds = toy_dataset();
        let tr = Trainer::new(&ds, tiny_cfg()).unwrap();
        let task = &ds.train[0];
        let steps = golden_derivation(&task.program, &task.instance_ty(), &tr.model.grammar).unwrap();
        let out = steps_loss(&tr.model, task, &steps, false).unwrap();
        // replay each step in its own graph
        let mut sum = 0.0;
        for s in &steps {
            let mut g = Graph::new(&tr.model.params);
            let c = tr.model.encode_task(&mut g, task).unwrap();
            let mut ctx = StepContext::new(c);
            let l = tr.model.step_loss(&mut g, &mut ctx, &s.ppt, s.hole, s.rule).unwrap();
            sum += g.value(l)[0];
        }
        assert!((out.loss - sum / steps.len() as f64).abs() < 1e-12);
        assert!((task_loss(&tr.model, task).unwrap() - out.loss).abs() < 1e-12);
        assert!(out.step_losses.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn training_reduces_loss_deterministically() {
        let ds = toy_dataset();
        let mut a = Trainer::new(&ds, tiny_cfg()).unwrap();
        let mut b = Trainer::new(&ds, tiny_cfg()).unwrap();
        let first = a.train_epoch().unwrap().loss;
        assert_eq!(first, b.train_epoch().unwrap().loss);
        let mut last = first;
        for _ in 0..15 {
            last = a.train_epoch().unwrap().loss;
        }
        assert!(last < first, "{last} >= {first}");
    }

    #[test]
    fn uniform_scores_give_log_k_loss() {
        let ds = toy_dataset();
        let mut tr = Trainer::new(&ds, tiny_cfg()).unwrap();
        let omega = tr.model.r3nn.omega;
        tr.model.params.data_mut(omega).iter_mut().for_each(|x| *x = 0.0);
        let task = &ds.train[1];
        let k = tr.model.n_rules() as f64;
        assert!((task_loss(&tr.model, task).unwrap() - k.ln()).abs() < 1e-12);
    }
}
