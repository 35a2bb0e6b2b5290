//! Subcommands behind the `typed-synth` binary. Every command is a function
//! of its files on disk, its flags and its seed; only the timestamps in
//! run manifests and the `seconds` metric column vary between runs.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use synth_core::datagen::{generate_dataset, Dataset, DatagenError, GenConfig, Split, TaskInstance};
use synth_neural::checkpoint::{Checkpoint, CheckpointError};
use synth_neural::eval::{
    csv_field, evaluate, p_value_matrix, summarize_runs, EvalConfig, EvalReport, Synthesizer, VariantSummary,
};
use synth_neural::model::{ModelError, Variant};
use synth_neural::r3nn::Grammar;
use synth_neural::train::{train, TrainConfig, TrainError, Trainer, metrics_header};

pub const DATASET_FILE: &str = "dataset.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Missing { path: PathBuf, message: String },
    #[error("checkpoint does not fit the dataset: {0}")]
    Mismatch(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Missing { .. } | CliError::Mismatch(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(m) => CliError::Config(m),
            e @ TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
            e => CliError::Failed(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { path, source } => CliError::Missing {
                path,
                message: source.to_string(),
            },
            CheckpointError::Layout | CheckpointError::Size { .. } => CliError::Mismatch(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Failed(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Missing {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Parses a JSON config whose missing fields take defaults; unknown fields
/// are rejected so typos do not pass silently.
pub fn load_config<T: Default + Serialize + DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_file(path)?;
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let known = serde_json::to_value(T::default()).expect("serializable");
    if let (Some(obj), Some(known)) = (value.as_object(), known.as_object()) {
        if let Some(k) = obj.keys().find(|k| !known.contains_key(*k)) {
            return Err(bad(format!("unknown field `{k}`")));
        }
    }
    serde_json::from_value(value).map_err(|e| bad(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Digest over every file below `dir`: relative path, length and bytes,
/// in sorted path order.
pub fn tree_hash(dir: &Path) -> Result<String, CliError> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(base, &p, out)?;
            } else {
                out.push(p.strip_prefix(base).expect("below base").to_path_buf());
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files).map_err(|e| CliError::Missing {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        let bytes = fs::read(dir.join(&rel)).map_err(|e| CliError::Failed(e.to_string()))?;
        let name = rel.to_string_lossy().replace('\\', "/");
        h.update(format!("{name}\0{}\0", bytes.len()).as_bytes());
        h.update(&bytes);
    }
    Ok(format!("{:x}", h.finalize()))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Provenance of one command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub dataset: Option<String>,
    pub dataset_digest: Option<String>,
    pub checkpoint_hash: Option<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> RunManifest {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            seeds,
            dataset: None,
            dataset_digest: None,
            checkpoint_hash: None,
            started_unix: unix_now(),
            finished_unix: 0,
        }
    }

    fn write(mut self, dir: &Path) -> Result<(), CliError> {
        self.finished_unix = unix_now();
        write_file(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self).expect("serializable"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "typed-synth", about = "Typed neural program synthesis experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a dataset of task functions with examples.
    Generate(GenerateArgs),
    /// Train a synthesizer on a dataset.
    Train(TrainArgs),
    /// Sample programs for a dataset split and score them.
    Evaluate(EvaluateArgs),
    /// Aggregate evaluation reports across seeds and variants.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// JSON generation config; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Vanilla,
    Large,
    Typed,
    TypedMask,
    Anyhole,
    Random,
    Oracle,
}

impl VariantArg {
    pub fn model(self) -> Option<Variant> {
        match self {
            VariantArg::Vanilla => Some(Variant::Vanilla),
            VariantArg::Large => Some(Variant::Large),
            VariantArg::Typed => Some(Variant::Typed),
            VariantArg::TypedMask => Some(Variant::TypedMask),
            VariantArg::Anyhole => Some(Variant::Anyhole),
            VariantArg::Random | VariantArg::Oracle => None,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory or JSON file.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training config; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Samples per task for periodic accuracy.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Continue from the `last` checkpoint of an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Checkpoint directory; not needed for `random` and `oracle`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Synthesizer; defaults to the checkpoint's variant.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 6)]
    pub node_limit: usize,
    /// Restrict the random baseline to expansions that type-check.
    #[arg(long)]
    pub typed_random: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Report directories or `report.json` files.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

pub fn dataset_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(DATASET_FILE)
    } else {
        p.to_path_buf()
    }
}

/// The dataset and the SHA-256 of its file.
pub fn load_dataset(p: &Path) -> Result<(Dataset, String), CliError> {
    let path = dataset_path(p);
    let text = read_file(&path)?;
    let ds = Dataset::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((ds, sha256_hex(text.as_bytes())))
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    let mut cfg: GenConfig = match &a.config {
        Some(p) => load_config(p)?,
        None => GenConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut man = RunManifest::new("generate", serde_json::to_value(&cfg).expect("serializable"), vec![cfg.seed]);
    let ds = generate_dataset(&cfg).map_err(|e| match e {
        DatagenError::InvalidConfig(m) => CliError::Config(m),
        e => CliError::Failed(e.to_string()),
    })?;
    let text = ds.to_json();
    write_file(&a.out.join(DATASET_FILE), &text)?;
    man.dataset_digest = Some(sha256_hex(text.as_bytes()));
    man.write(&a.out)?;
    eprintln!(
        "generated {} tasks ({} train, {} val, {} test) into {}",
        ds.train.len() + ds.val.len() + ds.test.len(),
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let (ds, digest) = load_dataset(&a.dataset)?;
    let resumed = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    let mut cfg: TrainConfig = match (&a.config, &resumed) {
        (Some(p), _) => load_config(p)?,
        (None, Some(ck)) => ck.train.clone().unwrap_or_default(),
        (None, None) => TrainConfig::default(),
    };
    if let Some(v) = a.variant {
        cfg.variant = v
            .model()
            .ok_or_else(|| CliError::Config(format!("variant {v:?} is not trainable")))?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.max_epochs {
        cfg.max_epochs = n;
    }
    if let Some(n) = a.samples {
        cfg.eval_samples = n;
    }
    cfg.validate()?;
    let trainer = match resumed {
        Some(ck) => {
            if ck.model.cfg.variant != cfg.variant {
                return Err(CliError::Mismatch(format!(
                    "checkpoint variant {} differs from {}",
                    ck.model.cfg.variant.name(),
                    cfg.variant.name()
                )));
            }
            if let Some(why) = ck.model.cfg.mismatch(&ds) {
                return Err(CliError::Mismatch(why));
            }
            let adam = ck
                .adam
                .ok_or_else(|| CliError::Config("checkpoint has no optimizer state to resume from".into()))?;
            Trainer::resume(&ds, cfg.clone(), ck.model, adam, ck.epoch)?
        }
        None => Trainer::new(&ds, cfg.clone())?,
    };
    let mut man = RunManifest::new("train", serde_json::to_value(&cfg).expect("serializable"), vec![cfg.seed]);
    man.dataset = Some(dataset_path(&a.dataset).display().to_string());
    man.dataset_digest = Some(digest);

    fs::create_dir_all(&a.out).map_err(|e| CliError::Failed(format!("{}: {e}", a.out.display())))?;
    let metrics_path = a.out.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path).map_err(|e| CliError::Failed(format!("{}: {e}", metrics_path.display())))?;
    writeln!(metrics, "{}", metrics_header(cfg.eval_samples)).map_err(|e| CliError::Failed(e.to_string()))?;
    let outcome = train(trainer, |_, row| {
        // metrics are progress output; a failed write must not abort training
        let _ = writeln!(metrics, "{}", row.csv());
        let _ = metrics.flush();
        eprintln!(
            "epoch {:>4} {:<5} loss {:.4} acc@{} {:.3} acc@{} {:.3}",
            row.epoch,
            format!("{:?}", row.split).to_lowercase(),
            row.loss,
            20.min(cfg.eval_samples),
            row.accuracy_at_20,
            cfg.eval_samples,
            row.accuracy_at_n
        );
    })?;
    metrics.sync_all().map_err(|e| CliError::Failed(e.to_string()))?;

    let tr = &outcome.trainer;
    let last = Checkpoint {
        model: tr.model.clone(),
        epoch: tr.epoch,
        adam: Some(tr.adam.clone()),
        train: Some(cfg.clone()),
    };
    last.save(&a.out.join("last"))?;
    let mut best_model = tr.model.clone();
    best_model.params = outcome.best.clone();
    let best = Checkpoint {
        model: best_model,
        epoch: outcome.best_epoch,
        adam: None,
        train: Some(cfg.clone()),
    };
    let best_dir = a.out.join("best");
    best.save(&best_dir)?;
    man.checkpoint_hash = Some(tree_hash(&best_dir)?);
    man.write(&a.out)?;
    eprintln!(
        "trained {} epochs ({}), best epoch {}",
        tr.epoch,
        if outcome.converged { "validation loss rose" } else { "epoch limit" },
        outcome.best_epoch
    );
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let (ds, digest) = load_dataset(&a.dataset)?;
    if a.samples == 0 || a.node_limit == 0 {
        return Err(CliError::Config("samples and node limit must be at least 1".into()));
    }
    let cfg = EvalConfig {
        samples: a.samples,
        node_limit: a.node_limit,
        seed: a.seed,
        typed_random: a.typed_random,
    };
    let split: Split = a.split.into();
    let tasks: Vec<&TaskInstance> = ds.split(split).iter().collect();
    let fuel = ds.gen_config.fuel;
    let mut man = RunManifest::new("evaluate", serde_json::to_value(&cfg).expect("serializable"), vec![a.seed]);
    man.dataset = Some(dataset_path(&a.dataset).display().to_string());
    man.dataset_digest = Some(digest);

    let mut report = match a.variant {
        Some(VariantArg::Random) => {
            let synth = Synthesizer::Random {
                grammar: Grammar::new(ds.ops.clone()),
            };
            evaluate(&synth, &tasks, &ds.ops, fuel, &cfg)?
        }
        Some(VariantArg::Oracle) => {
            let synth = Synthesizer::Oracle {
                grammar: Grammar::new(ds.ops.clone()),
            };
            evaluate(&synth, &tasks, &ds.ops, fuel, &cfg)?
        }
        v => {
            let dir = a
                .checkpoint
                .as_deref()
                .ok_or_else(|| CliError::Config("--checkpoint is required for model variants".into()))?;
            let ck = Checkpoint::load(dir)?;
            if let Some(v) = v.and_then(VariantArg::model) {
                if v != ck.model.cfg.variant {
                    return Err(CliError::Mismatch(format!(
                        "checkpoint holds a {} model, not {}",
                        ck.model.cfg.variant.name(),
                        v.name()
                    )));
                }
            }
            if let Some(why) = ck.model.cfg.mismatch(&ds) {
                return Err(CliError::Mismatch(why));
            }
            man.checkpoint_hash = Some(tree_hash(dir)?);
            let synth = Synthesizer::for_model(&ck.model)?;
            evaluate(&synth, &tasks, &ds.ops, fuel, &cfg)?
        }
    };
    report.split = format!("{split:?}").to_lowercase();
    write_file(&a.out.join(REPORT_FILE), report.to_json())?;
    write_file(&a.out.join("report.csv"), report.to_csv())?;
    man.write(&a.out)?;
    for (n, s) in &report.summaries {
        eprintln!("{} @{n}: {}/{} = {:.3}", report.variant, s.successes, s.tasks, s.mean);
    }
    Ok(())
}

fn load_report(p: &Path) -> Result<EvalReport, CliError> {
    let path = if p.is_dir() { p.join(REPORT_FILE) } else { p.to_path_buf() };
    let text = read_file(&path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:.3}")
    }
}

/// One row per variant: mean, variance and per-node means at each sample
/// count.
pub fn summary_table(groups: &[VariantSummary]) -> String {
    let mut points: Vec<usize> = groups.iter().flat_map(|g| g.points.keys().copied()).collect();
    points.sort();
    points.dedup();
    let mut nodes: Vec<usize> = groups
        .iter()
        .flat_map(|g| g.points.values().flat_map(|a| a.by_nodes.keys().copied()))
        .collect();
    nodes.sort();
    nodes.dedup();
    let mut s = String::from("experiment,seeds");
    for n in &points {
        s.push_str(&format!(",mean@{n},var@{n}"));
        for k in &nodes {
            s.push_str(&format!(",nodes{k}@{n}"));
        }
    }
    s.push('\n');
    for g in groups {
        s.push_str(&format!("{},{}", csv_field(&g.variant), g.seeds.len()));
        for n in &points {
            match g.points.get(n) {
                Some(a) => {
                    s.push_str(&format!(",{},{}", fmt_num(a.mean), fmt_num(a.variance)));
                    for k in &nodes {
                        s.push_str(&format!(",{}", fmt_num(a.by_nodes.get(k).copied().unwrap_or(f64::NAN))));
                    }
                }
                None => s.push_str(&",NA".repeat(2 + nodes.len())),
            }
        }
        s.push('\n');
    }
    s
}

/// Square matrix of two-sided p-values, `NA` where a side has fewer than
/// two seeds.
pub fn p_value_csv(groups: &[VariantSummary], n: usize) -> String {
    let m = p_value_matrix(groups, n);
    let mut s = String::from("p-values");
    for g in groups {
        s.push_str(&format!(",{}", csv_field(&g.variant)));
    }
    s.push('\n');
    for (g, row) in groups.iter().zip(m) {
        s.push_str(&csv_field(&g.variant));
        for p in row {
            s.push_str(&format!(",{}", p.map_or("NA".into(), fmt_num)));
        }
        s.push('\n');
    }
    s
}

pub fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let reports = a.reports.iter().map(|p| load_report(p)).collect::<Result<Vec<_>, _>>()?;
    let groups = summarize_runs(&reports);
    write_file(&a.out.join("summary.csv"), summary_table(&groups))?;
    write_file(&a.out.join("summary.json"), serde_json::to_string_pretty(&groups).expect("serializable"))?;
    let mut points: Vec<usize> = groups.iter().flat_map(|g| g.points.keys().copied()).collect();
    points.sort();
    points.dedup();
    for n in points {
        write_file(&a.out.join(format!("pvalues@{n}.csv")), p_value_csv(&groups, n))?;
    }
    let seeds: Vec<u64> = reports.iter().map(|r| r.seed).collect();
    let inputs: Vec<String> = a.reports.iter().map(|p| p.display().to_string()).collect();
    RunManifest::new("compare", serde_json::json!({ "reports": inputs }), seeds).write(&a.out)?;
    Ok(())
}
