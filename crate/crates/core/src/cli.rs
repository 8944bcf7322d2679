//! The `latent-verifier` command line: `synth`, `train`, `eval`, `baseline`.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Every failure prints
//! exactly one line `error: <Class>: <message>` to stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::inference::{
    cot_decoding_select, evaluate, greedy_select, majority_vote, select_answer, Method, Metrics, PredictionRecord,
    SelectionResult, Strategy,
};
use crate::io::{read_checkpoint, read_dataset, write_atomic, write_checkpoint, write_dataset, DatasetManifest};
use crate::synthetic::{generate, SyntheticSpec};
use crate::trainer::{train, train_supervised, TrainedVerifier};
use crate::types::{InterVariant, NormalizationMode, QuestionInstance, TrainConfig};

pub const OUT_DIR_ENV: &str = "LATENT_VERIFIER_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "latent-verifier", version, about = "Unsupervised activation-based answer verifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic planted-truth dataset.
    Synth(SynthArgs),
    /// Train a verifier on a dataset.
    Train(TrainArgs),
    /// Score a dataset with a trained verifier and report accuracy.
    Eval(EvalArgs),
    /// Report accuracy of a selection baseline that needs no verifier.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SynthArgs {
    #[command(flatten)]
    pub out: OutDir,
    /// TOML file with synthetic spec fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub questions: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub truth_norm: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub offset_norm: Option<f64>,
    #[arg(long)]
    pub min_groups: Option<usize>,
    #[arg(long)]
    pub max_groups: Option<usize>,
    #[arg(long)]
    pub balanced: bool,
    #[arg(long)]
    pub minority_rate: Option<f64>,
    #[arg(long)]
    pub confidence_signal: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct TrainArgs {
    #[command(flatten)]
    pub out: OutDir,
    /// Dataset directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// TOML file with training config fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train on gold labels with BCE instead of the consistency losses.
    #[arg(long)]
    pub supervised: bool,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_questions: Option<usize>,
    #[arg(long)]
    pub w_nega: Option<f64>,
    #[arg(long)]
    pub w_intra: Option<f64>,
    #[arg(long)]
    pub w_inter: Option<f64>,
    #[arg(long, value_enum)]
    pub inter_variant: Option<InterVariantArg>,
    /// Drop the entropy term from the soft inter-group loss.
    #[arg(long)]
    pub no_entropy: bool,
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationArg>,
    #[arg(long)]
    pub hidden1: Option<usize>,
    #[arg(long)]
    pub hidden2: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum InterVariantArg {
    SoftProb,
    TNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum NormalizationArg {
    None,
    PerTemplateCenterScale,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Voting,
    CotMax,
    CotSum,
    Greedy,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub out: OutDir,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Group-score strategies to report.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Strategy::Sum, Strategy::Max])]
    pub strategy: Vec<Strategy>,
    /// Baselines to report alongside the verifier.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub baseline: Vec<BaselineKind>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub out: OutDir,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub which: Vec<BaselineKind>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Domain(_) => EXIT_DOMAIN,
        }
    }

    pub fn line(&self) -> String {
        let (class, msg) = match self {
            CliError::Usage(m) => ("Usage", m.clone()),
            CliError::Domain(e) => (e.class(), e.to_string()),
        };
        format!("error: {class}: {}", msg.replace('\n', " "))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.line());
            return err.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            print!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

/// Run one subcommand and return its human-readable summary.
pub fn execute(command: Command) -> CliResult<String> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Baseline(a) => cmd_baseline(&a),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Domain(Error::io(path, e)))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("in-memory serialization cannot fail");
    bytes.push(b'\n');
    Ok(write_atomic(path, &bytes)?)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> CliResult<()> {
    let mut bytes = Vec::new();
    for r in records {
        bytes.extend(serde_json::to_vec(r).expect("in-memory serialization cannot fail"));
        bytes.push(b'\n');
    }
    Ok(write_atomic(path, &bytes)?)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Domain(Error::io(dir, e)))
}

pub fn resolve_synth_spec(a: &SynthArgs) -> CliResult<SyntheticSpec> {
    let mut spec: SyntheticSpec = match &a.config {
        Some(p) => read_toml(p)?,
        None => SyntheticSpec::default(),
    };
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(a.dim => spec.dim);
    set!(a.questions => spec.questions);
    set!(a.paths => spec.paths);
    set!(a.truth_norm => spec.truth_direction_norm);
    set!(a.noise_std => spec.noise_std);
    set!(a.offset_norm => spec.template_offset_norm);
    set!(a.min_groups => spec.groups.min_groups);
    set!(a.max_groups => spec.groups.max_groups);
    set!(a.minority_rate => spec.minority_correct_rate);
    set!(a.confidence_signal => spec.confidence_signal);
    set!(a.seed => spec.rng_seed);
    if a.balanced {
        spec.groups.balanced = true;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

pub fn resolve_train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(a.lr => cfg.learning_rate);
    set!(a.weight_decay => cfg.weight_decay);
    set!(a.max_steps => cfg.max_steps);
    set!(a.batch_questions => cfg.batch_questions);
    set!(a.w_nega => cfg.w_nega);
    set!(a.w_intra => cfg.w_intra);
    set!(a.w_inter => cfg.w_inter);
    set!(a.hidden1 => cfg.hidden1);
    set!(a.hidden2 => cfg.hidden2);
    set!(a.seed => cfg.rng_seed);
    if let Some(v) = a.inter_variant {
        cfg.inter_variant = match v {
            InterVariantArg::SoftProb => InterVariant::SoftProb,
            InterVariantArg::TNorm => InterVariant::TNorm,
        };
    }
    if let Some(n) = a.normalization {
        cfg.normalization = match n {
            NormalizationArg::None => NormalizationMode::None,
            NormalizationArg::PerTemplateCenterScale => NormalizationMode::PerTemplateCenterScale,
        };
    }
    if a.no_entropy {
        cfg.inter_entropy = false;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<String> {
    let spec = resolve_synth_spec(a)?;
    let data = generate(&spec)?;
    let mut manifest = DatasetManifest::for_instances(&data, "synthetic")?;
    manifest.creation.insert("generator".into(), "synthetic".into());
    manifest.creation.insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
    manifest.creation.insert(
        "spec".into(),
        serde_json::to_value(&spec).expect("in-memory serialization cannot fail"),
    );
    let dir = &a.out.out_dir;
    ensure_dir(dir)?;
    write_dataset(dir, &data, &manifest)?;
    write_json(&dir.join("synth_config.json"), &spec)?;
    Ok(format!(
        "wrote {} questions ({} pairs, d={}) to {}\n",
        data.len(),
        manifest.pair_count,
        manifest.feature_dim,
        dir.display()
    ))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    supervised: bool,
    steps: usize,
    seed: u64,
    wall_clock_secs: f64,
    first_loss: Option<f64>,
    final_loss: Option<f64>,
    config: &'a TrainConfig,
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<String> {
    let cfg = resolve_train_config(a)?;
    let (data, _) = read_dataset(&a.dataset)?;
    let report = if a.supervised {
        train_supervised(&data, &cfg)?
    } else {
        train(&data, &cfg)?
    };
    let dir = &a.out.out_dir;
    ensure_dir(dir)?;
    write_json(&dir.join("train_config.json"), &cfg)?;
    write_checkpoint(&dir.join("checkpoint.bin"), &report.verifier, Some(&report.optimizer))?;
    write_jsonl(&dir.join("train_log.jsonl"), &report.losses)?;
    let summary = TrainSummary {
        supervised: a.supervised,
        steps: report.losses.len(),
        seed: report.seed,
        wall_clock_secs: report.wall_clock_secs,
        first_loss: report.losses.first().map(|l| l.total),
        final_loss: report.losses.last().map(|l| l.total),
        config: &cfg,
    };
    write_json(&dir.join("train_summary.json"), &summary)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    Ok(format!(
        "trained {} steps on {} questions: loss {} -> {}; checkpoint {}\n",
        report.losses.len(),
        data.len(),
        fmt(summary.first_loss),
        fmt(summary.final_loss),
        dir.join("checkpoint.bin").display()
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Selector {
    Verifier(Strategy),
    Baseline(BaselineKind),
}

impl Selector {
    fn method(&self) -> Method {
        match self {
            Selector::Verifier(s) => Method::verifier(*s),
            Selector::Baseline(BaselineKind::Voting) => Method::Voting,
            Selector::Baseline(BaselineKind::CotMax) => Method::CotMax,
            Selector::Baseline(BaselineKind::CotSum) => Method::CotSum,
            Selector::Baseline(BaselineKind::Greedy) => Method::Greedy,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: PathBuf,
    pub questions: usize,
    pub labeled_questions: usize,
    pub methods: Vec<MethodMetrics>,
}

fn select_one(
    q: &QuestionInstance,
    verifier: Option<&TrainedVerifier>,
    selectors: &[Selector],
) -> crate::Result<Vec<SelectionResult>> {
    let scores = match verifier {
        Some(v) if selectors.iter().any(|s| matches!(s, Selector::Verifier(_))) => Some(v.score(q)?),
        _ => None,
    };
    selectors
        .iter()
        .map(|s| match s {
            Selector::Verifier(st) => select_answer(scores.as_deref().unwrap_or_default(), q, *st),
            Selector::Baseline(BaselineKind::Voting) => Ok(majority_vote(q)),
            Selector::Baseline(BaselineKind::CotMax) => cot_decoding_select(q, Strategy::Max),
            Selector::Baseline(BaselineKind::CotSum) => cot_decoding_select(q, Strategy::Sum),
            Selector::Baseline(BaselineKind::Greedy) => Ok(greedy_select(q)),
        })
        .collect()
}

fn run_selection(
    dataset_path: &Path,
    out_dir: &Path,
    verifier: Option<&TrainedVerifier>,
    selectors: &[Selector],
    workers: usize,
) -> CliResult<String> {
    if workers == 0 {
        return Err(CliError::Usage("--workers must be >= 1".into()));
    }
    let (mut data, _) = read_dataset(dataset_path)?;
    data.sort_by(|a, b| a.question_id().cmp(b.question_id()));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let per_question: Vec<Vec<SelectionResult>> = pool.install(|| {
        data.par_iter()
            .map(|q| select_one(q, verifier, selectors))
            .collect::<crate::Result<_>>()
    })?;

    let mut records = Vec::with_capacity(data.len() * selectors.len());
    for (q, results) in data.iter().zip(&per_question) {
        for r in results {
            records.push(PredictionRecord::new(r, q.gold_answer()));
        }
    }
    let methods: Vec<MethodMetrics> = selectors
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let labeled: Vec<(SelectionResult, String)> = data
                .iter()
                .zip(&per_question)
                .filter_map(|(q, rs)| q.gold_answer().map(|g| (rs[k].clone(), g.to_string())))
                .collect();
            MethodMetrics {
                method: s.method(),
                metrics: evaluate(&labeled),
            }
        })
        .collect();
    let report = EvalReport {
        dataset: dataset_path.to_path_buf(),
        questions: data.len(),
        labeled_questions: data.iter().filter(|q| q.gold_answer().is_some()).count(),
        methods,
    };

    ensure_dir(out_dir)?;
    write_jsonl(&out_dir.join("predictions.jsonl"), &records)?;
    write_json(&out_dir.join("metrics.json"), &report)?;

    let mut text = format!(
        "{} questions ({} with gold answers)\n{:<14} {:>9} {:>9}\n",
        report.questions, report.labeled_questions, "method", "accuracy", "P@N"
    );
    for m in &report.methods {
        let _ = writeln!(text, "{:<14} {:>9.4} {:>9.4}", m.method.name(), m.metrics.accuracy, m.metrics.p_at_n);
    }
    Ok(text)
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<String> {
    let (verifier, _) = read_checkpoint(&a.checkpoint)?;
    let mut selectors: Vec<Selector> = a.strategy.iter().map(|s| Selector::Verifier(*s)).collect();
    selectors.extend(a.baseline.iter().map(|b| Selector::Baseline(*b)));
    run_selection(&a.dataset, &a.out.out_dir, Some(&verifier), &selectors, a.workers)
}

pub fn cmd_baseline(a: &BaselineArgs) -> CliResult<String> {
    let selectors: Vec<Selector> = a.which.iter().map(|b| Selector::Baseline(*b)).collect();
    run_selection(&a.dataset, &a.out.out_dir, None, &selectors, a.workers)
}
