//! Command-line entry point. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::corpus::{
    convert_build, parse_corpus, parse_corpus_with_inventory, parse_splits, serialize_corpus,
    serialize_splits, split_corpus, Corpus, RoleInventory, Split,
};
use crate::difficulty::{
    rank_and_bucket, read_scores_csv, write_scores_csv, BucketAssignment, DifficultyScore,
    DifficultyScorer, Metric,
};
use crate::discourse::{load_expert_order, CanonicalOrder, TransitionMatrix};
use crate::error::Error;
use crate::label_curriculum::{
    parse_role_embeddings, similarity_from_confusion, similarity_from_embeddings, SimilarityExport,
    SimilaritySource, TargetMatrix,
};
use crate::labeler::{parse_sentence_embeddings, Checkpoint, Head, Labeler, SentenceEmbeddings};
use crate::orchestrator::{
    encode_documents, evaluate, grid_configs, run_grid, train, ConfusionExport, CurriculumInputs,
    HyperGrid, InputFile, Mode, RunManifest, StrategyConfig, RC_STEP_LIMIT,
};
use crate::pacing::{BabyStepSchedule, StagePlan};
use crate::synthetic::{generate, role_embeddings, SyntheticConfig};

pub const SEED_ENV: &str = "CULR_SEED";

#[derive(Debug, Parser)]
#[command(name = "culr", version, about = "Curriculum training for rhetorical role labeling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a corpus, validate it, optionally split it, and print statistics.
    Ingest(IngestArgs),
    /// Score training documents by discourse difficulty.
    Score(ScoreArgs),
    /// Bucket difficulty scores and print the baby-step stage plan.
    Buckets(BucketsArgs),
    /// Build a role similarity matrix and the initial soft-target matrix.
    Simmatrix(SimmatrixArgs),
    /// Train a labeler under a curriculum strategy.
    Train(TrainArgs),
    /// Evaluate a trained model on one split.
    Eval(EvalArgs),
    /// Export the gold-by-prediction confusion matrix of a trained model.
    Confusion(EvalArgs),
    /// Train every configuration of a hyperparameter grid.
    Sweep(SweepArgs),
    /// Generate a synthetic corpus with a planted role order.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    /// One `{"id","sentences","labels"}` record per line.
    Jsonl,
    /// Span-annotated export (JSON array or JSON lines).
    Build,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input file; tagged as the training split unless --split is given.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: InputFormat,
    /// Additional file tagged as validation.
    #[arg(long)]
    pub val_in: Option<PathBuf>,
    /// Additional file tagged as test.
    #[arg(long)]
    pub test_in: Option<PathBuf>,
    /// Role inventory, one name per line, in id order. Default: sorted observed labels.
    #[arg(long)]
    pub roles: Option<PathBuf>,
    /// Random train,val,test ratios, e.g. `0.8,0.1,0.1`.
    #[arg(long, conflicts_with_all = ["val_in", "test_in"])]
    pub split: Option<String>,
    /// Seed for --split (default: $CULR_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Normalized corpus JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Split assignment JSONL.
    #[arg(long)]
    pub splits_out: Option<PathBuf>,
    /// Write statistics here instead of stdout.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split assignment JSONL from `ingest` or `synth`. Without it every document is training data.
    #[arg(long)]
    pub splits: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    /// shifts | expert-inv | data-inv | neg-loglik
    #[arg(long)]
    pub metric: Metric,
    /// Expert role order, one role per line; required for expert-inv.
    #[arg(long)]
    pub expert_order: Option<PathBuf>,
    /// Transition smoothing.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Leave out the START transition in neg-loglik.
    #[arg(long)]
    pub no_start: bool,
    /// Score CSV `doc_id,metric,value`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the estimated transition matrix as JSON.
    #[arg(long)]
    pub transitions_out: Option<PathBuf>,
    /// JSON report with raw inversion counts and, with --num-buckets, the bucket assignment.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, requires = "report")]
    pub num_buckets: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ScoreReport<'a> {
    metric: Metric,
    scores: &'a [DifficultyScore],
    buckets: Option<BucketAssignment>,
}

#[derive(Debug, Args)]
pub struct BucketsArgs {
    /// Score CSV from `score`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub num_buckets: usize,
    #[arg(long, default_value_t = 2)]
    pub epochs_per_stage: usize,
    /// Stage plan JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimmatrixArgs {
    /// confusion | embedding
    #[arg(long)]
    pub source: SimilaritySource,
    /// Confusion JSON from `confusion`, or role embeddings `role<TAB>f1 f2 ...`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.9)]
    pub epsilon: f64,
    /// Corpus whose inventory fixes the role order.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training flags; each one overrides the matching field of --config.
#[derive(Debug, Args)]
pub struct StrategyArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    /// JSON strategy config; flags win over its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// baseline | dc | rc | hiculr (hierarchical) | reverse-hierarchical | seq-dc-rc | seq-rc-dc
    #[arg(long)]
    pub strategy: Option<Mode>,
    /// shifts | expert-inv | data-inv | neg-loglik
    #[arg(long)]
    pub dc_metric: Option<Metric>,
    /// confusion | embedding
    #[arg(long)]
    pub rc_source: Option<SimilaritySource>,
    #[arg(long)]
    pub num_buckets: Option<usize>,
    #[arg(long)]
    pub epochs_per_stage: Option<usize>,
    /// Length of each baby step in optimizer steps instead of epochs.
    #[arg(long)]
    pub stage_steps: Option<usize>,
    /// Target-matrix decay factor in (0, 1).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Initial off-diagonal target mass in [0, 1).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Epochs between target-matrix updates.
    #[arg(long)]
    pub rc_interval: Option<usize>,
    /// Cap on target-matrix updates per annealing cycle.
    #[arg(long)]
    pub max_rc_steps: Option<usize>,
    /// Minimum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Default: config file, then $CULR_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Transition smoothing for difficulty scoring.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Leave out the START transition in neg-loglik.
    #[arg(long)]
    pub no_start: bool,
    /// Reset optimizer moments whenever the active training set changes.
    #[arg(long)]
    pub reset_optimizer: bool,
    /// crf | softmax
    #[arg(long)]
    pub head: Option<Head>,
    #[arg(long)]
    pub hash_bits: Option<u32>,
    /// Add hashed token bigrams.
    #[arg(long)]
    pub bigrams: bool,
    /// Neighbouring sentences concatenated on each side.
    #[arg(long)]
    pub window: Option<usize>,
    /// Feature dropout on hashed n-grams.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Expert role order for expert-inv.
    #[arg(long)]
    pub expert_order: Option<PathBuf>,
    /// Confusion JSON from a random-order run (`culr confusion`).
    #[arg(long)]
    pub confusion: Option<PathBuf>,
    /// Role embeddings `role<TAB>f1 f2 ...`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Sentence embeddings `doc_id<TAB>index<TAB>f1 ... fd`.
    #[arg(long)]
    pub sentence_embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Output directory for model.json, metrics.json, epochs.jsonl, manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Grid JSON with any of lr, rc_interval, epsilon, num_buckets, epochs_per_stage. Default: built-in grid.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Stop after this many configurations.
    #[arg(long)]
    pub max_runs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model JSON from `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: CorpusArgs,
    /// train | val | test. Default: test for eval, val for confusion.
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub sentence_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long, default_value_t = 7)]
    pub roles: usize,
    /// Share of documents with fully shuffled role order.
    #[arg(long, default_value_t = 0.0)]
    pub shuffled_fraction: f64,
    /// Probability of moving a segment out of order.
    #[arg(long, default_value_t = 0.2)]
    pub order_noise: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub splits_out: PathBuf,
    /// Also write role embeddings matching the generator's vocabulary sharing.
    #[arg(long)]
    pub embeddings_out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `argv` (including the program name), runs the command, and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Score(a) => score(a),
        Command::Buckets(a) => buckets(a),
        Command::Simmatrix(a) => simmatrix(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a, false),
        Command::Confusion(a) => eval_cmd(a, true),
        Command::Sweep(a) => sweep(a),
        Command::Synth(a) => synth(a),
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn parse_ratios(text: &str) -> CliResult<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--split expects three numbers like 0.8,0.1,0.1, got `{text}`")))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(usage(format!("--split expects three ratios, got {}", parts.len()))),
    }
}

fn load_corpus(args: &CorpusArgs) -> Result<Corpus, Error> {
    let corpus = parse_corpus(&read(&args.corpus)?)?;
    match &args.splits {
        Some(p) => corpus.with_splits(&parse_splits(&read(p)?)?),
        None => Ok(corpus),
    }
}

fn ingest(a: IngestArgs) -> CliResult {
    let load = |path: &Path| -> Result<String, Error> {
        let text = read(path)?;
        match a.format {
            InputFormat::Jsonl => Ok(text),
            InputFormat::Build => convert_build(&text),
        }
    };
    let mut parts = vec![(load(&a.input)?, Split::Train)];
    if let Some(p) = &a.val_in {
        parts.push((load(p)?, Split::Val));
    }
    if let Some(p) = &a.test_in {
        parts.push((load(p)?, Split::Test));
    }
    let mut all = String::new();
    let mut tags = Vec::new();
    for (text, split) in &parts {
        // ids are read back from the combined corpus below
        let c = parse_corpus(text)?;
        tags.extend(c.documents().iter().map(|d| (d.id.clone(), *split)));
        all.push_str(text);
        if !text.ends_with('\n') {
            all.push('\n');
        }
    }
    let corpus = match &a.roles {
        Some(p) => {
            let names: Vec<String> = read(p)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            parse_corpus_with_inventory(&all, RoleInventory::new(names)?)?
        }
        None => parse_corpus(&all)?,
    };
    let mut corpus = corpus.with_splits(&tags)?;
    if let Some(r) = &a.split {
        corpus = split_corpus(corpus, parse_ratios(r)?, resolve_seed(a.seed)?)?;
    }
    write(&a.out, &serialize_corpus(&corpus)?)?;
    if let Some(p) = &a.splits_out {
        write(p, &serialize_splits(&corpus)?)?;
    }
    let stats = to_json(&corpus.stats())?;
    match &a.stats_out {
        Some(p) => write(p, &stats)?,
        None => print!("{stats}"),
    }
    Ok(())
}

fn expert_order(path: &Path, corpus: &Corpus) -> Result<CanonicalOrder, Error> {
    let inv = corpus.inventory();
    let freq = Corpus::role_frequencies(corpus.train_docs(), inv.len());
    load_expert_order(&read(path)?, inv, &freq)
}

fn score(a: ScoreArgs) -> CliResult {
    let corpus = load_corpus(&a.data)?;
    let inv = corpus.inventory();
    let train_docs = corpus.train_docs();
    let order = a.expert_order.as_deref().map(|p| expert_order(p, &corpus)).transpose()?;
    if a.metric == Metric::ExpertInversions && order.is_none() {
        return Err(usage("--metric expert-inv needs --expert-order"));
    }
    let scorer = DifficultyScorer::fit(a.metric, &train_docs, inv.len(), a.alpha, !a.no_start, order.as_ref())?;
    let scores = scorer.score_all(&train_docs)?;
    write(&a.out, &write_scores_csv(&scores)?)?;
    if let Some(p) = &a.transitions_out {
        let tm = TransitionMatrix::estimate(&train_docs, inv.len(), a.alpha)?;
        write(p, &to_json(&tm.export(inv))?)?;
    }
    if let Some(p) = &a.report {
        let buckets = match a.num_buckets {
            Some(0) => return Err(usage("--num-buckets must be >= 1")),
            Some(b) => Some(rank_and_bucket(&scores, b)?),
            None => None,
        };
        let report = ScoreReport {
            metric: a.metric,
            scores: &scores,
            buckets,
        };
        write(p, &to_json(&report)?)?;
    }
    Ok(())
}

fn buckets(a: BucketsArgs) -> CliResult {
    if a.num_buckets == 0 || a.epochs_per_stage == 0 {
        return Err(usage("--num-buckets and --epochs-per-stage must be >= 1"));
    }
    let scores = read_scores_csv(&read(&a.scores)?)?;
    let assignment = rank_and_bucket(&scores, a.num_buckets)?;
    let schedule = BabyStepSchedule::build(assignment, a.epochs_per_stage)?;
    write(&a.out, &to_json(&StagePlan::from(&schedule))?)?;
    Ok(())
}

fn simmatrix(a: SimmatrixArgs) -> CliResult {
    let text = read(&a.input)?;
    let given = a
        .corpus
        .as_deref()
        .map(|p| read(p).and_then(|t| parse_corpus(&t)))
        .transpose()?
        .map(|c| c.inventory().clone());
    let (inv, sim) = match a.source {
        SimilaritySource::Confusion => {
            let export: ConfusionExport = serde_json::from_str(&text).map_err(Error::from)?;
            let inv = match given {
                Some(i) => i,
                None => RoleInventory::new(export.roles.clone())?,
            };
            let m = export.aligned(&inv)?;
            (inv, similarity_from_confusion(&m)?)
        }
        SimilaritySource::Embedding => {
            let inv = match given {
                Some(i) => i,
                None => RoleInventory::new(
                    text.lines()
                        .filter(|l| !l.trim().is_empty())
                        .map(|l| l.split('\t').next().unwrap_or_default().trim().to_owned())
                        .collect(),
                )?,
            };
            let vectors = parse_role_embeddings(&text, &inv)?;
            (inv, similarity_from_embeddings(&vectors)?)
        }
    };
    let v = TargetMatrix::init(&sim, a.eta, a.epsilon).map_err(|e| match e {
        Error::InvalidArgument(m) => usage(m),
        other => other.into(),
    })?;
    let export = SimilarityExport {
        roles: inv.roles().to_vec(),
        source: sim.source,
        fallback: sim.fallback,
        similarity: sim.sim.clone(),
        eta: a.eta,
        epsilon: a.epsilon,
        initial_targets: v.rows().to_vec(),
        steps_to_identity: v.steps_to_identity(RC_STEP_LIMIT),
    };
    write(&a.out, &to_json(&export)?)?;
    Ok(())
}

/// Everything a training run reads, loaded once.
struct Prepared {
    corpus: Corpus,
    config: StrategyConfig,
    inputs: Vec<InputFile>,
    confusion: Option<Vec<Vec<u64>>>,
    role_embeddings: Option<Vec<Vec<f64>>>,
    expert_order: Option<CanonicalOrder>,
    sentence_embeddings: Option<SentenceEmbeddings>,
}

impl Prepared {
    fn curriculum_inputs(&self) -> CurriculumInputs<'_> {
        CurriculumInputs {
            confusion: self.confusion.as_deref(),
            role_embeddings: self.role_embeddings.as_deref(),
            expert_order: self.expert_order.as_ref(),
            sentence_embeddings: self.sentence_embeddings.as_ref(),
        }
    }
}

fn resolve_config(a: &StrategyArgs) -> CliResult<(StrategyConfig, Option<(PathBuf, String)>)> {
    let (mut cfg, file, seed_in_file) = match &a.config {
        Some(p) => {
            let text = read(p)?;
            let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
            let has_seed = value.get("seed").is_some();
            let cfg: StrategyConfig = serde_json::from_value(value)
                .map_err(|e| usage(format!("{}: {e}", p.display())))?;
            (cfg, Some((p.clone(), text)), has_seed)
        }
        None => (StrategyConfig::default(), None, false),
    };
    macro_rules! set {
        ($flag:expr => $($field:ident).+) => {
            if let Some(v) = $flag.clone() {
                cfg.$($field).+ = v;
            }
        };
    }
    set!(a.strategy => mode);
    set!(a.dc_metric => dc_metric);
    set!(a.rc_source => rc_source);
    set!(a.num_buckets => num_buckets);
    set!(a.epochs_per_stage => epochs_per_stage);
    set!(a.epsilon => epsilon);
    set!(a.eta => eta);
    set!(a.rc_interval => rc_interval);
    set!(a.epochs => total_epochs);
    set!(a.lr => lr);
    set!(a.batch_size => batch_size);
    set!(a.alpha => alpha);
    set!(a.head => labeler.head);
    set!(a.hash_bits => labeler.features.hash_bits);
    set!(a.window => labeler.features.window);
    set!(a.dropout => labeler.dropout);
    if a.stage_steps.is_some() {
        cfg.stage_steps = a.stage_steps;
    }
    if a.max_rc_steps.is_some() {
        cfg.max_rc_steps = a.max_rc_steps;
    }
    if a.no_start {
        cfg.include_start = false;
    }
    if a.reset_optimizer {
        cfg.reset_optimizer = true;
    }
    if a.bigrams {
        cfg.labeler.features.bigrams = true;
    }
    cfg.seed = match (a.seed, seed_in_file) {
        (Some(s), _) => s,
        (None, true) => cfg.seed,
        (None, false) => env_seed()?.unwrap_or(0),
    };
    Ok((cfg, file))
}

fn prepare(a: &StrategyArgs) -> CliResult<Prepared> {
    let (mut config, config_file) = resolve_config(a)?;
    let mut inputs = Vec::new();
    let mut record = |name: &str, path: &Path, text: &str| {
        inputs.push(InputFile::new(name, &path.to_string_lossy(), text.as_bytes()));
    };
    let corpus_text = read(&a.data.corpus)?;
    record("corpus", &a.data.corpus, &corpus_text);
    let mut corpus = parse_corpus(&corpus_text)?;
    if let Some(p) = &a.data.splits {
        let text = read(p)?;
        record("splits", p, &text);
        corpus = corpus.with_splits(&parse_splits(&text)?)?;
    }
    if corpus.docs_in(Split::Val).is_empty() {
        return Err(Error::InvalidArgument(
            "training needs validation documents; pass --splits from `ingest --split` or `synth`".into(),
        )
        .into());
    }
    if let Some((p, text)) = &config_file {
        record("config", p, text);
    }
    let inv = corpus.inventory().clone();

    let expert_order = match &a.expert_order {
        Some(p) => {
            let text = read(p)?;
            record("expert_order", p, &text);
            Some(expert_order(p, &corpus)?)
        }
        None => None,
    };
    let confusion = match &a.confusion {
        Some(p) => {
            let text = read(p)?;
            record("confusion", p, &text);
            let export: ConfusionExport = serde_json::from_str(&text).map_err(Error::from)?;
            Some(export.aligned(&inv)?)
        }
        None => None,
    };
    let role_embeddings = match &a.embeddings {
        Some(p) => {
            let text = read(p)?;
            record("role_embeddings", p, &text);
            Some(parse_role_embeddings(&text, &inv)?)
        }
        None => None,
    };
    let sentence_embeddings = match &a.sentence_embeddings {
        Some(p) => {
            let text = read(p)?;
            record("sentence_embeddings", p, &text);
            let (map, dim) = parse_sentence_embeddings(&text)?;
            config.labeler.features.embedding_dim = dim;
            Some(map)
        }
        None => None,
    };
    if config.mode.uses_dc() && config.dc_metric == Metric::ExpertInversions && expert_order.is_none() {
        return Err(usage("--dc-metric expert-inv needs --expert-order"));
    }
    let warnings = config.validate().map_err(|e| usage(e.to_string()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(Prepared {
        corpus,
        config,
        inputs,
        confusion,
        role_embeddings,
        expert_order,
        sentence_embeddings,
    })
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let prep = prepare(&a.strategy)?;
    let outcome = train(&prep.corpus, &prep.config, &prep.curriculum_inputs())?;
    let out = &a.out;
    write(&out.join("model.json"), &to_json(&outcome.model.to_checkpoint())?)?;
    write(&out.join("metrics.json"), &to_json(&outcome.report())?)?;
    let mut log = String::new();
    for e in &outcome.epochs {
        log.push_str(&serde_json::to_string(e).map_err(Error::from)?);
        log.push('\n');
    }
    write(&out.join("epochs.jsonl"), &log)?;
    let manifest = RunManifest::new(&prep.corpus, &prep.config, &outcome, prep.inputs.clone())?;
    write(&out.join("manifest.json"), &to_json(&manifest)?)?;
    if let Some(scores) = &outcome.scores {
        write(&out.join("scores.csv"), &write_scores_csv(scores)?)?;
    }
    if let Some(v) = &outcome.val {
        eprintln!(
            "best epoch {}: val macro-F1 {:.4}, micro-F1 {:.4}",
            outcome.best_epoch, v.macro_f1, v.micro_f1
        );
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs, confusion: bool) -> CliResult {
    let ckpt: Checkpoint = serde_json::from_str(&read(&a.model)?).map_err(Error::from)?;
    let model = Labeler::from_checkpoint(ckpt)?;
    let corpus = load_corpus(&a.data)?;
    let inv = RoleInventory::new(model.roles().to_vec())?;
    // re-map the corpus onto the model's role ids
    let corpus = parse_corpus_with_inventory(&serialize_corpus(&corpus)?, inv.clone())?
        .with_splits(
            &corpus
                .documents()
                .iter()
                .enumerate()
                .map(|(i, d)| (d.id.clone(), corpus.split_of(i)))
                .collect::<Vec<_>>(),
        )?;
    let split = a.split.unwrap_or(if confusion { Split::Val } else { Split::Test });
    let docs = corpus.docs_in(split);
    if docs.is_empty() {
        return Err(Error::InvalidArgument(format!("no documents in split `{split}`")).into());
    }
    let sent = a
        .sentence_embeddings
        .as_deref()
        .map(|p| read(p).and_then(|t| parse_sentence_embeddings(&t)).map(|(m, _)| m))
        .transpose()?;
    let x = encode_documents(model.encoder(), &docs, sent.as_ref())?;
    let refs: Vec<_> = x.iter().map(Vec::as_slice).collect();
    let metrics = evaluate(&model, &docs, &refs, &inv)?;
    let text = if confusion {
        to_json(&ConfusionExport {
            roles: inv.roles().to_vec(),
            matrix: metrics.confusion,
        })?
    } else {
        to_json(&metrics)?
    };
    write(&a.out, &text)?;
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult {
    let prep = prepare(&a.strategy)?;
    let grid: HyperGrid = match &a.grid {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => HyperGrid::default(),
    };
    let mut configs = grid_configs(&prep.config, &grid);
    if let Some(n) = a.max_runs {
        configs.truncate(n);
    }
    for c in &configs {
        c.validate().map_err(|e| usage(e.to_string()))?;
    }
    let results = run_grid(&prep.corpus, &configs, &prep.curriculum_inputs())?;
    write(&a.out, &to_json(&results)?)?;
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult {
    let cfg = SyntheticConfig {
        num_docs: a.docs,
        num_roles: a.roles,
        shuffled_fraction: a.shuffled_fraction,
        order_noise: a.order_noise,
        seed: resolve_seed(a.seed)?,
        ..SyntheticConfig::default()
    };
    let corpus = generate(&cfg).map_err(|e| match e {
        Error::InvalidArgument(m) => usage(m),
        other => other.into(),
    })?;
    write(&a.out, &serialize_corpus(&corpus)?)?;
    write(&a.splits_out, &serialize_splits(&corpus)?)?;
    if let Some(p) = &a.embeddings_out {
        let mut text = String::new();
        for (role, v) in corpus.inventory().roles().iter().zip(role_embeddings(&cfg)) {
            let nums: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            text.push_str(&format!("{role}\t{}\n", nums.join(" ")));
        }
        write(p, &text)?;
    }
    print!("{}", to_json(&corpus.stats())?);
    Ok(())
}
