//! Command-line driver.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::aspects::{load_catalog, score_aspect, AspectCatalog, AspectError, AspectResources, CatalogError};
use crate::corpus_stats::{build_iwf_from_reader, CorpusMode, IwfTable, StatsError};
use crate::exec::Exec;
use crate::metaeval::{
    self, correlate, evaluator_subsample_report, krippendorff_alpha, model_drift_report,
    perturb_negative, quality_drift_report, read_jsonl, EvalSetRecord, InstanceRecord,
    MeasurementLevel, MetaError, PerturbStrategy, ScoreLine, SortKey,
};
use crate::scorer::{protocol, BackendSpec, MockScorer, RemoteOptions, Scorer, ScorerError};
use crate::types::Aspect;

pub const SCORER_ENV: &str = "CTRLEVAL_SCORER";
const TOOL: &str = "ctrleval";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Data(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("{failed} of {total} records failed to score")]
    ScoringFailures { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ScoringFailures { .. } => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Data(_) => 3,
            CliError::Transport(_) => 4,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<ScorerError> for CliError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::Config(m) => CliError::Usage(m),
            e if e.is_transport() => CliError::Transport(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

fn meta_err(path: &Path) -> impl Fn(MetaError) -> CliError + '_ {
    move |e| match e {
        MetaError::Io(source) => CliError::io(path, source),
        e => CliError::Data(format!("{}: {e}", path.display())),
    }
}

fn stats_err(path: &Path) -> impl Fn(StatsError) -> CliError + '_ {
    move |e| match e {
        StatsError::Io(source) => CliError::io(path, source),
        e => CliError::Data(format!("{}: {e}", path.display())),
    }
}

fn catalog_err(path: &Path) -> impl Fn(CatalogError) -> CliError + '_ {
    move |e| match e {
        CatalogError::Io(source) => CliError::io(path, source),
        e => CliError::Data(format!("{}: {e}", path.display())),
    }
}

#[derive(Debug, Parser)]
#[command(name = "ctrleval", version, about = "Score attribute-controlled generations without references")]
pub struct Cli {
    /// Run every batch on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count sentence frequencies of a corpus into an IWF table.
    BuildIwf(BuildIwfArgs),
    /// Score generated texts on one or more aspects.
    Score(ScoreArgs),
    /// Correlate metric scores with mean human ratings.
    Correlate(CorrelateArgs),
    /// Per-model or quality-biased correlation analysis.
    Drift(DriftArgs),
    /// Inter-annotator agreement (Krippendorff's alpha).
    Alpha(AlphaArgs),
    /// Build negative samples by shuffling or dropping sentences.
    Perturb(PerturbArgs),
    /// Correlation spread when scoring with random subsets of evaluators.
    Subsample(SubsampleArgs),
    /// Serve the mock scorer over stdin/stdout.
    MockSidecar(MockSidecarArgs),
}

#[derive(Debug, Args)]
pub struct BuildIwfArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Treat each line as one sentence instead of segmenting documents.
    #[arg(long)]
    pub per_line_sentences: bool,
    /// Write JSON instead of the binary table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Aspects to score, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub aspect: Vec<Aspect>,
    #[arg(long)]
    pub input: PathBuf,
    /// Backend spec, e.g. mock:42 or remote:host:port. The CTRLEVAL_SCORER
    /// environment variable takes precedence.
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long)]
    pub iwf: Option<PathBuf>,
    /// Catalog file, or builtin:sentiment / builtin:topic.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum backend requests in flight.
    #[arg(long, default_value_t = 8)]
    pub concurrency: usize,
    /// Per-request timeout in seconds for remote backends.
    #[arg(long, default_value_t = 120)]
    pub timeout: u64,
    /// Abort on the first failed record.
    #[arg(long)]
    pub strict: bool,
    /// Drop an unterminated final sentence before scoring.
    #[arg(long)]
    pub trim_incomplete_last_sentence: bool,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub aspect: Aspect,
    /// Correlate only the ids present in both files.
    #[arg(long)]
    pub allow_missing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DriftMode {
    Model,
    Quality,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    #[arg(long, value_enum)]
    pub mode: DriftMode,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub aspect: Aspect,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Quartiles by metric score or by mean human rating.
    #[arg(long, default_value = "metric")]
    pub sort_by: SortKey,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub aspect: Aspect,
    #[arg(long, default_value = "interval")]
    pub level: MeasurementLevel,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub strategy: PerturbStrategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SubsampleArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub scorer: Option<String>,
    /// Subset sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub concurrency: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockSidecarArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Whitespace-separated vocabulary file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Serialize)]
struct Header<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: Value,
    seeds: Value,
}

fn header(command: &str, config: Value, seeds: Value) -> Value {
    json!({ "header": Header { tool: TOOL, version: VERSION, command, config, seeds } })
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Write a pretty JSON report to `out`, or stdout.
fn emit_json(out: Option<&Path>, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    match out {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))
        }
        None => {
            let mut w = std::io::stdout().lock();
            match writeln!(w, "{text}").and_then(|_| w.flush()) {
                // a closed reader (e.g. `| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(Path::new("<stdout>"), e)),
                _ => Ok(()),
            }
        }
    }
}

/// The backend spec from the environment, else from the flag.
pub fn resolve_scorer(flag: Option<&str>) -> Result<BackendSpec, CliError> {
    let from_env = std::env::var(SCORER_ENV).ok().filter(|s| !s.trim().is_empty());
    let spec = from_env
        .as_deref()
        .or(flag)
        .ok_or_else(|| CliError::Usage(format!("no scorer given (use --scorer or {SCORER_ENV})")))?;
    spec.parse::<BackendSpec>().map_err(CliError::from)
}

fn seed_of(spec: &BackendSpec) -> Value {
    match spec {
        BackendSpec::Mock { seed, .. } => json!(seed),
        _ => Value::Null,
    }
}

/// Load a binary or JSON IWF table.
pub fn load_iwf(path: &Path) -> Result<IwfTable, CliError> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| CliError::io(path, e))?;
    let table = if bytes.first() == Some(&b'{') {
        let v: Value = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        IwfTable::from_json(v)
    } else {
        IwfTable::read_from(bytes.as_slice())
    };
    table.map_err(stats_err(path))
}

fn read_records(path: &Path) -> Result<Vec<InstanceRecord>, CliError> {
    read_jsonl(open(path)?).map_err(meta_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IwfSummary {
    pub corpus_sentences: u64,
    pub vocab_size: usize,
}

pub fn cmd_build_iwf(args: &BuildIwfArgs, exec: Exec) -> Result<IwfSummary, CliError> {
    let mode = if args.per_line_sentences {
        CorpusMode::SentencePerLine
    } else {
        CorpusMode::Documents
    };
    let table = build_iwf_from_reader(open(&args.corpus)?, mode, exec).map_err(stats_err(&args.corpus))?;
    let mut w = create(&args.out)?;
    if args.json {
        let mut v = table.to_json();
        let config = json!({ "corpus": args.corpus, "per_line_sentences": args.per_line_sentences });
        v["header"] = header("build-iwf", config, Value::Null)["header"].take();
        serde_json::to_writer(&mut w, &v).map_err(io::Error::from).map_err(|e| CliError::io(&args.out, e))?;
    } else {
        table.write_to(&mut w).map_err(|e| CliError::io(&args.out, e))?;
    }
    w.flush().map_err(|e| CliError::io(&args.out, e))?;
    Ok(IwfSummary {
        corpus_sentences: table.corpus_sentence_count(),
        vocab_size: table.vocab_size(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreSummary {
    pub records: usize,
    pub written: usize,
    pub failed: usize,
}

/// Score every record and aspect of `args.input`, writing records in input
/// order. Per-record failures are logged and counted unless `strict`.
pub fn cmd_score(args: &ScoreArgs, exec: Exec) -> Result<ScoreSummary, CliError> {
    let spec = resolve_scorer(args.scorer.as_deref())?;
    let needs_iwf = args.aspect.iter().any(|a| *a != Aspect::AttributeRelevance);
    let needs_catalog = args.aspect.contains(&Aspect::AttributeRelevance);
    let iwf = match (&args.iwf, needs_iwf) {
        (Some(p), true) => Some(load_iwf(p)?),
        (None, true) => return Err(CliError::Usage("coherence and consistency need --iwf".into())),
        _ => None,
    };
    let catalog: Option<AspectCatalog> = match (&args.catalog, needs_catalog) {
        (Some(p), true) => Some(load_catalog(p).map_err(catalog_err(p))?),
        (None, true) => return Err(CliError::Usage("attr_rel needs --catalog".into())),
        _ => None,
    };
    let records = read_records(&args.input)?;

    let opts = RemoteOptions {
        timeout: Duration::from_secs(args.timeout.max(1)),
        window: args.concurrency.max(1),
    };
    let backend: Arc<dyn Scorer> = spec.connect(opts)?;
    let resources = AspectResources { iwf: iwf.as_ref(), catalog: catalog.as_ref() };

    let results: Vec<Result<Vec<ScoreLine>, (String, CliError, bool)>> = exec.with_threads(args.concurrency, || {
        exec.map(&records, |_, rec| {
            let inst = if args.trim_incomplete_last_sentence {
                rec.instance_trimmed()
            } else {
                rec.instance()
            }
            .map_err(|e| (rec.id.clone(), CliError::Data(e.to_string()), false))?;
            args.aspect
                .iter()
                .map(|&aspect| {
                    score_aspect(aspect, &inst, resources, backend.as_ref(), exec)
                        .map(|s| ScoreLine { id: rec.id.clone(), aspect, score: s.value, parts: s.parts })
                        .map_err(|e| classify(&rec.id, aspect, e))
                })
                .collect()
        })
    });

    let config = json!({
        "aspects": args.aspect,
        "input": args.input,
        "scorer": spec.to_string(),
        "model": backend.model_name(),
        "iwf": args.iwf,
        "catalog": args.catalog,
        "trim_incomplete_last_sentence": args.trim_incomplete_last_sentence,
        "strict": args.strict,
    });
    let mut w = create(&args.out)?;
    let wr = |e| CliError::io(&args.out, e);
    writeln!(w, "{}", header("score", config, json!({ "scorer": seed_of(&spec) }))).map_err(wr)?;

    let mut summary = ScoreSummary { records: records.len(), written: 0, failed: 0 };
    for r in results {
        match r {
            Ok(lines) => {
                for l in lines {
                    serde_json::to_writer(&mut w, &l).map_err(io::Error::from).map_err(wr)?;
                    w.write_all(b"\n").map_err(wr)?;
                    summary.written += 1;
                }
            }
            Err((id, e, fatal)) => {
                if args.strict || fatal {
                    w.flush().map_err(wr)?;
                    return Err(match e {
                        CliError::Transport(_) => e,
                        e if args.strict => {
                            log::error!("record {id}: {e}");
                            CliError::ScoringFailures { failed: 1, total: records.len() }
                        }
                        e => e,
                    });
                }
                log::warn!("record {id}: {e}");
                summary.failed += 1;
            }
        }
    }
    w.flush().map_err(wr)?;
    if summary.failed > 0 {
        return Err(CliError::ScoringFailures { failed: summary.failed, total: summary.records });
    }
    Ok(summary)
}

/// Map an aspect error to (id, error, fatal). A lost connection is fatal;
/// everything else only fails the record.
fn classify(id: &str, aspect: Aspect, e: AspectError) -> (String, CliError, bool) {
    let fatal = e.scorer_error().is_some_and(|s| s.is_transport() && !s.is_retriable());
    let err = if fatal {
        CliError::Transport(e.to_string())
    } else {
        CliError::Data(format!("{aspect}: {e}"))
    };
    (id.to_string(), err, fatal)
}

/// Metric scores for `aspect` keyed by id.
fn read_scores(path: &Path, aspect: Aspect) -> Result<HashMap<String, f64>, CliError> {
    let lines: Vec<ScoreLine> = read_jsonl(open(path)?).map_err(meta_err(path))?;
    let mut out = HashMap::new();
    for l in lines.into_iter().filter(|l| l.aspect == aspect) {
        if out.insert(l.id.clone(), l.score).is_some() {
            return Err(CliError::Data(format!("{}: duplicate score for {}", path.display(), l.id)));
        }
    }
    Ok(out)
}

pub fn cmd_correlate(args: &CorrelateArgs) -> Result<metaeval::CorrelationReport, CliError> {
    let scores = read_scores(&args.scores, args.aspect)?;
    let records = read_records(&args.ratings)?;
    let mut missing: Vec<String> = records.iter().filter(|r| !scores.contains_key(&r.id)).map(|r| r.id.clone()).collect();
    let rated: std::collections::HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut unrated: Vec<String> = scores.keys().filter(|id| !rated.contains(id.as_str())).cloned().collect();
    unrated.sort();
    missing.extend(unrated);
    if !missing.is_empty() && !args.allow_missing {
        return Err(CliError::Data(MetaError::MissingIds(missing).to_string()));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in records.iter().filter(|r| scores.contains_key(&r.id)) {
        xs.push(scores[&r.id]);
        ys.push(r.mean_rating(args.aspect).map_err(meta_err(&args.ratings))?);
    }
    let report = correlate(args.aspect, &xs, &ys).map_err(|e| CliError::Data(e.to_string()))?;
    let config = json!({ "scores": args.scores, "ratings": args.ratings, "aspect": args.aspect, "allow_missing": args.allow_missing });
    let mut v = header("correlate", config, Value::Null);
    v["report"] = serde_json::to_value(&report).unwrap();
    emit_json(args.out.as_deref(), &v)?;
    Ok(report)
}

fn eval_set(path: &Path, aspect: Aspect) -> Result<Vec<EvalSetRecord>, CliError> {
    read_records(path)?
        .iter()
        .map(|r| EvalSetRecord::from_record(r, &[aspect]).map_err(meta_err(path)))
        .collect()
}

pub fn cmd_drift(args: &DriftArgs) -> Result<Value, CliError> {
    let scores = read_scores(&args.scores, args.aspect)?;
    let records = eval_set(&args.ratings, args.aspect)?;
    let data = |e: MetaError| CliError::Data(e.to_string());
    let (report, seeds) = match args.mode {
        DriftMode::Model => (
            serde_json::to_value(model_drift_report(&records, &scores, args.aspect).map_err(data)?).unwrap(),
            Value::Null,
        ),
        DriftMode::Quality => (
            serde_json::to_value(
                quality_drift_report(&records, &scores, args.aspect, args.sort_by, args.seed).map_err(data)?,
            )
            .unwrap(),
            json!({ "subsets": args.seed }),
        ),
    };
    let mode = match args.mode {
        DriftMode::Model => "model",
        DriftMode::Quality => "quality",
    };
    let config = json!({
        "mode": mode,
        "scores": args.scores,
        "ratings": args.ratings,
        "aspect": args.aspect,
        "sort_by": args.sort_by,
    });
    let mut v = header("drift", config, seeds);
    v["report"] = report;
    emit_json(args.out.as_deref(), &v)?;
    Ok(v)
}

pub fn cmd_alpha(args: &AlphaArgs) -> Result<f64, CliError> {
    let records = read_records(&args.ratings)?;
    let units: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.ratings_for(args.aspect).map(|v| v.into_iter().map(f64::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(meta_err(&args.ratings))?;
    let alpha = krippendorff_alpha(&units, args.level).map_err(|e| CliError::Data(e.to_string()))?;
    let config = json!({ "ratings": args.ratings, "aspect": args.aspect, "level": args.level });
    let mut v = header("alpha", config, Value::Null);
    v["report"] = json!({ "aspect": args.aspect, "level": args.level, "alpha": alpha, "items": units.len() });
    emit_json(args.out.as_deref(), &v)?;
    Ok(alpha)
}

/// Per-record seed derived from the run seed and the record's position.
pub fn record_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn cmd_perturb(args: &PerturbArgs) -> Result<usize, CliError> {
    let records = read_records(&args.input)?;
    let mut w = create(&args.out)?;
    let wr = |e| CliError::io(&args.out, e);
    let config = json!({ "input": args.input, "strategy": args.strategy });
    writeln!(w, "{}", header("perturb", config, json!({ "perturb": args.seed }))).map_err(wr)?;
    let mut written = 0;
    for (i, rec) in records.iter().enumerate() {
        let inst = rec.instance().map_err(meta_err(&args.input))?;
        match perturb_negative(&inst, args.strategy, record_seed(args.seed, i)) {
            Ok(p) => {
                let out = InstanceRecord {
                    id: format!("{}-{}", rec.id, args.strategy),
                    prefix: rec.prefix.clone(),
                    label: rec.label.clone(),
                    text: p.generated_text().to_string(),
                    model: rec.model.clone(),
                    ratings: Default::default(),
                };
                serde_json::to_writer(&mut w, &out).map_err(io::Error::from).map_err(wr)?;
                w.write_all(b"\n").map_err(wr)?;
                written += 1;
            }
            Err(MetaError::TooShort) => log::warn!("record {}: too short to perturb, skipped", rec.id),
            Err(e) => return Err(CliError::Data(format!("record {}: {e}", rec.id))),
        }
    }
    w.flush().map_err(wr)?;
    Ok(written)
}

pub fn cmd_subsample(args: &SubsampleArgs, exec: Exec) -> Result<metaeval::SubsampleReport, CliError> {
    let spec = resolve_scorer(args.scorer.as_deref())?;
    let catalog = load_catalog(&args.catalog).map_err(catalog_err(&args.catalog))?;
    let records = eval_set(&args.ratings, Aspect::AttributeRelevance)?;
    let opts = RemoteOptions { window: args.concurrency.max(1), ..RemoteOptions::default() };
    let backend = spec.connect(opts)?;
    let report = exec
        .with_threads(args.concurrency, || {
            evaluator_subsample_report(&catalog, &records, backend.as_ref(), &args.k, args.trials, args.seed, exec)
        })
        .map_err(|e| match e {
            MetaError::Aspect { ref source, .. } if source.scorer_error().is_some_and(|s| s.is_transport()) => {
                CliError::Transport(e.to_string())
            }
            e => CliError::Data(e.to_string()),
        })?;
    let config = json!({
        "ratings": args.ratings,
        "catalog": args.catalog,
        "scorer": spec.to_string(),
        "model": backend.model_name(),
        "k": args.k,
        "trials": args.trials,
    });
    let mut v = header("subsample", config, json!({ "subsample": args.seed, "scorer": seed_of(&spec) }));
    v["report"] = serde_json::to_value(&report).unwrap();
    emit_json(args.out.as_deref(), &v)?;
    Ok(report)
}

pub fn cmd_mock_sidecar(args: &MockSidecarArgs, input: impl BufRead, output: impl Write) -> Result<usize, CliError> {
    let mock = match &args.vocab {
        Some(p) => {
            let mut text = String::new();
            open(p)?.read_to_string(&mut text).map_err(|e| CliError::io(p, e))?;
            MockScorer::new(args.seed, text.split_whitespace())?
        }
        None => MockScorer::with_default_vocab(args.seed),
    };
    protocol::serve(&mock, input, output).map_err(|e| CliError::Transport(e.to_string()))
}

/// Run a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match &cli.command {
        Command::BuildIwf(a) => {
            let s = cmd_build_iwf(a, exec)?;
            println!("corpus sentences: {}, vocabulary: {}", s.corpus_sentences, s.vocab_size);
        }
        Command::Score(a) => {
            let s = cmd_score(a, exec)?;
            eprintln!("scored {} records ({} lines written)", s.records, s.written);
        }
        Command::Correlate(a) => {
            cmd_correlate(a)?;
        }
        Command::Drift(a) => {
            cmd_drift(a)?;
        }
        Command::Alpha(a) => {
            cmd_alpha(a)?;
        }
        Command::Perturb(a) => {
            let n = cmd_perturb(a)?;
            eprintln!("wrote {n} perturbed records");
        }
        Command::Subsample(a) => {
            cmd_subsample(a, exec)?;
        }
        Command::MockSidecar(a) => {
            let stdin = io::stdin();
            cmd_mock_sidecar(a, stdin.lock(), io::stdout().lock())?;
        }
    }
    Ok(())
}
