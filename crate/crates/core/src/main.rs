use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use typocorpus::atomic::{frequency_table, render_visible};
use typocorpus::classifier::{
    cross_validate, train_with_report, TrainConfig, WeightsFile, DEFAULT_FOLDS, DEFAULT_SEED,
};
use typocorpus::extract::{discover_git_repos, discover_log_files, RepoSource};
use typocorpus::harvest::{harvest, normalize_event_kind};
use typocorpus::langid::{load_profiles, save_profiles, train_profiles};
use typocorpus::lm::{CharLangModel, ModelSet, DEFAULT_ORDER};
use typocorpus::metrics::{
    corpus_stats, escape_tsv, parse_gold_tsv, parse_system_tsv, precision_recall_fbeta,
    render_table, score_system, ConfusionCounts,
};
use typocorpus::model::TYPO_THRESHOLD;
use typocorpus::pipeline::{
    annotations_to_examples, classify_stage, extract_stage, featurize_stage, langfilter_stage,
    parse_annotations, parse_time_bound, read_corpus, read_repos, restrict_to_eligible,
    write_atomically, write_records, write_repos, ConfigFile, Manifest,
};
use typocorpus::Error;

/// Build a corpus of typo-fixing edits from commit histories.
#[derive(Debug, Parser)]
#[command(name = "typocorpus", version, about)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for cross-validation shuffles.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only log errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select eligible repositories from activity-event dumps.
    Harvest(HarvestArgs),
    /// Extract typo-commit edits from repositories or saved history dumps.
    Extract(ExtractArgs),
    /// Drop code and mixed-language edits, tagging the rest with a language.
    Langfilter(LangfilterArgs),
    /// Attach perplexity ratio, edit distance and numeric-change features.
    Featurize(FeaturizeArgs),
    /// Fit classifier weights on annotated edits.
    TrainClassifier(TrainClassifierArgs),
    /// Label featurized edits with typo probabilities.
    Classify(ClassifyArgs),
    /// Cross-validate the classifier on annotated edits.
    Cv(CvArgs),
    /// Most frequent atomic edits per language.
    AtomicStats(AtomicStatsArgs),
    /// Per-language corpus statistics.
    Stats(StatsArgs),
    /// Score a correction system against gold edits.
    Eval(EvalArgs),
    /// Train character language models.
    TrainLm(TrainLmArgs),
    /// Train language-identification profiles.
    TrainLangid(TrainLangidArgs),
    /// Run extract, langfilter, featurize and classify in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Table,
    Tsv,
}

#[derive(Debug, Args)]
struct HarvestArgs {
    /// Event dump files (glob patterns allowed; repeatable).
    #[arg(long = "dump")]
    dumps: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_stars: Option<u64>,
    /// Minimum repository size in bytes.
    #[arg(long)]
    min_size: Option<u64>,
    /// Maximum repository size in bytes.
    #[arg(long)]
    max_size: Option<u64>,
    /// Allowed license id (repeatable; replaces the default list).
    #[arg(long = "license")]
    licenses: Vec<String>,
    /// Required event kind (repeatable; replaces the default list).
    #[arg(long = "event-kind")]
    event_kinds: Vec<String>,
    /// RFC 3339 timestamp or YYYY-MM-DD.
    #[arg(long)]
    window_start: Option<String>,
    /// RFC 3339 timestamp or YYYY-MM-DD (whole day included).
    #[arg(long)]
    window_end: Option<String>,
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// A git repository, a directory of repositories, or a file listing them.
    #[arg(long, conflicts_with = "diff_dir")]
    repos: Option<PathBuf>,
    /// Directory of saved `git log -p` dumps laid out as <owner>/<name>.log.
    #[arg(long)]
    diff_dir: Option<PathBuf>,
    /// Only process repositories listed in this harvest output.
    #[arg(long)]
    eligible: Option<PathBuf>,
    #[arg(long)]
    max_edits: Option<usize>,
    #[arg(long)]
    keyword: Option<String>,
    /// Match the keyword case-sensitively.
    #[arg(long)]
    case_sensitive: bool,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    code_threshold: Option<f64>,
    #[arg(long)]
    min_confidence: Option<f64>,
}

#[derive(Debug, Args)]
struct LangfilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Debug, Args)]
struct FeaturizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Directory of <lang>.lm files.
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnnotationArgs {
    /// TSV of src, tgt, category.
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    models: Option<PathBuf>,
    /// Language model to featurize the annotations with.
    #[arg(long, default_value = "eng")]
    lang: String,
}

#[derive(Debug, Args)]
struct TrainClassifierArgs {
    #[command(flatten)]
    data: AnnotationArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    data: AnnotationArgs,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AtomicStatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 30)]
    top: usize,
    /// Count only edits labelled as typos.
    #[arg(long)]
    typo_only: bool,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Also write the TSV report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    system: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainLmArgs {
    /// LANG=PATH training text (repeatable).
    #[arg(long = "corpus", value_parser = parse_lang_path, required = true)]
    corpora: Vec<(String, PathBuf)>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
}

#[derive(Debug, Args)]
struct TrainLangidArgs {
    /// LANG=PATH training text (repeatable).
    #[arg(long = "corpus", value_parser = parse_lang_path, required = true)]
    corpora: Vec<(String, PathBuf)>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    filter: FilterArgs,
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_lang_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((lang, path)) if !lang.is_empty() && !path.is_empty() => {
            Ok((lang.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected LANG=PATH, got {s:?}")),
    }
}

/// A problem with how the command was invoked (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Ctx {
    file: ConfigFile,
    seed: u64,
}

fn pick<T>(flag: Option<T>, file: Option<T>, name: &str) -> anyhow::Result<T> {
    flag.or(file).ok_or_else(|| {
        usage(format!(
            "missing --{name} (not given on the command line or in the config file)"
        ))
    })
}

fn require_exists(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            io::Error::new(io::ErrorKind::NotFound, "no such file or directory"),
        )
        .into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Info
        })
        .format_timestamp(None)
        .format_target(false)
        .parse_env("TYPOCORPUS_LOG")
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain joined with ": ", skipping causes already spelled out by
/// the message before them.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return err.exit_code() as u8;
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return 3;
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => {
            require_exists(p)?;
            ConfigFile::load(p)?
        }
        None => ConfigFile::default(),
    };
    if let Some(n) = cli.workers.or(file.workers) {
        if n == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        file,
    };
    match cli.command {
        Command::Harvest(a) => cmd_harvest(&ctx, a),
        Command::Extract(a) => cmd_extract(&ctx, a),
        Command::Langfilter(a) => cmd_langfilter(&ctx, a),
        Command::Featurize(a) => cmd_featurize(&ctx, a),
        Command::TrainClassifier(a) => cmd_train_classifier(&ctx, a),
        Command::Classify(a) => cmd_classify(&ctx, a),
        Command::Cv(a) => cmd_cv(&ctx, a),
        Command::AtomicStats(a) => cmd_atomic_stats(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Eval(a) => cmd_eval(a),
        Command::TrainLm(a) => cmd_train_lm(a),
        Command::TrainLangid(a) => cmd_train_langid(a),
        Command::Pipeline(a) => cmd_pipeline(&ctx, a),
    }
}

fn expand_dumps(patterns: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for pat in patterns {
        let matches: Vec<PathBuf> = glob::glob(pat)
            .map_err(|e| usage(format!("bad --dump pattern {pat:?}: {e}")))?
            .collect::<Result<_, _>>()
            .context("expanding --dump pattern")?;
        if matches.is_empty() {
            require_exists(Path::new(pat))?;
            out.push(PathBuf::from(pat));
        }
        out.extend(matches);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn cmd_harvest(ctx: &Ctx, a: HarvestArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    let patterns = if a.dumps.is_empty() {
        ctx.file.paths.dumps.clone()
    } else {
        a.dumps
    };
    if patterns.is_empty() {
        return Err(usage("missing --dump"));
    }
    let dumps = expand_dumps(&patterns)?;
    let mut cfg = ctx.file.eligibility()?;
    if let Some(v) = a.min_stars {
        cfg.min_stars = v;
    }
    if let Some(v) = a.min_size {
        cfg.min_size_bytes = v;
    }
    if let Some(v) = a.max_size {
        cfg.max_size_bytes = v;
    }
    if !a.licenses.is_empty() {
        cfg.allowed_licenses = a.licenses.iter().map(|l| l.to_lowercase()).collect();
    }
    if !a.event_kinds.is_empty() {
        cfg.required_event_kinds = a
            .event_kinds
            .iter()
            .map(|k| normalize_event_kind(k))
            .collect();
    }
    if let Some(v) = &a.window_start {
        cfg.window_start = parse_time_bound(v, false)?;
    }
    if let Some(v) = &a.window_end {
        cfg.window_end = parse_time_bound(v, true)?;
    }
    let outcome = harvest(&dumps, &cfg)?;
    write_repos(&a.out, &outcome.repos)?;

    let mut m = Manifest::new("harvest", serde_json::to_value(&cfg)?, started);
    for d in &dumps {
        m.input(d)?;
    }
    m.count("events", outcome.events as u64)
        .count("malformed_events", outcome.malformed as u64)
        .count("eligible_repos", outcome.repos.len() as u64);
    m.write(&a.out)?;
    log::info!(
        "{} events ({} malformed) -> {} eligible repositories",
        outcome.events,
        outcome.malformed,
        outcome.repos.len()
    );
    Ok(())
}

struct ResolvedSources {
    sources: Vec<RepoSource>,
    inputs: Vec<PathBuf>,
    config: typocorpus::extract::ExtractConfig,
}

fn resolve_sources(ctx: &Ctx, a: &SourceArgs) -> anyhow::Result<ResolvedSources> {
    let paths = &ctx.file.paths;
    let (repos, diff_dir) = match (&a.repos, &a.diff_dir) {
        (None, None) => (paths.repos.clone(), paths.diff_dir.clone()),
        (r, d) => (r.clone(), d.clone()),
    };
    let mut inputs = Vec::new();
    let mut sources = match (repos, diff_dir) {
        (Some(r), None) => {
            require_exists(&r)?;
            inputs.push(r.clone());
            discover_git_repos(&r)?
        }
        (None, Some(d)) => {
            require_exists(&d)?;
            inputs.push(d.clone());
            discover_log_files(&d)?
        }
        (Some(_), Some(_)) => return Err(usage("give either --repos or --diff-dir, not both")),
        (None, None) => return Err(usage("missing --repos or --diff-dir")),
    };
    if let Some(el) = a.eligible.clone().or_else(|| paths.eligible.clone()) {
        require_exists(&el)?;
        let eligible = read_repos(&el)?;
        sources = restrict_to_eligible(sources, &eligible);
        inputs.push(el);
    }
    let mut config = ctx.file.extract_config();
    if let Some(v) = a.max_edits {
        config.max_edits = v;
    }
    if let Some(v) = &a.keyword {
        config.keyword = v.clone();
    }
    if a.case_sensitive {
        config.case_sensitive = true;
    }
    config.validate()?;
    Ok(ResolvedSources {
        sources,
        inputs,
        config,
    })
}

fn extract_config_json(cfg: &typocorpus::extract::ExtractConfig) -> serde_json::Value {
    json!({
        "keyword": cfg.keyword,
        "case_sensitive": cfg.case_sensitive,
        "max_edits": cfg.max_edits,
        "max_line_chars": cfg.max_line_chars,
    })
}

fn cmd_extract(ctx: &Ctx, a: ExtractArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    let src = resolve_sources(ctx, &a.source)?;
    let (records, counts) = extract_stage(&src.sources, &src.config)?;
    write_records(&a.out, &records)?;
    let mut m = Manifest::new("extract", extract_config_json(&src.config), started);
    for p in &src.inputs {
        m.input(p)?;
    }
    m.counts_from("", &counts).write(&a.out)?;
    log::info!(
        "{} repositories ({} failed) -> {} records, {} edits",
        counts.repos,
        counts.failed_repos,
        counts.records,
        counts.edits
    );
    Ok(())
}

fn filter_setup(
    ctx: &Ctx,
    a: &FilterArgs,
) -> anyhow::Result<(
    PathBuf,
    Vec<typocorpus::langid::LangProfile>,
    typocorpus::langid::FilterConfig,
)> {
    let dir = pick(
        a.profiles.clone(),
        ctx.file.paths.profiles.clone(),
        "profiles",
    )?;
    require_exists(&dir)?;
    let profiles = load_profiles(&dir)?;
    let mut cfg = ctx.file.filter_config();
    if let Some(v) = a.code_threshold {
        cfg.code_threshold = v;
    }
    if let Some(v) = a.min_confidence {
        cfg.min_confidence = v;
    }
    Ok((dir, profiles, cfg))
}

fn cmd_langfilter(ctx: &Ctx, a: LangfilterArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    require_exists(&a.input)?;
    let (dir, profiles, cfg) = filter_setup(ctx, &a.filter)?;
    let records = read_corpus(&a.input)?;
    let (out, counts) = langfilter_stage(records, &profiles, &cfg);
    write_records(&a.out, &out)?;
    let mut m = Manifest::new("langfilter", serde_json::to_value(cfg)?, started);
    m.input(&a.input)?.input(&dir)?;
    m.counts_from("", &counts).write(&a.out)?;
    log::info!("kept {} of {} edits", counts.edits_out, counts.edits_in);
    Ok(())
}

fn load_models(ctx: &Ctx, flag: &Option<PathBuf>) -> anyhow::Result<(PathBuf, ModelSet)> {
    let dir = pick(flag.clone(), ctx.file.paths.models.clone(), "models")?;
    require_exists(&dir)?;
    let models = ModelSet::load_dir(&dir)?;
    if models.langs().next().is_none() {
        return Err(Error::data(format!("no *.lm models in {}", dir.display())).into());
    }
    Ok((dir, models))
}

fn cmd_featurize(ctx: &Ctx, a: FeaturizeArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    require_exists(&a.input)?;
    let (dir, models) = load_models(ctx, &a.models)?;
    let mut records = read_corpus(&a.input)?;
    let counts = featurize_stage(&mut records, &models)?;
    write_records(&a.out, &records)?;
    let langs: Vec<&str> = models.langs().collect();
    let mut m = Manifest::new("featurize", json!({ "languages": langs }), started);
    m.input(&a.input)?.input(&dir)?;
    m.counts_from("", &counts).write(&a.out)?;
    log::info!("featurized {} of {} edits", counts.featurized, counts.edits);
    Ok(())
}

fn load_examples(
    ctx: &Ctx,
    a: &AnnotationArgs,
) -> anyhow::Result<(PathBuf, Vec<typocorpus::classifier::LabeledExample>)> {
    require_exists(&a.annotations)?;
    let (dir, models) = load_models(ctx, &a.models)?;
    let text = fs::read_to_string(&a.annotations).map_err(|e| Error::io(&a.annotations, e))?;
    let rows = parse_annotations(&text)?;
    let examples = annotations_to_examples(&rows, &a.lang, &models)?;
    Ok((dir, examples))
}

fn cmd_train_classifier(ctx: &Ctx, a: TrainClassifierArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    let (dir, examples) = load_examples(ctx, &a.data)?;
    let cfg = TrainConfig {
        max_iter: a.max_iter,
        tol: a.tol,
    };
    let report = train_with_report(&examples, &cfg)?;
    let trained_on = a
        .data
        .annotations
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = WeightsFile::new(report.weights, trained_on, ctx.seed);
    let text = serde_json::to_string_pretty(&file)?;
    write_atomically(&a.out, |w| {
        writeln!(w, "{text}").map_err(|e| Error::io(&a.out, e))
    })?;
    let mut m = Manifest::new(
        "train-classifier",
        json!({ "lang": a.data.lang, "max_iter": cfg.max_iter, "tol": cfg.tol }),
        started,
    );
    m.input(&a.data.annotations)?.input(&dir)?;
    m.count("examples", examples.len() as u64)
        .count(
            "positives",
            examples.iter().filter(|e| e.label).count() as u64,
        )
        .count("iterations", report.iterations as u64)
        .count("converged", u64::from(report.converged));
    m.write(&a.out)?;
    log::info!(
        "trained on {} examples in {} iterations (mean loss {:.6})",
        examples.len(),
        report.iterations,
        report.loss
    );
    Ok(())
}

fn load_weights(path: &Path) -> anyhow::Result<WeightsFile> {
    require_exists(path)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let w: WeightsFile =
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    if !w.weights().is_finite() {
        return Err(Error::validation("weights", "must be finite").into());
    }
    Ok(w)
}

fn resolve_threshold(ctx: &Ctx, flag: Option<f64>) -> anyhow::Result<f64> {
    let t = flag
        .or(ctx.file.classify.threshold)
        .unwrap_or(TYPO_THRESHOLD);
    if !(0.0..=1.0).contains(&t) {
        return Err(usage("--threshold must be in [0, 1]"));
    }
    Ok(t)
}

fn cmd_classify(ctx: &Ctx, a: ClassifyArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    require_exists(&a.input)?;
    let wpath = pick(a.weights.clone(), ctx.file.paths.weights.clone(), "weights")?;
    let weights = load_weights(&wpath)?;
    let threshold = resolve_threshold(ctx, a.threshold)?;
    let mut records = read_corpus(&a.input)?;
    let stats = classify_stage(&mut records, &weights.weights(), threshold);
    write_records(&a.out, &records)?;
    let mut m = Manifest::new("classify", json!({ "threshold": threshold }), started);
    m.input(&a.input)?.input(&wpath)?;
    m.count("records", stats.records as u64)
        .count("edits", stats.edits as u64)
        .count("labelled", stats.labelled as u64)
        .count("unlabelled", stats.unlabelled as u64);
    m.write(&a.out)?;
    log::info!("labelled {} of {} edits", stats.labelled, stats.edits);
    Ok(())
}

fn cmd_cv(ctx: &Ctx, a: CvArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    if a.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    let (dir, examples) = load_examples(ctx, &a.data)?;
    let result = cross_validate(&examples, a.folds, ctx.seed, &TrainConfig::default())?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "fold\tprecision\trecall\tf1")?;
    for (i, f) in result.folds.iter().enumerate() {
        writeln!(
            stdout,
            "{}\t{:.3}\t{:.3}\t{:.3}",
            i + 1,
            f.precision,
            f.recall,
            f.f1
        )?;
    }
    writeln!(
        stdout,
        "mean\t{:.3}\t{:.3}\t{:.3}",
        result.precision, result.recall, result.f1
    )?;
    if let Some(out) = &a.out {
        let report = json!({
            "precision": result.precision,
            "recall": result.recall,
            "f1": result.f1,
            "folds": a.folds,
            "seed": result.seed,
        });
        let text = serde_json::to_string_pretty(&report)?;
        write_atomically(out, |w| {
            writeln!(w, "{text}").map_err(|e| Error::io(out, e))
        })?;
        let mut m = Manifest::new(
            "cv",
            json!({ "lang": a.data.lang, "folds": a.folds, "seed": ctx.seed }),
            started,
        );
        m.input(&a.data.annotations)?.input(&dir)?;
        m.count("examples", examples.len() as u64).write(out)?;
    }
    Ok(())
}

fn write_report(
    out: &Option<PathBuf>,
    tsv: &str,
    stage: &str,
    config: serde_json::Value,
    input: &[&Path],
    started: chrono::DateTime<Utc>,
    counts: &[(&str, u64)],
) -> anyhow::Result<()> {
    let Some(out) = out else { return Ok(()) };
    write_atomically(out, |w| {
        w.write_all(tsv.as_bytes()).map_err(|e| Error::io(out, e))
    })?;
    let mut m = Manifest::new(stage, config, started);
    for p in input {
        m.input(p)?;
    }
    for (k, v) in counts {
        m.count(k, *v);
    }
    m.write(out)?;
    Ok(())
}

fn cmd_atomic_stats(a: AtomicStatsArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    require_exists(&a.input)?;
    let records = read_corpus(&a.input)?;
    let table = frequency_table(&records, a.top, a.typo_only);
    let mut tsv = String::from("lang\tsrc_text\ttgt_text\tcount\n");
    for (lang, rows) in &table {
        for r in rows {
            tsv.push_str(&format!(
                "{lang}\t{}\t{}\t{}\n",
                escape_tsv(&r.src_text),
                escape_tsv(&r.tgt_text),
                r.count
            ));
        }
    }
    let mut stdout = io::stdout().lock();
    match a.format {
        Format::Tsv => stdout.write_all(tsv.as_bytes())?,
        Format::Table => {
            for (lang, rows) in &table {
                writeln!(stdout, "[{lang}]")?;
                let cells: Vec<[String; 3]> = rows
                    .iter()
                    .map(|r| {
                        [
                            render_visible(&r.src_text),
                            render_visible(&r.tgt_text),
                            r.count.to_string(),
                        ]
                    })
                    .collect();
                write!(
                    stdout,
                    "{}",
                    render_table(&["Source", "Target", "Count"], &cells, usize::MAX)
                )?;
                writeln!(stdout)?;
            }
        }
    }
    let rows: usize = table.values().map(Vec::len).sum();
    write_report(
        &a.out,
        &tsv,
        "atomic-stats",
        json!({ "top": a.top, "typo_only": a.typo_only }),
        &[&a.input],
        started,
        &[("records", records.len() as u64), ("rows", rows as u64)],
    )
}

fn cmd_stats(a: StatsArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    require_exists(&a.input)?;
    let records = read_corpus(&a.input)?;
    let report = corpus_stats(&records);
    let tsv = report.to_tsv();
    let mut stdout = io::stdout().lock();
    match a.format {
        Format::Tsv => stdout.write_all(tsv.as_bytes())?,
        Format::Table => stdout.write_all(report.to_table().as_bytes())?,
    }
    write_report(
        &a.out,
        &tsv,
        "stats",
        json!({}),
        &[&a.input],
        started,
        &[
            ("records", records.len() as u64),
            ("edits", report.total.n_all_edits),
        ],
    )
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    if a.beta.is_nan() || a.beta <= 0.0 {
        return Err(usage("--beta must be positive"));
    }
    require_exists(&a.gold)?;
    require_exists(&a.system)?;
    let gold = parse_gold_tsv(&fs::read_to_string(&a.gold).map_err(|e| Error::io(&a.gold, e))?)?;
    let system =
        parse_system_tsv(&fs::read_to_string(&a.system).map_err(|e| Error::io(&a.system, e))?)?;
    let counts = score_system(&gold, &system)?;
    let mut total = ConfusionCounts::default();
    let mut rows: Vec<(String, ConfusionCounts)> = Vec::new();
    for (cat, c) in &counts {
        total.add(c);
        rows.push((cat.clone(), *c));
    }
    rows.push(("Total".to_string(), total));
    let mut tsv = String::from("category\ttp\tfp\tfn\tprecision\trecall\tf\n");
    let mut cells: Vec<[String; 7]> = Vec::new();
    for (cat, c) in &rows {
        let (p, r, f) = precision_recall_fbeta(c, a.beta);
        tsv.push_str(&format!(
            "{cat}\t{}\t{}\t{}\t{p:.3}\t{r:.3}\t{f:.3}\n",
            c.tp, c.fp, c.fn_
        ));
        cells.push([
            cat.clone(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            format!("{p:.3}"),
            format!("{r:.3}"),
            format!("{f:.3}"),
        ]);
    }
    let f_header = format!("F{}", a.beta);
    let mut stdout = io::stdout().lock();
    match a.format {
        Format::Tsv => stdout.write_all(tsv.as_bytes())?,
        Format::Table => stdout.write_all(
            render_table(
                &[
                    "Category",
                    "TP",
                    "FP",
                    "FN",
                    "Precision",
                    "Recall",
                    f_header.as_str(),
                ],
                &cells,
                cells.len() - 1,
            )
            .as_bytes(),
        )?,
    }
    write_report(
        &a.out,
        &tsv,
        "eval",
        json!({ "beta": a.beta }),
        &[&a.gold, &a.system],
        started,
        &[("gold_lines", gold.len() as u64)],
    )
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    require_exists(path)?;
    Ok(fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn cmd_train_lm(a: TrainLmArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let mut counts = BTreeMap::new();
    for (lang, path) in &a.corpora {
        let text = read_text(path)?;
        let model = CharLangModel::train(text.lines(), a.order)
            .with_context(|| format!("training {lang} model"))?;
        let out = a.out_dir.join(format!("{lang}.lm"));
        model.save(&out)?;
        let mut m = Manifest::new(
            "train-lm",
            json!({ "lang": lang, "order": a.order }),
            started,
        );
        m.input(path)?;
        m.count("chars", text.chars().count() as u64)
            .count("vocab", model.vocab_size() as u64);
        m.write(&out)?;
        counts.insert(lang.clone(), model.vocab_size());
    }
    log::info!("wrote {} models to {}", counts.len(), a.out_dir.display());
    Ok(())
}

fn cmd_train_langid(a: TrainLangidArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    let mut corpora = BTreeMap::new();
    for (lang, path) in &a.corpora {
        if corpora.insert(lang.clone(), read_text(path)?).is_some() {
            return Err(usage(format!("language {lang:?} given twice")));
        }
    }
    let profiles = train_profiles(&corpora)?;
    save_profiles(&a.out_dir, &profiles)?;
    for p in &profiles {
        let out = a.out_dir.join(format!("{}.json", p.lang));
        let mut m = Manifest::new("train-langid", json!({ "lang": p.lang }), started);
        let (_, path) = a
            .corpora
            .iter()
            .find(|(l, _)| *l == p.lang)
            .expect("corpus for profile");
        m.input(path)?;
        m.count("ngrams", p.ngram_logprobs.len() as u64);
        m.write(&out)?;
    }
    log::info!(
        "wrote {} profiles to {}",
        profiles.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_pipeline(ctx: &Ctx, a: PipelineArgs) -> anyhow::Result<()> {
    let started = Utc::now();
    let src = resolve_sources(ctx, &a.source)?;
    let (profile_dir, profiles, filter_cfg) = filter_setup(ctx, &a.filter)?;
    let (model_dir, models) = load_models(ctx, &a.models)?;
    let wpath = pick(a.weights.clone(), ctx.file.paths.weights.clone(), "weights")?;
    let weights = load_weights(&wpath)?;
    let threshold = resolve_threshold(ctx, a.threshold)?;

    let (records, extracted) = extract_stage(&src.sources, &src.config)?;
    let (mut records, filtered) = langfilter_stage(records, &profiles, &filter_cfg);
    let featurized = featurize_stage(&mut records, &models)?;
    let labelled = classify_stage(&mut records, &weights.weights(), threshold);
    write_records(&a.out, &records)?;

    let config = json!({
        "extract": extract_config_json(&src.config),
        "langfilter": serde_json::to_value(filter_cfg)?,
        "threshold": threshold,
    });
    let mut m = Manifest::new("pipeline", config, started);
    for p in &src.inputs {
        m.input(p)?;
    }
    m.input(&profile_dir)?.input(&model_dir)?.input(&wpath)?;
    m.counts_from("extract.", &extracted)
        .counts_from("langfilter.", &filtered)
        .counts_from("featurize.", &featurized)
        .count("classify.labelled", labelled.labelled as u64)
        .count("classify.unlabelled", labelled.unlabelled as u64);
    m.write(&a.out)?;
    log::info!(
        "{} records, {} edits ({} labelled)",
        records.len(),
        labelled.edits,
        labelled.labelled
    );
    Ok(())
}
