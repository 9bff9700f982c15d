//! `iqloc` command-line interface.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::backend::{check_conformance, BackendError, RemoteClient, RemoteEmbedder, BACKEND_URL_ENV};
use crate::corpus::{load_bug_reports, load_corpus, BugReport, Corpus, LoadReport};
use crate::dataset::{self, attach_diffs, build_pairs, classify_report, RelevancePair, SplitMode, SplitSpec};
use crate::index::{AnalyzerMode, Bm25Params, Index};
use crate::keywords::{extract_keywords, CooccurrenceBackend, EmbeddingBackend, HashedBackend, KeywordRequest};
use crate::manifest::RunManifest;
use crate::metrics::{self, cliffs_delta, evaluate_by_class, wilcoxon_signed_rank, EvalRecord};
use crate::pipeline::{self, localize_all, Backends, LocalizationResult, PipelineConfig};
use crate::relevance::ScorePair;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "iqloc", version, about = "Bug localization with BM25 retrieval and query reformulation")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Where to write the run manifest (default: `<out>.manifest.json`, or
    /// stderr for commands without `--out`).
    #[arg(long, global = true)]
    pub run_manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the BM25 index for a corpus.
    Index(IndexArgs),
    /// Query an index within one project version.
    Search(SearchArgs),
    /// Localize bug reports.
    Localize(LocalizeArgs),
    /// Extract MMR keywords from a text.
    Keywords(KeywordsArgs),
    /// Build training pairs, splits and report classes.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Score relevance pairs and report classifier metrics per threshold.
    Pairs(PairsArgs),
    /// Evaluate localization results against ground truth.
    Eval(EvalArgs),
    /// Model service utilities.
    #[command(subcommand)]
    Backend(BackendCommand),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus manifest (`corpus.json`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory that manifest file paths are relative to (default: the
    /// manifest's directory).
    #[arg(long)]
    pub root: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `retrieval.analyzer`.
    #[arg(long)]
    pub analyzer: Option<AnalyzerMode>,
    /// Rebuild even if the existing index matches its inputs.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub project: String,
    #[arg(long)]
    pub version: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reports: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Skip relevance scoring, keyword extraction, reformulation and reranking.
    #[arg(long)]
    pub baseline: bool,
    /// Print each report's provenance-tagged query to stderr.
    #[arg(long)]
    pub explain: bool,
}

#[derive(Debug, Args)]
pub struct KeywordsArgs {
    /// Text to extract from.
    #[arg(long, conflicts_with = "file")]
    pub text: Option<String>,
    /// File to extract from.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Corpus for the co-occurrence embedder (default: the input text alone).
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Label buggy methods from fix diffs and sample negatives.
    Build(DatasetBuildArgs),
    /// Split reports into train/validation/test.
    Split(DatasetSplitArgs),
    /// Classify reports as ST, PE or NL.
    Classify(DatasetClassifyArgs),
}

#[derive(Debug, Args)]
pub struct DatasetBuildArgs {
    #[arg(long)]
    pub reports: PathBuf,
    /// Directory of `<report_id>.diff` files.
    #[arg(long)]
    pub diffs: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DatasetSplitArgs {
    #[arg(long)]
    pub reports: PathBuf,
    #[arg(long, default_value = "random", value_parser = parse_split_mode)]
    pub mode: SplitMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetClassifyArgs {
    #[arg(long)]
    pub reports: PathBuf,
    /// Reports JSONL with `report_class` filled in (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated thresholds (default: 0, 0.1, ..., 1).
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Bug reports with `fixed_files`.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub k: Vec<usize>,
    /// Truncate AP at this rank (default: the whole list).
    #[arg(long)]
    pub ap_cutoff: Option<usize>,
    /// Results of a baseline run; adds a one-sided Wilcoxon test and Cliff's
    /// delta over per-query Precision@10.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum BackendCommand {
    /// Check a model service against the wire protocol.
    Check(BackendCheckArgs),
}

#[derive(Debug, Args)]
pub struct BackendCheckArgs {
    /// Service base URL (default: $IQLOC_BACKEND_URL, then config).
    #[arg(long)]
    pub url: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_split_mode(s: &str) -> Result<SplitMode, String> {
    match s {
        "random" => Ok(SplitMode::Random),
        "timewise" => Ok(SplitMode::Timewise),
        other => Err(format!("unknown split mode `{other}` (expected random|timewise)")),
    }
}

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
    Backend(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        let backend = e.chain().any(|c| c.downcast_ref::<BackendError>().is_some())
            || e.downcast_ref::<pipeline::PipelineError>().is_some_and(|p| p.is_backend());
        if backend {
            CliError::Backend(e)
        } else {
            CliError::Data(e)
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Data(err) | CliError::Backend(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // Fails only if the global pool already exists (e.g. repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx { threads: cli.threads, run_manifest: cli.run_manifest };
    match cli.command {
        Command::Index(a) => cmd_index(&ctx, a),
        Command::Search(a) => cmd_search(&ctx, a),
        Command::Localize(a) => cmd_localize(&ctx, a),
        Command::Keywords(a) => cmd_keywords(&ctx, a),
        Command::Dataset(DatasetCommand::Build(a)) => cmd_dataset_build(&ctx, a),
        Command::Dataset(DatasetCommand::Split(a)) => cmd_dataset_split(&ctx, a),
        Command::Dataset(DatasetCommand::Classify(a)) => cmd_dataset_classify(&ctx, a),
        Command::Pairs(a) => cmd_pairs(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Backend(BackendCommand::Check(a)) => cmd_backend_check(&ctx, a),
    }
}

struct Ctx {
    threads: Option<usize>,
    run_manifest: Option<PathBuf>,
}

impl Ctx {
    fn manifest_path(&self, out: Option<&Path>) -> Option<PathBuf> {
        self.run_manifest.clone().or_else(|| out.map(manifest_sidecar))
    }

    fn emit(&self, manifest: &RunManifest, out: Option<&Path>) -> CliResult<()> {
        let json = serde_json::to_string_pretty(manifest).map_err(anyhow::Error::from)?;
        match self.manifest_path(out) {
            Some(p) => fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
            None => eprintln!("{}", serde_json::to_string(manifest).map_err(anyhow::Error::from)?),
        }
        Ok(())
    }
}

pub fn manifest_sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn load_config(path: Option<&Path>, manifest: &mut RunManifest) -> CliResult<PipelineConfig> {
    let cfg = match path {
        Some(p) => {
            manifest.record_input(p).with_context(|| format!("reading {}", p.display()))?;
            PipelineConfig::load(p).map_err(anyhow::Error::from)?
        }
        None => PipelineConfig::default(),
    };
    manifest.config = serde_json::to_value(&cfg).map_err(anyhow::Error::from)?;
    Ok(cfg)
}

fn resolve_corpus(
    args: &CorpusArgs,
    cfg: Option<&PipelineConfig>,
    manifest: &mut RunManifest,
) -> CliResult<(Corpus, LoadReport)> {
    let path = args.manifest.clone().or_else(|| cfg.and_then(|c| c.corpus_manifest.clone())).ok_or_else(|| {
        CliError::Usage("a corpus manifest is required (--manifest or corpus_manifest in config)".into())
    })?;
    let root = args.root.clone().unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
    let (corpus, report) = load_corpus(&root, &path).map_err(anyhow::Error::from)?;
    manifest.record_input(&path).with_context(|| format!("reading {}", path.display()))?;
    for doc in corpus.documents() {
        let p = root.join(&doc.path);
        manifest.record_input(&p).with_context(|| format!("reading {}", p.display()))?;
    }
    for issue in &report.issues {
        eprintln!("warning: {}: {}", issue.file, issue.message);
    }
    Ok((corpus, report))
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> CliResult<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(anyhow::Error::from)?;
        w.write_all(b"\n").map_err(anyhow::Error::from)?;
    }
    w.flush().map_err(anyhow::Error::from)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_jsonl<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn reports(path: &Path, manifest: &mut RunManifest) -> CliResult<Vec<BugReport>> {
    manifest.record_input(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(load_bug_reports(path).map_err(anyhow::Error::from)?)
}

fn cmd_index(ctx: &Ctx, a: IndexArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("index");
    let mut cfg = load_config(a.config.as_deref(), &mut manifest)?;
    if let Some(mode) = a.analyzer {
        cfg.retrieval.analyzer = mode;
        manifest.config = serde_json::to_value(&cfg).map_err(anyhow::Error::from)?;
    }
    let t = Instant::now();
    let (corpus, _) = resolve_corpus(&a.corpus, Some(&cfg), &mut manifest)?;
    manifest.time("load", t.elapsed().as_secs_f64() * 1e3);

    let sidecar = ctx.manifest_path(Some(&a.out));
    if !a.no_cache && a.out.exists() {
        let previous = sidecar
            .as_ref()
            .and_then(|p| fs::read_to_string(p).ok())
            .and_then(|s| serde_json::from_str::<RunManifest>(&s).ok());
        if let Some(prev) = previous {
            if prev.inputs == manifest.inputs && prev.config == manifest.config && Index::load(&a.out).is_ok() {
                eprintln!("index {} is up to date (use --no-cache to rebuild)", a.out.display());
                return Ok(());
            }
        }
    }

    let t = Instant::now();
    let params = Bm25Params::new(cfg.retrieval.k1, cfg.retrieval.b).map_err(anyhow::Error::from)?;
    let index = Index::build(corpus.documents(), params, cfg.retrieval.analyzer).map_err(anyhow::Error::from)?;
    index.save(&a.out).map_err(anyhow::Error::from)?;
    manifest.time("build", t.elapsed().as_secs_f64() * 1e3);
    eprintln!("indexed {} documents, {} terms", index.doc_count(), index.terms().count());
    ctx.emit(&manifest, Some(&a.out))
}

fn cmd_search(ctx: &Ctx, a: SearchArgs) -> CliResult<()> {
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let mut manifest = RunManifest::new("search");
    manifest.record_input(&a.index).with_context(|| format!("reading {}", a.index.display()))?;
    let index = Index::load(&a.index).map_err(anyhow::Error::from)?;
    let report = BugReport {
        id: "query".into(),
        project: a.project.clone(),
        version: a.version.clone(),
        title: a.query.clone(),
        description: String::new(),
        created_at: chrono::DateTime::<chrono::Utc>::UNIX_EPOCH,
        fixed_files: Vec::new(),
        report_class: None,
    };
    let terms = pipeline::initial_query(&report, index.analyzer());
    let t = Instant::now();
    let hits = index.search("query", &terms, &a.project, &a.version, a.k);
    manifest.time("search", t.elapsed().as_secs_f64() * 1e3);
    println!("{}", serde_json::to_string_pretty(&hits).map_err(anyhow::Error::from)?);
    ctx.emit(&manifest, None)
}

fn backend_url(flag: Option<&str>, cfg: &PipelineConfig) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(BACKEND_URL_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| cfg.remote.url.clone())
}

fn cmd_localize(ctx: &Ctx, a: LocalizeArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new(if a.baseline { "localize --baseline" } else { "localize" });
    let cfg = load_config(a.config.as_deref(), &mut manifest)?;
    let reports = reports(&a.reports, &mut manifest)?;
    manifest.record_input(&a.index).with_context(|| format!("reading {}", a.index.display()))?;

    let t = Instant::now();
    let index = Index::load(&a.index).map_err(anyhow::Error::from)?;
    let (corpus, _) = resolve_corpus(&a.corpus, Some(&cfg), &mut manifest)?;
    manifest.time("load", t.elapsed().as_secs_f64() * 1e3);

    let url = backend_url(None, &cfg);
    let backends = Backends::from_config(&cfg, &corpus, Some(&url)).map_err(anyhow::Error::from)?;
    let results = localize_all(&reports, &index, &corpus, &cfg, &backends, a.baseline, ctx.threads)
        .map_err(anyhow::Error::from)?;

    let mut ok: Vec<LocalizationResult> = Vec::with_capacity(results.len());
    for (report, r) in reports.iter().zip(results) {
        let r = r.map_err(|e| CliError::from(anyhow::Error::from(e).context(format!("report {}", report.id))))?;
        if a.explain {
            match &r.query {
                Some(q) => eprintln!("{}: {}", r.report_id, q.explain()),
                None => eprintln!("{}: (initial query kept)", r.report_id),
            }
        }
        for (stage, value) in [
            ("retrieve", r.timings_ms.retrieve),
            ("score", r.timings_ms.score),
            ("keywords", r.timings_ms.keywords),
            ("reformulate", r.timings_ms.reformulate),
            ("rerank", r.timings_ms.rerank),
        ] {
            manifest.time(stage, value);
        }
        ok.push(r);
    }
    write_jsonl(&a.out, &ok)?;
    ctx.emit(&manifest, Some(&a.out))
}

fn cmd_keywords(ctx: &Ctx, a: KeywordsArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("keywords");
    let cfg = load_config(a.config.as_deref(), &mut manifest)?;
    let text = match (&a.text, &a.file) {
        (Some(t), _) => t.clone(),
        (None, Some(f)) => {
            manifest.record_input(f).with_context(|| format!("reading {}", f.display()))?;
            fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?
        }
        (None, None) => return Err(CliError::Usage("one of --text or --file is required".into())),
    };
    let req = KeywordRequest {
        doc: text,
        n: a.n.unwrap_or(cfg.keywords.n),
        lambda: a.lambda.unwrap_or(cfg.keywords.lambda),
        analyzer: cfg.retrieval.analyzer,
    };
    req.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let embedder: Box<dyn EmbeddingBackend> = match cfg.keywords.backend {
        pipeline::EmbedderKind::Hashed => Box::new(HashedBackend::new(cfg.keywords.dimension)),
        pipeline::EmbedderKind::Cooccurrence => {
            let window = CooccurrenceBackend::DEFAULT_WINDOW;
            if a.corpus.manifest.is_some() || cfg.corpus_manifest.is_some() {
                let (corpus, _) = resolve_corpus(&a.corpus, Some(&cfg), &mut manifest)?;
                let texts: Vec<&str> = corpus.documents().iter().map(|d| d.content.as_str()).collect();
                Box::new(CooccurrenceBackend::build(&texts, cfg.keywords.dimension, window))
            } else {
                // Without a corpus, statistics come from the input text alone.
                Box::new(CooccurrenceBackend::build(&[req.doc.as_str()], cfg.keywords.dimension, window))
            }
        }
        pipeline::EmbedderKind::Remote => {
            let client = RemoteClient::new(&backend_url(None, &cfg), Duration::from_millis(cfg.remote.timeout_ms));
            Box::new(RemoteEmbedder::connect(client).map_err(anyhow::Error::from)?)
        }
    };
    let set = extract_keywords(&req, embedder.as_ref()).map_err(anyhow::Error::from)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for kw in &set.keywords {
        serde_json::to_writer(&mut out, kw).map_err(anyhow::Error::from)?;
        out.write_all(b"\n").map_err(anyhow::Error::from)?;
    }
    ctx.emit(&manifest, None)
}

fn cmd_dataset_build(ctx: &Ctx, a: DatasetBuildArgs) -> CliResult<()> {
    if a.negatives == 0 {
        return Err(CliError::Usage("--negatives must be at least 1".into()));
    }
    let mut manifest = RunManifest::new("dataset build");
    manifest.seed = Some(a.seed);
    let reports = reports(&a.reports, &mut manifest)?;
    manifest.record_input(&a.diffs).with_context(|| format!("reading {}", a.diffs.display()))?;
    let (corpus, _) = resolve_corpus(&a.corpus, None, &mut manifest)?;
    let with_diffs = attach_diffs(reports, &a.diffs).map_err(anyhow::Error::from)?;
    let (pairs, stats) = build_pairs(&with_diffs, &corpus, a.negatives, a.seed).map_err(anyhow::Error::from)?;
    for id in &stats.skipped_reports {
        eprintln!("warning: report {id}: no buggy method resolvable, skipped");
    }
    for id in &stats.short_pools {
        eprintln!("warning: report {id}: fewer negatives available than requested");
    }
    eprintln!("{} positives, {} negatives", stats.positives, stats.negatives);
    write_jsonl(&a.out, &pairs)?;
    ctx.emit(&manifest, Some(&a.out))
}

fn cmd_dataset_split(ctx: &Ctx, a: DatasetSplitArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("dataset split");
    manifest.seed = Some(a.seed);
    let reports = reports(&a.reports, &mut manifest)?;
    let spec = SplitSpec { mode: a.mode, seed: a.seed, ..Default::default() };
    manifest.config = serde_json::to_value(spec).map_err(anyhow::Error::from)?;
    let splits = dataset::split(&reports, &spec).map_err(anyhow::Error::from)?;
    write_json(&a.out, &splits)?;
    ctx.emit(&manifest, Some(&a.out))
}

fn cmd_dataset_classify(ctx: &Ctx, a: DatasetClassifyArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("dataset classify");
    let mut reports = reports(&a.reports, &mut manifest)?;
    for r in &mut reports {
        r.report_class = Some(classify_report(r));
    }
    match &a.out {
        Some(out) => write_jsonl(out, &reports)?,
        None => {
            for r in &reports {
                println!("{}", serde_json::to_string(r).map_err(anyhow::Error::from)?);
            }
        }
    }
    ctx.emit(&manifest, a.out.as_deref())
}

#[derive(Serialize)]
struct PairsReport {
    scorer: String,
    pairs: usize,
    positives: usize,
    sweep: Vec<metrics::ConfusionMetrics>,
}

fn cmd_pairs(ctx: &Ctx, a: PairsArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("pairs");
    let cfg = load_config(a.config.as_deref(), &mut manifest)?;
    manifest.record_input(&a.pairs).with_context(|| format!("reading {}", a.pairs.display()))?;
    let pairs: Vec<RelevancePair> = read_jsonl(&a.pairs)?;
    let backends = Backends::from_config(&cfg, &Corpus::default(), Some(&backend_url(None, &cfg)));
    let scorer = backends.map_err(anyhow::Error::from)?.scorer;

    let t = Instant::now();
    let batch: Vec<ScorePair> = pairs
        .iter()
        .map(|p| match scorer.token_budget() {
            Some(b) => crate::relevance::truncate_pair(&p.context, &p.candidate, b),
            None => ScorePair { context: p.context.clone(), candidate: p.candidate.clone() },
        })
        .collect();
    let mut scores = Vec::with_capacity(batch.len());
    for chunk in batch.chunks(cfg.relevance.batch_size) {
        scores.extend(scorer.score_batch(chunk).map_err(anyhow::Error::from)?);
    }
    manifest.time("score", t.elapsed().as_secs_f64() * 1e3);

    let labeled: Vec<(f64, u8)> = scores.iter().copied().zip(pairs.iter().map(|p| p.label)).collect();
    let thresholds =
        if a.thresholds.is_empty() { (0..=10).map(|i| i as f64 / 10.0).collect() } else { a.thresholds.clone() };
    if let Some(bad) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(CliError::Usage(format!("threshold {bad} outside [0, 1]")));
    }
    let report = PairsReport {
        scorer: scorer.name().to_string(),
        pairs: pairs.len(),
        positives: pairs.iter().filter(|p| p.label != 0).count(),
        sweep: thresholds.iter().map(|&t| metrics::confusion_metrics(&labeled, t)).collect(),
    };
    match &a.out {
        Some(out) => write_json(out, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?),
    }
    ctx.emit(&manifest, a.out.as_deref())
}

#[derive(Serialize)]
struct Comparison {
    metric: &'static str,
    queries: usize,
    wilcoxon: Option<metrics::WilcoxonResult>,
    wilcoxon_error: Option<String>,
    cliffs_delta: metrics::CliffsDelta,
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    breakdown: metrics::ClassBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

fn eval_records(results: &[LocalizationResult], truth: &[BugReport]) -> Vec<(EvalRecord, crate::corpus::ReportClass)> {
    truth
        .iter()
        .filter(|r| !r.fixed_files.is_empty())
        .map(|r| {
            let ranked =
                results.iter().find(|x| x.report_id == r.id).map(|x| x.final_ranking.paths()).unwrap_or_default();
            let class = r.report_class.unwrap_or_else(|| classify_report(r));
            (EvalRecord::new(r.id.clone(), ranked, r.fixed_files.iter().cloned()), class)
        })
        .collect()
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> CliResult<()> {
    if a.k.contains(&0) {
        return Err(CliError::Usage("--k values must be at least 1".into()));
    }
    let mut manifest = RunManifest::new("eval");
    let truth = reports(&a.truth, &mut manifest)?;
    manifest.record_input(&a.results).with_context(|| format!("reading {}", a.results.display()))?;
    let results: Vec<LocalizationResult> = read_jsonl(&a.results)?;
    let records = eval_records(&results, &truth);
    if records.is_empty() {
        return Err(CliError::Data(anyhow!("no reports with ground truth in {}", a.truth.display())));
    }
    let breakdown = evaluate_by_class(&records, &a.k, a.ap_cutoff).map_err(anyhow::Error::from)?;

    let comparison = match &a.compare {
        Some(path) => {
            manifest.record_input(path).with_context(|| format!("reading {}", path.display()))?;
            let base: Vec<LocalizationResult> = read_jsonl(path)?;
            let base_records = eval_records(&base, &truth);
            let p10 = |rs: &[(EvalRecord, _)]| -> Result<Vec<f64>, metrics::MetricError> {
                rs.iter().map(|(r, _)| metrics::precision_at(r, 10)).collect()
            };
            let treated = p10(&records).map_err(anyhow::Error::from)?;
            let baseline = p10(&base_records).map_err(anyhow::Error::from)?;
            let (wilcoxon, wilcoxon_error) = match wilcoxon_signed_rank(&baseline, &treated) {
                Ok(w) => (Some(w), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Some(Comparison {
                metric: "precision@10",
                queries: treated.len(),
                wilcoxon,
                wilcoxon_error,
                cliffs_delta: cliffs_delta(&treated, &baseline).map_err(anyhow::Error::from)?,
            })
        }
        None => None,
    };
    write_json(&a.out, &EvalOutput { breakdown, comparison })?;
    ctx.emit(&manifest, Some(&a.out))
}

fn cmd_backend_check(ctx: &Ctx, a: BackendCheckArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("backend check");
    let cfg = load_config(a.config.as_deref(), &mut manifest)?;
    let url = backend_url(a.url.as_deref(), &cfg);
    let client = RemoteClient::new(&url, Duration::from_millis(cfg.remote.timeout_ms));
    let report = check_conformance(&client).map_err(|e| CliError::Backend(anyhow::Error::from(e)))?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    ctx.emit(&manifest, None)?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Backend(anyhow!("{url} does not conform to the model service protocol")))
    }
}
