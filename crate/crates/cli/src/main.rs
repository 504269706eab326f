//! `driftrank` — command-line driver for the driftrank retrieval library.
//!
//! Subcommands mirror the pipeline stages (clean, index, dense, rerank,
//! eval, shift, pipeline) plus a `provider serve` mode that speaks the
//! wire protocol over stdin/stdout so the CLI can act as its own
//! deterministic scoring backend.
//!
//! Exit codes: 0 success, 1 configuration/input error, 2 stage/runtime
//! failure (a backend misbehaved after configuration was accepted).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use driftrank::bm25::{build_index, read_snapshot, search, write_snapshot, BM25Params};
use driftrank::dense::{dot_rescore_fused, fetch_embeddings, EmbeddingProvider};
use driftrank::pipeline::{
    run_pipeline, validate_config, ConfigOverrides, PipelineConfig, RerankStrategy,
    ENV_DENSE_ENDPOINT, ENV_SCORER_ENDPOINT,
};
use driftrank::providers::{
    embedder_from_endpoint, listwise_from_endpoint, pointwise_from_endpoint, stable_hash,
    MockEmbedder, ScorerDeps, WireOptions,
};
use driftrank::ranking::RankedList;
use driftrank::rerank::{
    pointwise_rerank, sliding_window_rerank, tournament_rerank, SlidingWindowConfig,
    TournamentConfig,
};
use driftrank::shift::{default_shift_analyzer, shift_report};
use driftrank::textcorpus::{
    cleanup_report, ingest_jsonl, read_queries, tokenize, AnalyzerConfig, Corpus, Query,
};
use driftrank::treceval::{
    default_metrics, evaluate, read_trec_run, write_trec_run, MetricSpec, QrelSet,
};
use driftrank::wire::{RankResponse, ScoreResponse, WireRequest};
use driftrank::{Error, Result};

#[derive(Parser)]
#[command(
    name = "driftrank",
    version,
    about = "Multi-stage retrieval: BM25, dense rescoring, reranking, evaluation, and corpus-shift analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a JSONL corpus (strip markup, URLs, emails, control noise)
    Clean(CleanArgs),
    /// Build or query a BM25 inverted-index snapshot
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Dense dot-product rescoring of an existing run
    Dense {
        #[command(subcommand)]
        command: DenseCommand,
    },
    /// Rerank an existing run with a pointwise or listwise scorer
    Rerank(Box<RerankArgs>),
    /// Score a run against relevance judgments
    Eval(EvalArgs),
    /// Vocabulary-shift analysis across corpora
    Shift {
        #[command(subcommand)]
        command: ShiftCommand,
    },
    /// Run or validate a full pipeline configuration
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Act as a wire-protocol provider for other driftrank processes
    Provider {
        #[command(subcommand)]
        command: ProviderCommand,
    },
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Tokenize a corpus and write an index snapshot
    Build(IndexBuildArgs),
    /// Search a snapshot and emit a TREC run
    Search(IndexSearchArgs),
}

#[derive(Subcommand)]
enum DenseCommand {
    /// Re-score the head of a run by embedding dot products
    Rescore(DenseRescoreArgs),
}

#[derive(Subcommand)]
enum ShiftCommand {
    /// Pairwise Jensen-Shannon divergence between corpus vocabularies
    Report(ShiftReportArgs),
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Execute the configured pipeline end to end
    Run(PipelineRunArgs),
    /// Validate a configuration without running it
    Check(PipelineRunArgs),
}

#[derive(Subcommand)]
enum ProviderCommand {
    /// Serve embed/score/rank requests over stdin/stdout
    Serve(ProviderServeArgs),
}

#[derive(Args)]
struct CleanArgs {
    /// Input corpus: JSONL with {"id", "text"} per line
    #[arg(long)]
    input: PathBuf,
    /// Where to write the cleaned corpus (same JSONL shape)
    #[arg(long)]
    output: PathBuf,
    /// Suppress the reduction report
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Clone)]
struct AnalyzerArgs {
    /// Disable lowercasing
    #[arg(long)]
    no_lowercase: bool,
    /// Disable ASCII transliteration
    #[arg(long)]
    no_ascii_fold: bool,
    /// Disable stemming
    #[arg(long)]
    no_stem: bool,
    /// Drop stopwords
    #[arg(long)]
    stopwords: bool,
    /// Keep at most this many tokens per document
    #[arg(long)]
    max_tokens: Option<usize>,
}

impl AnalyzerArgs {
    fn to_config(&self) -> AnalyzerConfig {
        AnalyzerConfig {
            lowercase: !self.no_lowercase,
            ascii_fold: !self.no_ascii_fold,
            stem: !self.no_stem,
            stopwords: self.stopwords,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Args)]
struct IndexBuildArgs {
    /// Corpus to index (JSONL)
    #[arg(long)]
    corpus: PathBuf,
    /// Snapshot output path (JSON)
    #[arg(long)]
    output: PathBuf,
    /// Apply text cleanup to documents before indexing
    #[arg(long)]
    cleanup: bool,
    /// BM25 term-frequency saturation
    #[arg(long, default_value_t = 0.9)]
    k1: f64,
    /// BM25 length normalisation
    #[arg(long, default_value_t = 0.4)]
    b: f64,
    #[command(flatten)]
    analyzer: AnalyzerArgs,
}

#[derive(Args)]
struct IndexSearchArgs {
    /// Index snapshot written by `index build`
    #[arg(long)]
    index: PathBuf,
    /// Query file: one `id<TAB>text` per line
    #[arg(long, required_unless_present = "query", conflicts_with = "query")]
    queries: Option<PathBuf>,
    /// A single ad-hoc query (reported as query id "q1")
    #[arg(long)]
    query: Option<String>,
    /// Results per query
    #[arg(short, long, default_value_t = 1000)]
    k: usize,
    /// TREC run output path; omit to print to stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run tag for the TREC output
    #[arg(long, default_value = "driftrank")]
    tag: String,
}

#[derive(Args, Clone)]
struct WireArgs {
    /// Subprocess pool size for exec: endpoints
    #[arg(long, default_value_t = 1)]
    pool: usize,
    /// Timeout for http(s) endpoints, in seconds
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

impl WireArgs {
    fn options(&self) -> WireOptions {
        WireOptions {
            pool: self.pool,
            timeout: Duration::from_secs(self.timeout_secs),
        }
    }
}

#[derive(Args)]
struct DenseRescoreArgs {
    /// First-stage TREC run to rescore
    #[arg(long)]
    run: PathBuf,
    /// Corpus supplying document texts (JSONL)
    #[arg(long)]
    corpus: PathBuf,
    /// Query file supplying query texts (TSV)
    #[arg(long)]
    queries: PathBuf,
    /// Embedding endpoint (falls back to DRIFTRANK_DENSE_ENDPOINT)
    #[arg(long)]
    endpoint: Option<String>,
    /// Keep this many rescored results per query
    #[arg(short, long, default_value_t = 100)]
    k: usize,
    /// Token budget passed to the embedding provider
    #[arg(long, default_value_t = 512)]
    truncate_tokens: usize,
    /// Linear-fusion weight on the incoming first-stage scores
    #[arg(long, default_value_t = 0.0)]
    fusion_weight: f64,
    /// Apply text cleanup to documents at ingest
    #[arg(long)]
    cleanup: bool,
    /// TREC run output path; omit to print to stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run tag for the TREC output
    #[arg(long, default_value = "driftrank")]
    tag: String,
    #[command(flatten)]
    wire: WireArgs,
}

#[derive(Args)]
struct RerankArgs {
    /// Candidate TREC run to rerank
    #[arg(long)]
    run: PathBuf,
    /// Corpus supplying document texts (JSONL)
    #[arg(long)]
    corpus: PathBuf,
    /// Query file supplying query texts (TSV)
    #[arg(long)]
    queries: PathBuf,
    /// Rerank strategy: none, pointwise, sliding_window, or tournament
    #[arg(long, default_value = "sliding_window")]
    strategy: String,
    /// Scorer endpoint (falls back to DRIFTRANK_SCORER_ENDPOINT)
    #[arg(long)]
    scorer: Option<String>,
    /// Index snapshot, required by the bm25 scorer endpoint
    #[arg(long)]
    index: Option<PathBuf>,
    /// Apply text cleanup to documents at ingest
    #[arg(long)]
    cleanup: bool,
    /// Pointwise: score this many candidates from the top
    #[arg(short, long, default_value_t = 30)]
    k: usize,
    /// Sliding window: window size
    #[arg(long, default_value_t = 20)]
    window: usize,
    /// Sliding window: stride between window starts
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Sliding window: number of full passes
    #[arg(long, default_value_t = 1)]
    passes: usize,
    /// Tournament: members per match
    #[arg(long, default_value_t = 5)]
    match_size: usize,
    /// Tournament: winners promoted per match
    #[arg(long, default_value_t = 2)]
    promote: usize,
    /// Tournament: results extracted per query
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// TREC run output path; omit to print to stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run tag for the TREC output
    #[arg(long, default_value = "driftrank")]
    tag: String,
    #[command(flatten)]
    wire: WireArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// TREC run to evaluate
    #[arg(long)]
    run: PathBuf,
    /// Relevance judgments: `qid 0 docid grade` per line
    #[arg(long)]
    qrels: PathBuf,
    /// Comma-separated metric list, e.g. ndcg@10,map@100,p@10,recall@1000
    #[arg(long)]
    metrics: Option<String>,
    /// Emit the full report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ShiftReportArgs {
    /// Corpus files to compare; pass at least twice
    #[arg(long = "corpus", required = true)]
    corpora: Vec<PathBuf>,
    /// Apply text cleanup to documents at ingest
    #[arg(long)]
    cleanup: bool,
    /// Override the per-document token cap (default 1024)
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Emit the divergence matrix as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PipelineRunArgs {
    /// Pipeline configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the dense embedding endpoint
    #[arg(long)]
    dense_endpoint: Option<String>,
    /// Override the rerank scorer endpoint
    #[arg(long)]
    scorer: Option<String>,
    /// Override the TREC run output path
    #[arg(long)]
    run: Option<PathBuf>,
    /// Override the JSONL run-record output path
    #[arg(long)]
    jsonl: Option<PathBuf>,
    /// Override the stage-trace output path
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Override the run tag
    #[arg(long)]
    tag: Option<String>,
}

#[derive(Args)]
struct ProviderServeArgs {
    /// Seed for the deterministic hash family
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Embedding dimensionality
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Score and rank by query/document token overlap instead of hashing
    #[arg(long)]
    overlap: bool,
    /// Answer rank requests with raw "[3] > [1] > ..." text instead of an index array
    #[arg(long)]
    raw: bool,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

/// 1 = the inputs or configuration were unusable; 2 = a stage failed at
/// runtime after being accepted.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Stage { .. }
        | Error::Protocol(_)
        | Error::InvalidProbability { .. }
        | Error::NoRankingIndices { .. }
        | Error::MissingEmbedding { .. }
        | Error::DimensionMismatch { .. }
        | Error::NotASubset { .. }
        | Error::UnknownDoc { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Clean(args) => cmd_clean(args),
        Command::Index { command } => match command {
            IndexCommand::Build(args) => cmd_index_build(args),
            IndexCommand::Search(args) => cmd_index_search(args),
        },
        Command::Dense { command } => match command {
            DenseCommand::Rescore(args) => cmd_dense_rescore(args),
        },
        Command::Rerank(args) => cmd_rerank(*args),
        Command::Eval(args) => cmd_eval(args),
        Command::Shift { command } => match command {
            ShiftCommand::Report(args) => cmd_shift_report(args),
        },
        Command::Pipeline { command } => match command {
            PipelineCommand::Run(args) => cmd_pipeline_run(args),
            PipelineCommand::Check(args) => cmd_pipeline_check(args),
        },
        Command::Provider { command } => match command {
            ProviderCommand::Serve(args) => cmd_provider_serve(args),
        },
    }
}

fn write_corpus_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    let shown = path.display().to_string();
    let mut out = String::new();
    for doc in corpus.iter() {
        let line = serde_json::json!({ "id": doc.id, "text": doc.text });
        out.push_str(&serde_json::to_string(&line).map_err(|e| Error::json(&shown, e))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(&shown, e))
}

fn cmd_clean(args: CleanArgs) -> Result<()> {
    let raw = ingest_jsonl(&args.input, false)?;
    let cleaned = raw.cleaned();
    let report = cleanup_report(&raw, &cleaned)?;
    write_corpus_jsonl(&cleaned, &args.output)?;
    if !args.quiet {
        print!("{}", report.render());
    }
    Ok(())
}

fn check_bm25_params(params: &BM25Params) -> Result<()> {
    if params.k1.is_nan() || params.k1 < 0.0 {
        return Err(Error::Config(format!(
            "k1 must be finite and non-negative, got {}",
            params.k1
        )));
    }
    if params.b.is_nan() || !(0.0..=1.0).contains(&params.b) {
        return Err(Error::Config(format!(
            "b must lie in [0, 1], got {}",
            params.b
        )));
    }
    Ok(())
}

fn cmd_index_build(args: IndexBuildArgs) -> Result<()> {
    let params = BM25Params {
        k1: args.k1,
        b: args.b,
    };
    check_bm25_params(&params)?;
    let corpus = ingest_jsonl(&args.corpus, args.cleanup)?;
    let index = build_index(&corpus, &args.analyzer.to_config())?;
    write_snapshot(&index, &params, &args.output)?;
    println!(
        "indexed {} documents ({} terms, avg length {:.2}) -> {}",
        index.doc_count(),
        index.vocabulary().count(),
        index.avg_doc_length(),
        args.output.display()
    );
    Ok(())
}

/// Write a run to `path`, or print it in TREC format when no path is given.
/// Tied scores are nudged apart first so emitted runs are strictly
/// decreasing within each query.
fn emit_run(lists: &[RankedList], tag: &str, output: Option<&Path>) -> Result<()> {
    let mut strict = lists.to_vec();
    for list in &mut strict {
        list.strictify_scores();
    }
    match output {
        Some(path) => {
            write_trec_run(&strict, tag, path)?;
            let results: usize = strict.iter().map(RankedList::len).sum();
            println!(
                "wrote {} results for {} queries -> {}",
                results,
                strict.len(),
                path.display()
            );
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for list in &strict {
                for entry in &list.entries {
                    writeln!(
                        out,
                        "{} Q0 {} {} {} {}",
                        list.query_id, entry.doc_id, entry.rank, entry.score, tag
                    )
                    .map_err(|e| Error::io("<stdout>", e))?;
                }
            }
        }
    }
    Ok(())
}

fn cmd_index_search(args: IndexSearchArgs) -> Result<()> {
    let (index, params) = read_snapshot(&args.index)?;
    let queries: Vec<Query> = match (&args.queries, &args.query) {
        (Some(path), None) => read_queries(path)?,
        (None, Some(text)) => vec![Query::new("q1", text)],
        _ => unreachable!("clap enforces exactly one query source"),
    };
    if queries.is_empty() {
        return Err(Error::EmptyInput("queries"));
    }
    let lists: Vec<RankedList> = queries
        .iter()
        .map(|q| search(&index, &params, q, args.k))
        .collect();
    emit_run(&lists, &args.tag, args.output.as_deref())
}

/// Use the explicit endpoint if given, else fall back to `env_var`.
fn resolve_endpoint(explicit: Option<String>, env_var: &str, role: &str) -> Result<String> {
    if let Some(endpoint) = explicit {
        return Ok(endpoint);
    }
    match std::env::var(env_var) {
        Ok(endpoint) if !endpoint.is_empty() => Ok(endpoint),
        _ => Err(Error::Config(format!(
            "no {role} endpoint: pass --{} or set {env_var}",
            if role == "dense" { "endpoint" } else { "scorer" }
        ))),
    }
}

fn queries_by_id(queries: Vec<Query>) -> BTreeMap<String, Query> {
    queries.into_iter().map(|q| (q.id.clone(), q)).collect()
}

fn query_for<'a>(by_id: &'a BTreeMap<String, Query>, query_id: &str) -> Result<&'a Query> {
    by_id.get(query_id).ok_or_else(|| {
        Error::Config(format!(
            "run contains query {query_id:?} but the query file does not"
        ))
    })
}

fn cmd_dense_rescore(args: DenseRescoreArgs) -> Result<()> {
    let endpoint = resolve_endpoint(args.endpoint.clone(), ENV_DENSE_ENDPOINT, "dense")?;
    let embedder = embedder_from_endpoint(&endpoint, &args.wire.options())?;
    let corpus = ingest_jsonl(&args.corpus, args.cleanup)?;
    let by_id = queries_by_id(read_queries(&args.queries)?);
    let lists = read_trec_run(&args.run)?;

    let mut rescored = Vec::with_capacity(lists.len());
    for list in &lists {
        let query = query_for(&by_id, &list.query_id)?;
        let out = rescore_one(
            embedder.as_ref(),
            query,
            list,
            &corpus,
            args.k,
            args.truncate_tokens,
            args.fusion_weight,
        )
        .map_err(|e| e.in_stage("dense", &list.query_id))?;
        rescored.push(out);
    }
    emit_run(&rescored, &args.tag, args.output.as_deref())
}

fn rescore_one(
    embedder: &dyn EmbeddingProvider,
    query: &Query,
    candidates: &RankedList,
    corpus: &Corpus,
    k: usize,
    truncate_tokens: usize,
    fusion_weight: f64,
) -> Result<RankedList> {
    // The query is embedded in its own batch so a document sharing its id
    // cannot collide with it.
    let query_batch = vec![(query.id.clone(), query.text.clone())];
    let query_store = fetch_embeddings(embedder, &query_batch, truncate_tokens)?;
    let query_vec = query_store
        .get(&query.id)
        .ok_or_else(|| Error::MissingEmbedding {
            id: query.id.clone(),
        })?;

    let mut doc_batch = Vec::with_capacity(candidates.len());
    for doc_id in candidates.doc_ids() {
        let doc = corpus.get(doc_id).ok_or_else(|| Error::UnknownDoc {
            id: doc_id.to_string(),
            context: "dense rescoring",
        })?;
        doc_batch.push((doc.id.clone(), doc.text.clone()));
    }
    let store = fetch_embeddings(embedder, &doc_batch, truncate_tokens)?;
    dot_rescore_fused(query_vec, candidates, &store, k, fusion_weight)
}

fn cmd_rerank(args: RerankArgs) -> Result<()> {
    let strategy: RerankStrategy = args.strategy.parse()?;
    let corpus = ingest_jsonl(&args.corpus, args.cleanup)?;
    let by_id = queries_by_id(read_queries(&args.queries)?);
    let lists = read_trec_run(&args.run)?;

    if strategy == RerankStrategy::None {
        return emit_run(&lists, &args.tag, args.output.as_deref());
    }

    let endpoint = resolve_endpoint(args.scorer.clone(), ENV_SCORER_ENDPOINT, "scorer")?;
    let mut deps = ScorerDeps::default();
    if let Some(index_path) = &args.index {
        let (index, params) = read_snapshot(index_path)?;
        deps.index = Some(std::sync::Arc::new(index));
        deps.bm25_params = params;
    }
    let opts = args.wire.options();

    let mut reranked = Vec::with_capacity(lists.len());
    match strategy {
        RerankStrategy::Pointwise => {
            let scorer = pointwise_from_endpoint(&endpoint, &deps, &opts)?;
            for list in &lists {
                let query = query_for(&by_id, &list.query_id)?;
                let out = pointwise_rerank(scorer.as_ref(), query, list, &corpus, args.k)
                    .map_err(|e| e.in_stage("rerank", &list.query_id))?;
                reranked.push(out);
            }
        }
        RerankStrategy::SlidingWindow => {
            let scorer = listwise_from_endpoint(&endpoint, &deps, &opts)?;
            let cfg = SlidingWindowConfig {
                window: args.window,
                stride: args.stride,
                passes: args.passes,
            };
            for list in &lists {
                let query = query_for(&by_id, &list.query_id)?;
                let out = sliding_window_rerank(scorer.as_ref(), query, list, &corpus, &cfg)
                    .map_err(|e| e.in_stage("rerank", &list.query_id))?;
                reranked.push(out);
            }
        }
        RerankStrategy::Tournament => {
            let scorer = listwise_from_endpoint(&endpoint, &deps, &opts)?;
            let cfg = TournamentConfig {
                match_size: args.match_size,
                promote: args.promote,
                top_k: args.top_k,
            };
            for list in &lists {
                let query = query_for(&by_id, &list.query_id)?;
                let out = tournament_rerank(scorer.as_ref(), query, list, &corpus, &cfg)
                    .map_err(|e| e.in_stage("rerank", &list.query_id))?;
                reranked.push(out);
            }
        }
        RerankStrategy::None => unreachable!("handled above"),
    }
    emit_run(&reranked, &args.tag, args.output.as_deref())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let runs = read_trec_run(&args.run)?;
    let qrels = QrelSet::from_path(&args.qrels)?;
    let metrics: Vec<MetricSpec> = match &args.metrics {
        Some(spec) => spec
            .split(',')
            .map(|part| part.trim().parse())
            .collect::<Result<_>>()?,
        None => default_metrics(),
    };
    let report = evaluate(&runs, &qrels, &metrics)?;
    if args.json {
        let body =
            serde_json::to_string_pretty(&report).map_err(|e| Error::json("<stdout>", e))?;
        println!("{body}");
    } else {
        print!("{}", report.render());
    }
    Ok(())
}

fn cmd_shift_report(args: ShiftReportArgs) -> Result<()> {
    let mut corpora = Vec::with_capacity(args.corpora.len());
    for path in &args.corpora {
        corpora.push(ingest_jsonl(path, args.cleanup)?);
    }
    let mut cfg = default_shift_analyzer();
    if let Some(max_tokens) = args.max_tokens {
        cfg.max_tokens = Some(max_tokens);
    }
    let report = shift_report(&corpora, &cfg)?;
    if args.json {
        let body =
            serde_json::to_string_pretty(&report).map_err(|e| Error::json("<stdout>", e))?;
        println!("{body}");
    } else {
        print!("{}", report.render());
    }
    Ok(())
}

fn load_pipeline_config(args: &PipelineRunArgs) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    cfg.apply_env_overrides();
    cfg.apply_overrides(&ConfigOverrides {
        dense_endpoint: args.dense_endpoint.clone(),
        scorer_endpoint: args.scorer.clone(),
        run: args.run.clone(),
        jsonl: args.jsonl.clone(),
        trace: args.trace.clone(),
        tag: args.tag.clone(),
    });
    Ok(cfg)
}

fn cmd_pipeline_run(args: PipelineRunArgs) -> Result<()> {
    let cfg = load_pipeline_config(&args)?;
    let outcome = run_pipeline(&cfg)?;
    println!(
        "ran {} queries over {} documents",
        outcome.query_count, outcome.document_count
    );
    for stage in ["bm25", "dense", "rerank"] {
        let calls = outcome.trace.scorer_calls(stage);
        if calls > 0 {
            println!("{stage}: {calls} backend calls");
        }
    }
    println!("run:   {}", outcome.run_path.display());
    println!("jsonl: {}", outcome.jsonl_path.display());
    if let Some(trace) = &outcome.trace_path {
        println!("trace: {}", trace.display());
    }
    Ok(())
}

fn cmd_pipeline_check(args: PipelineRunArgs) -> Result<()> {
    let cfg = load_pipeline_config(&args)?;
    let findings = validate_config(&cfg);
    if findings.is_empty() {
        println!("configuration OK");
        return Ok(());
    }
    for finding in &findings {
        eprintln!("finding: {finding}");
    }
    Err(Error::Config(format!(
        "{} configuration finding(s)",
        findings.len()
    )))
}

/// Map a hash to [0, 1) with 53 bits of precision.
fn unit(hash: u64) -> f64 {
    (hash >> 11) as f64 / (1u64 << 53) as f64
}

fn serve_tokens(text: &str) -> BTreeSet<String> {
    tokenize(text, &AnalyzerConfig::default()).into_iter().collect()
}

/// |query ∩ doc| / |query| over analyzed tokens; 0 for an empty query.
fn overlap_score(query: &str, doc: &str) -> f64 {
    let query_tokens = serve_tokens(query);
    if query_tokens.is_empty() {
        return 0.0;
    }
    let doc_tokens = serve_tokens(doc);
    let shared = query_tokens.intersection(&doc_tokens).count();
    shared as f64 / query_tokens.len() as f64
}

fn to_value<T: serde::Serialize>(value: T) -> Result<serde_json::Value> {
    serde_json::to_value(value).map_err(|e| Error::json("<stdout>", e))
}

fn serve_reply(
    embedder: &MockEmbedder,
    args: &ProviderServeArgs,
    request: WireRequest,
) -> Result<serde_json::Value> {
    match request {
        WireRequest::Embed {
            truncate_tokens,
            items,
        } => to_value(embedder.embed_batch(&items, truncate_tokens)?),
        WireRequest::Score { query, doc } => {
            let prob = if args.overlap {
                overlap_score(&query, &doc)
            } else {
                unit(stable_hash(
                    args.seed,
                    &[b"serve-score", query.as_bytes(), doc.as_bytes()],
                ))
            };
            to_value(ScoreResponse { prob })
        }
        WireRequest::Rank { query, passages } => {
            // Keys depend only on (query, passage text), so the reply is a
            // consistent ordering regardless of input permutation.
            let mut order: Vec<usize> = (1..=passages.len()).collect();
            if args.overlap {
                order.sort_by(|&a, &b| {
                    let (pa, pb) = (&passages[a - 1], &passages[b - 1]);
                    overlap_score(&query, pb)
                        .total_cmp(&overlap_score(&query, pa))
                        .then_with(|| pa.cmp(pb))
                });
            } else {
                order.sort_by(|&a, &b| {
                    let key = |i: usize| {
                        stable_hash(
                            args.seed,
                            &[b"serve-rank", query.as_bytes(), passages[i - 1].as_bytes()],
                        )
                    };
                    key(b).cmp(&key(a)).then_with(|| {
                        passages[a - 1].cmp(&passages[b - 1])
                    })
                });
            }
            let response = if args.raw {
                let body = order
                    .iter()
                    .map(|i| format!("[{i}]"))
                    .collect::<Vec<_>>()
                    .join(" > ");
                RankResponse {
                    permutation: None,
                    raw: Some(body),
                }
            } else {
                RankResponse {
                    permutation: Some(order),
                    raw: None,
                }
            };
            to_value(response)
        }
    }
}

fn cmd_provider_serve(args: ProviderServeArgs) -> Result<()> {
    let embedder = MockEmbedder::new(args.seed, args.dim)?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<WireRequest>(&line) {
            Ok(request) => serve_reply(&embedder, &args, request)?,
            Err(err) => {
                log::warn!("unparseable request: {err}");
                serde_json::json!({ "error": err.to_string() })
            }
        };
        writeln!(out, "{reply}").map_err(|e| Error::io("<stdout>", e))?;
        out.flush().map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}
