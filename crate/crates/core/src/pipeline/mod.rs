//! End-to-end retrieval pipeline: BM25 first stage → optional dense
//! rescoring → optional reranking → backfill to depth → TREC run, JSONL
//! run records, and a per-stage trace.
//!
//! Queries run concurrently through the whole pipeline; outputs are merged
//! by query id, so results are deterministic whenever the configured
//! providers are.

pub mod config;

pub use config::{
    validate_config, ConfigOverrides, DenseConfig, PipelineConfig, RerankStrategy,
    ENV_DENSE_ENDPOINT, ENV_SCORER_ENDPOINT,
};

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::bm25::{build_index, search, BM25Params, InvertedIndex};
use crate::dense::{dot_rescore_fused, fetch_embeddings, EmbeddingProvider};
use crate::providers::{
    embedder_from_endpoint, listwise_from_endpoint, pointwise_from_endpoint, ScorerDeps,
};
use crate::ranking::{extend_below, RankedList};
use crate::rerank::{
    pointwise_rerank, sliding_window_rerank, tournament_rerank, CountingListwise,
    CountingPointwise, ListwiseScorer, PointwiseScorer,
};
use crate::textcorpus::{ingest_jsonl, read_queries, Corpus, Query};
use crate::treceval::{write_run_jsonl, write_trec_run, RunRecord};
use crate::{Error, Result};

/// One stage's output for one query.
#[derive(Debug, Clone, Serialize)]
pub struct StageSnapshot {
    pub stage: String,
    pub millis: u64,
    /// Scorer invocations (listwise/pointwise calls, or wire exchanges for
    /// the dense stage); 0 for stages that call no provider.
    pub scorer_calls: u64,
    pub list: RankedList,
}

/// Every stage snapshot for one query, in execution order.
#[derive(Debug, Clone, Serialize)]
pub struct QueryTrace {
    pub query_id: String,
    pub stages: Vec<StageSnapshot>,
}

/// The full run trace, one entry per query, merged by query id.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageTrace {
    pub queries: Vec<QueryTrace>,
}

impl StageTrace {
    /// Check the containment invariant: before backfill, each stage's
    /// doc-id set must be a subset of the previous stage's. Returns a
    /// description of every violation (empty = invariant holds).
    pub fn containment_violations(&self) -> Vec<String> {
        let mut violations = Vec::new();
        for query in &self.queries {
            for pair in query.stages.windows(2) {
                if pair[1].stage == "backfill" {
                    continue;
                }
                let previous: HashSet<&str> = pair[0].list.doc_ids().collect();
                for doc_id in pair[1].list.doc_ids() {
                    if !previous.contains(doc_id) {
                        violations.push(format!(
                            "query {}: doc {} appears in stage {} but not in {}",
                            query.query_id, doc_id, pair[1].stage, pair[0].stage
                        ));
                    }
                }
            }
        }
        violations
    }

    /// Total scorer calls across all queries for one stage name.
    pub fn scorer_calls(&self, stage: &str) -> u64 {
        self.queries
            .iter()
            .flat_map(|q| &q.stages)
            .filter(|s| s.stage == stage)
            .map(|s| s.scorer_calls)
            .sum()
    }
}

/// Extend a reranked head with the remaining first-stage entries.
///
/// Output order is the reranked entries followed by every first-stage
/// entry not already present, in first-stage order, truncated to `depth`
/// and renumbered from rank 1. Backfilled entries get scores chained
/// strictly below the last reranked score so the result stays a valid
/// descending ranking; an empty `reranked` returns the first stage
/// truncated with its original scores.
pub fn backfill(
    reranked: &RankedList,
    first_stage: &RankedList,
    depth: usize,
) -> Result<RankedList> {
    if !reranked.is_empty()
        && !first_stage.is_empty()
        && reranked.query_id != first_stage.query_id
    {
        return Err(Error::Config(format!(
            "backfill got mismatched queries {:?} and {:?}",
            reranked.query_id, first_stage.query_id
        )));
    }
    let first_ids: HashSet<&str> = first_stage.doc_ids().collect();
    for doc_id in reranked.doc_ids() {
        if !first_ids.contains(doc_id) {
            return Err(Error::NotASubset {
                doc_id: doc_id.to_string(),
            });
        }
    }
    if reranked.is_empty() {
        return Ok(first_stage.clone().truncated(depth));
    }

    let head_ids: HashSet<&str> = reranked.doc_ids().collect();
    let mut scored: Vec<(String, crate::Score)> = reranked
        .entries
        .iter()
        .map(|e| (e.doc_id.clone(), e.score))
        .collect();
    let tail: Vec<String> = first_stage
        .entries
        .iter()
        .filter(|e| !head_ids.contains(e.doc_id.as_str()))
        .map(|e| e.doc_id.clone())
        .collect();
    extend_below(&mut scored, tail, 0.0);
    scored.truncate(depth);
    RankedList::from_sorted(reranked.query_id.as_str(), scored)
}

/// What `run_pipeline` produced and where it wrote it.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub run_path: PathBuf,
    pub jsonl_path: PathBuf,
    pub trace_path: Option<PathBuf>,
    pub trace: StageTrace,
    /// Final per-query lists exactly as written to the TREC run
    /// (scores strictified), sorted by query id.
    pub lists: Vec<RankedList>,
    pub document_count: usize,
    pub query_count: usize,
}

enum RerankEngine {
    None,
    Pointwise(Box<dyn PointwiseScorer>),
    Listwise(Box<dyn ListwiseScorer>),
}

struct QueryContext<'a> {
    cfg: &'a PipelineConfig,
    corpus: &'a Corpus,
    index: &'a InvertedIndex,
    params: BM25Params,
    embedder: Option<&'a dyn EmbeddingProvider>,
    engine: &'a RerankEngine,
    strategy: RerankStrategy,
}

fn push_stage(
    stages: &mut Vec<StageSnapshot>,
    name: &str,
    list: &RankedList,
    started: Instant,
    scorer_calls: u64,
) {
    stages.push(StageSnapshot {
        stage: name.to_string(),
        millis: started.elapsed().as_millis() as u64,
        scorer_calls,
        list: list.clone(),
    });
}

fn dense_stage(
    embedder: &dyn EmbeddingProvider,
    cfg: &DenseConfig,
    corpus: &Corpus,
    query: &Query,
    candidates: &RankedList,
) -> Result<RankedList> {
    let query_items = vec![(query.id.clone(), query.text.clone())];
    let query_store = fetch_embeddings(embedder, &query_items, cfg.truncate_tokens)?;
    let query_vec = query_store
        .get(&query.id)
        .ok_or_else(|| Error::MissingEmbedding {
            id: query.id.clone(),
        })?;

    let mut doc_items = Vec::with_capacity(candidates.len());
    for doc_id in candidates.doc_ids() {
        let doc = corpus.get(doc_id).ok_or_else(|| Error::UnknownDoc {
            id: doc_id.to_string(),
            context: "dense rescoring",
        })?;
        doc_items.push((doc.id.clone(), doc.text.clone()));
    }
    let store = fetch_embeddings(embedder, &doc_items, cfg.truncate_tokens)?;
    dot_rescore_fused(
        query_vec,
        candidates,
        &store,
        cfg.second_stage_k,
        cfg.fusion_weight,
    )
}

fn run_query(ctx: &QueryContext<'_>, query: &Query) -> Result<(RankedList, QueryTrace)> {
    let mut stages = Vec::new();

    let started = Instant::now();
    let first_stage = search(ctx.index, &ctx.params, query, ctx.cfg.bm25.first_stage_k);
    push_stage(&mut stages, "bm25", &first_stage, started, 0);

    let mut current = first_stage.clone();

    if let (Some(embedder), Some(dense_cfg)) = (ctx.embedder, ctx.cfg.dense.as_ref()) {
        if !current.is_empty() {
            let started = Instant::now();
            // One exchange for the query plus one per document batch.
            let exchanges = 1 + (current.len() as u64).div_ceil(64);
            current = dense_stage(embedder, dense_cfg, ctx.corpus, query, &current)
                .map_err(|e| e.in_stage("dense", &query.id))?;
            push_stage(&mut stages, "dense", &current, started, exchanges);
        }
    }

    if !current.is_empty() {
        match ctx.engine {
            RerankEngine::None => {}
            RerankEngine::Pointwise(scorer) => {
                let started = Instant::now();
                let counting = CountingPointwise::new(&**scorer);
                let reranked =
                    pointwise_rerank(&counting, query, &current, ctx.corpus, ctx.cfg.rerank.k)
                        .map_err(|e| e.in_stage("rerank", &query.id))?;
                push_stage(
                    &mut stages,
                    "rerank",
                    &reranked,
                    started,
                    counting.calls() as u64,
                );
                current = reranked;
            }
            RerankEngine::Listwise(scorer) => {
                let started = Instant::now();
                let counting = CountingListwise::new(&**scorer);
                let reranked = match ctx.strategy {
                    RerankStrategy::SlidingWindow => sliding_window_rerank(
                        &counting,
                        query,
                        &current,
                        ctx.corpus,
                        &ctx.cfg.rerank.window_config(),
                    ),
                    RerankStrategy::Tournament => tournament_rerank(
                        &counting,
                        query,
                        &current,
                        ctx.corpus,
                        &ctx.cfg.rerank.tournament_config(),
                    ),
                    _ => unreachable!("listwise engine implies a listwise strategy"),
                }
                .map_err(|e| e.in_stage("rerank", &query.id))?;
                push_stage(
                    &mut stages,
                    "rerank",
                    &reranked,
                    started,
                    counting.calls() as u64,
                );
                current = reranked;
            }
        }
    }

    let final_list = if ctx.cfg.backfill.enabled {
        let started = Instant::now();
        let filled = backfill(&current, &first_stage, ctx.cfg.backfill_depth())
            .map_err(|e| e.in_stage("backfill", &query.id))?;
        push_stage(&mut stages, "backfill", &filled, started, 0);
        filled
    } else {
        current
    };

    Ok((
        final_list,
        QueryTrace {
            query_id: query.id.clone(),
            stages,
        },
    ))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    Ok(())
}

/// Execute the configured pipeline over every query and write the TREC
/// run, the JSONL run records, and (when configured) the stage trace.
///
/// The configuration must validate cleanly; any [`validate_config`]
/// finding aborts before any work happens. Stage failures abort the whole
/// run, wrapped with the stage name and query id. Per-window scorer
/// failures inside reranking degrade without failing, per the rerank
/// stage's contract.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let findings = validate_config(cfg);
    if !findings.is_empty() {
        return Err(Error::Config(format!(
            "invalid pipeline configuration: {}",
            findings.join("; ")
        )));
    }

    let corpus = ingest_jsonl(&cfg.input.corpus, cfg.input.cleanup)?;
    let queries = read_queries(&cfg.input.queries)?;
    if queries.is_empty() {
        return Err(Error::EmptyInput("queries"));
    }

    let index = Arc::new(build_index(&corpus, &cfg.analyzer)?);
    let params = cfg.bm25.params();
    let wire_opts = cfg.provider.wire_options();

    let embedder: Option<Box<dyn EmbeddingProvider>> = match &cfg.dense {
        Some(dense) => Some(embedder_from_endpoint(&dense.endpoint, &wire_opts)?),
        None => None,
    };
    let strategy = cfg.rerank.strategy()?;
    let deps = ScorerDeps {
        index: Some(Arc::clone(&index)),
        bm25_params: params,
    };
    let scorer_endpoint = cfg.rerank.scorer.as_deref().unwrap_or_default();
    let engine = match strategy {
        RerankStrategy::None => RerankEngine::None,
        RerankStrategy::Pointwise => RerankEngine::Pointwise(pointwise_from_endpoint(
            scorer_endpoint,
            &deps,
            &wire_opts,
        )?),
        RerankStrategy::SlidingWindow | RerankStrategy::Tournament => RerankEngine::Listwise(
            listwise_from_endpoint(scorer_endpoint, &deps, &wire_opts)?,
        ),
    };

    let ctx = QueryContext {
        cfg,
        corpus: &corpus,
        index: &index,
        params,
        embedder: embedder.as_deref(),
        engine: &engine,
        strategy,
    };

    let mut results: Vec<(RankedList, QueryTrace)> = queries
        .par_iter()
        .map(|query| run_query(&ctx, query))
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| a.0.query_id.cmp(&b.0.query_id));

    let query_texts: BTreeMap<&str, &str> = queries
        .iter()
        .map(|q| (q.id.as_str(), q.text.as_str()))
        .collect();

    let mut trec_lists = Vec::with_capacity(results.len());
    let mut records = Vec::with_capacity(results.len());
    let mut trace = StageTrace::default();
    for (list, query_trace) in results {
        let text = query_texts
            .get(list.query_id.as_str())
            .copied()
            .unwrap_or("");
        records.push(RunRecord::from_ranked(&list, text, Some(&corpus), None));
        let mut strict = list;
        strict.strictify_scores();
        trec_lists.push(strict);
        trace.queries.push(query_trace);
    }

    let violations = trace.containment_violations();
    debug_assert!(violations.is_empty(), "{violations:?}");

    ensure_parent(&cfg.output.run)?;
    write_trec_run(&trec_lists, &cfg.output.tag, &cfg.output.run)?;
    ensure_parent(&cfg.output.jsonl)?;
    write_run_jsonl(&records, &cfg.output.jsonl)?;
    if let Some(path) = &cfg.output.trace {
        ensure_parent(path)?;
        let json = serde_json::to_string_pretty(&trace)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
    }

    Ok(PipelineOutcome {
        run_path: cfg.output.run.clone(),
        jsonl_path: cfg.output.jsonl.clone(),
        trace_path: cfg.output.trace.clone(),
        trace,
        lists: trec_lists,
        document_count: corpus.len(),
        query_count: queries.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treceval::read_trec_run;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Write as _;

    fn list(query_id: &str, ids: &[&str]) -> RankedList {
        let n = ids.len();
        RankedList::from_sorted(
            query_id,
            ids.iter()
                .enumerate()
                .map(|(i, id)| (id.to_string(), (n - i) as f64))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn backfill_interleaves_in_first_stage_order() {
        let reranked = list("q", &["B", "A", "C"]);
        let first = list("q", &["A", "B", "C", "D", "E", "F"]);
        let out = backfill(&reranked, &first, 6).unwrap();
        let ids: Vec<&str> = out.doc_ids().collect();
        assert_eq!(ids, ["B", "A", "C", "D", "E", "F"]);
        out.validate().unwrap();
        // Backfilled scores chain strictly below the reranked head.
        for pair in out.entries.windows(2) {
            assert!(pair[0].score > pair[1].score);
        }
        assert_eq!(out.entries[0].rank, 1);
        assert_eq!(out.entries[5].rank, 6);
    }

    #[test]
    fn backfill_of_empty_reranked_is_truncated_first_stage() {
        let reranked = RankedList::from_sorted("q", vec![]).unwrap();
        let first = list("q", &["A", "B", "C", "D"]);
        let out = backfill(&reranked, &first, 3).unwrap();
        let ids: Vec<&str> = out.doc_ids().collect();
        assert_eq!(ids, ["A", "B", "C"]);
        // Original first-stage scores survive untouched.
        assert_eq!(out.entries[0].score, first.entries[0].score);
    }

    #[test]
    fn backfill_rejects_non_subset() {
        let reranked = list("q", &["X"]);
        let first = list("q", &["A", "B"]);
        match backfill(&reranked, &first, 2) {
            Err(Error::NotASubset { doc_id }) => assert_eq!(doc_id, "X"),
            other => panic!("expected NotASubset, got {other:?}"),
        }
    }

    #[test]
    fn backfill_rejects_mismatched_queries() {
        let reranked = list("q1", &["A"]);
        let first = list("q2", &["A", "B"]);
        assert!(backfill(&reranked, &first, 2).is_err());
    }

    #[test]
    fn backfill_set_property_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for trial in 0..200 {
            let n = rng.gen_range(1..=60);
            let depth = rng.gen_range(1..=n);
            let first_ids: Vec<String> = (0..n).map(|i| format!("d{i:03}")).collect();
            let first = RankedList::from_sorted(
                "q",
                first_ids
                    .iter()
                    .enumerate()
                    .map(|(i, id)| (id.clone(), (n - i) as f64))
                    .collect(),
            )
            .unwrap();
            // Rerank candidates always come from the head of the first
            // stage, within depth — as the pipeline produces them.
            let pool = rng.gen_range(0..=depth);
            let mut reranked_ids: Vec<String> = first_ids[..pool].to_vec();
            reranked_ids.shuffle(&mut rng);
            let m = reranked_ids.len();
            let reranked = RankedList::from_sorted(
                "q",
                reranked_ids
                    .into_iter()
                    .enumerate()
                    .map(|(i, id)| (id, (m - i) as f64))
                    .collect(),
            )
            .unwrap();

            let out = backfill(&reranked, &first, depth).unwrap();
            out.validate().unwrap();
            assert_eq!(out.len(), depth.min(n), "trial {trial}");
            let got: HashSet<&str> = out.doc_ids().collect();
            let want: HashSet<&str> =
                first_ids[..depth].iter().map(String::as_str).collect();
            assert_eq!(got, want, "trial {trial}");
        }
    }

    struct ToyFiles {
        _dir: tempfile::TempDir,
        corpus: PathBuf,
        queries: PathBuf,
        qrels: PathBuf,
        out: PathBuf,
    }

    /// 30 documents, each carrying a unique marker token plus one of four
    /// shared group tokens; one query per marker for the first 8 markers,
    /// also naming the group so BM25 retrieves the whole group (~8 docs)
    /// with the marker document on top. Qrels plant doc i as the sole
    /// relevant hit for query i.
    fn toy_files() -> ToyFiles {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus.jsonl");
        let queries = dir.path().join("queries.tsv");
        let qrels = dir.path().join("qrels.txt");
        let out = dir.path().join("out");

        let mut f = std::fs::File::create(&corpus).unwrap();
        for i in 0..30 {
            writeln!(
                f,
                "{}",
                serde_json::json!({
                    "id": format!("doc{i:02}"),
                    "text": format!("marker{i:02} group{} shared filler text body", i % 4),
                })
            )
            .unwrap();
        }
        let mut f = std::fs::File::create(&queries).unwrap();
        for i in 0..8 {
            writeln!(f, "q{i:02}\tmarker{i:02} group{}", i % 4).unwrap();
        }
        let mut f = std::fs::File::create(&qrels).unwrap();
        for i in 0..8 {
            writeln!(f, "q{i:02} 0 doc{i:02} 2").unwrap();
        }
        ToyFiles {
            _dir: dir,
            corpus,
            queries,
            qrels,
            out,
        }
    }

    fn toy_config(files: &ToyFiles) -> PipelineConfig {
        let mut cfg: PipelineConfig = toml::from_str(&format!(
            r#"
                [input]
                corpus = {corpus:?}
                queries = {queries:?}

                [bm25]
                first_stage_k = 20

                [output]
                run = {run:?}
                jsonl = {jsonl:?}
                trace = {trace:?}
                tag = "toytest"
            "#,
            corpus = files.corpus,
            queries = files.queries,
            run = files.out.join("run.trec"),
            jsonl = files.out.join("run.jsonl"),
            trace = files.out.join("trace.json"),
        ))
        .unwrap();
        cfg.analyzer.stem = false;
        cfg
    }

    #[test]
    fn strategy_none_without_dense_is_first_stage_passthrough() {
        let files = toy_files();
        let cfg = toy_config(&files);
        let outcome = run_pipeline(&cfg).unwrap();
        assert_eq!(outcome.query_count, 8);
        assert_eq!(outcome.document_count, 30);
        assert!(outcome.trace.containment_violations().is_empty());

        // Every query's top hit is its marker document, straight from BM25.
        for list in &outcome.lists {
            let qnum = &list.query_id[1..];
            assert_eq!(list.entries[0].doc_id, format!("doc{qnum}"));
        }

        // The run file round-trips to the same lists.
        let reread = read_trec_run(&outcome.run_path).unwrap();
        assert_eq!(reread.len(), outcome.lists.len());
        for (a, b) in reread.iter().zip(&outcome.lists) {
            assert_eq!(a.query_id, b.query_id);
            let ids_a: Vec<&str> = a.doc_ids().collect();
            let ids_b: Vec<&str> = b.doc_ids().collect();
            assert_eq!(ids_a, ids_b);
        }
    }

    #[test]
    fn full_stack_run_is_deterministic_and_puts_relevant_docs_first() {
        let files = toy_files();
        let mut cfg = toy_config(&files);
        cfg.dense = Some(DenseConfig {
            endpoint: "mock:5:16".to_string(),
            second_stage_k: 10,
            truncate_tokens: 64,
            fusion_weight: 0.0,
        });
        cfg.rerank.strategy = "tournament".to_string();
        cfg.rerank.scorer = Some(format!("oracle:{}", files.qrels.display()));
        cfg.rerank.match_size = 4;
        cfg.rerank.promote = 2;
        cfg.rerank.top_k = 5;

        let first = run_pipeline(&cfg).unwrap();
        assert!(first.trace.containment_violations().is_empty());
        for list in &first.lists {
            let qnum = &list.query_id[1..];
            assert_eq!(
                list.entries[0].doc_id,
                format!("doc{qnum}"),
                "oracle rerank must put the planted doc on top for {}",
                list.query_id
            );
            list.validate().unwrap();
        }
        // The trace records rerank scorer activity.
        assert!(first.trace.scorer_calls("rerank") > 0);

        let run_a = std::fs::read(&first.run_path).unwrap();
        let jsonl_a = std::fs::read(&first.jsonl_path).unwrap();
        let second = run_pipeline(&cfg).unwrap();
        let run_b = std::fs::read(&second.run_path).unwrap();
        let jsonl_b = std::fs::read(&second.jsonl_path).unwrap();
        assert_eq!(run_a, run_b, "TREC run must be byte-identical on rerun");
        assert_eq!(jsonl_a, jsonl_b, "JSONL records must be byte-identical");
        assert!(first
            .trace_path
            .as_ref()
            .is_some_and(|p| p.exists()));
    }

    #[test]
    fn invalid_config_aborts_before_any_work() {
        let files = toy_files();
        let mut cfg = toy_config(&files);
        cfg.rerank.strategy = "tournament".to_string(); // no scorer endpoint
        match run_pipeline(&cfg) {
            Err(Error::Config(msg)) => assert!(msg.contains("scorer"), "{msg}"),
            other => panic!("expected Config error, got {other:?}"),
        }
        assert!(!files.out.join("run.trec").exists());
    }

    #[test]
    fn stage_failures_name_the_stage_and_query() {
        let files = toy_files();
        let mut cfg = toy_config(&files);
        cfg.rerank.strategy = "pointwise".to_string();
        cfg.rerank.k = 5;
        // Oracle against a qrels file that exists but lacks these queries
        // still works (score 0); to force a stage failure use a scorer
        // whose probabilities are out of range.
        cfg.rerank.scorer = Some("constant:1.5".to_string());
        match run_pipeline(&cfg) {
            Err(Error::Stage {
                stage, query_id, ..
            }) => {
                assert_eq!(stage, "rerank");
                assert!(query_id.starts_with('q'));
            }
            other => panic!("expected Stage error, got {other:?}"),
        }
    }
}
