//! Pipeline configuration: a versioned TOML schema, environment and CLI
//! override layering, and a preflight validator that reports every problem
//! it can find instead of stopping at the first.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bm25::BM25Params;
use crate::providers::{EndpointSpec, WireOptions};
use crate::rerank::{SlidingWindowConfig, TournamentConfig};
use crate::textcorpus::AnalyzerConfig;
use crate::{Error, Result, Score};

/// Environment variable overriding the dense embedder endpoint.
pub const ENV_DENSE_ENDPOINT: &str = "DRIFTRANK_DENSE_ENDPOINT";
/// Environment variable overriding the rerank scorer endpoint.
pub const ENV_SCORER_ENDPOINT: &str = "DRIFTRANK_SCORER_ENDPOINT";

const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}
fn default_true() -> bool {
    true
}

/// Top-level pipeline configuration. Loaded from TOML; value precedence is
/// file < environment variables < explicit CLI overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub input: InputConfig,
    #[serde(default)]
    pub analyzer: AnalyzerConfig,
    #[serde(default)]
    pub bm25: Bm25Config,
    /// Optional second stage; omit the table to skip dense rescoring.
    #[serde(default)]
    pub dense: Option<DenseConfig>,
    #[serde(default)]
    pub rerank: RerankSection,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub backfill: BackfillConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// JSONL corpus: one `{"id": …, "text": …}` object per line.
    pub corpus: PathBuf,
    /// Queries as JSONL (`{"id","text"}`) or TSV (`id<TAB>text`).
    pub queries: PathBuf,
    /// Run document cleanup during ingestion.
    #[serde(default = "default_true")]
    pub cleanup: bool,
}

fn default_k1() -> Score {
    0.9
}
fn default_b() -> Score {
    0.4
}
fn default_first_stage_k() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Config {
    #[serde(default = "default_k1")]
    pub k1: Score,
    #[serde(default = "default_b")]
    pub b: Score,
    /// How many documents the first stage retrieves per query.
    #[serde(default = "default_first_stage_k")]
    pub first_stage_k: usize,
}

impl Default for Bm25Config {
    fn default() -> Self {
        Bm25Config {
            k1: default_k1(),
            b: default_b(),
            first_stage_k: default_first_stage_k(),
        }
    }
}

impl Bm25Config {
    pub fn params(&self) -> BM25Params {
        BM25Params {
            k1: self.k1,
            b: self.b,
        }
    }
}

fn default_second_stage_k() -> usize {
    100
}
fn default_truncate_tokens() -> usize {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseConfig {
    /// Embedding endpoint (see the endpoint grammar in `providers`).
    pub endpoint: String,
    /// How many candidates survive dense rescoring.
    #[serde(default = "default_second_stage_k")]
    pub second_stage_k: usize,
    /// Token budget passed to the embedder per item.
    #[serde(default = "default_truncate_tokens")]
    pub truncate_tokens: usize,
    /// Linear weight on first-stage scores; 0 = pure dense (default).
    #[serde(default)]
    pub fusion_weight: Score,
}

impl DenseConfig {
    pub fn with_endpoint(endpoint: impl Into<String>) -> Self {
        DenseConfig {
            endpoint: endpoint.into(),
            second_stage_k: default_second_stage_k(),
            truncate_tokens: default_truncate_tokens(),
            fusion_weight: 0.0,
        }
    }
}

/// Final-stage reranking method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RerankStrategy {
    None,
    Pointwise,
    SlidingWindow,
    Tournament,
}

impl FromStr for RerankStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RerankStrategy::None),
            "pointwise" => Ok(RerankStrategy::Pointwise),
            "sliding_window" => Ok(RerankStrategy::SlidingWindow),
            "tournament" => Ok(RerankStrategy::Tournament),
            other => Err(Error::Config(format!(
                "unknown rerank strategy {other:?}; expected one of \
                 none, pointwise, sliding_window, tournament"
            ))),
        }
    }
}

impl fmt::Display for RerankStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RerankStrategy::None => "none",
            RerankStrategy::Pointwise => "pointwise",
            RerankStrategy::SlidingWindow => "sliding_window",
            RerankStrategy::Tournament => "tournament",
        })
    }
}

fn default_strategy() -> String {
    "none".to_string()
}
fn default_pointwise_k() -> usize {
    30
}
fn default_window() -> usize {
    20
}
fn default_stride() -> usize {
    10
}
fn default_passes() -> usize {
    1
}
fn default_match_size() -> usize {
    5
}
fn default_promote() -> usize {
    2
}
fn default_top_k() -> usize {
    10
}

/// The `[rerank]` table. Strategy-specific knobs live side by side; only
/// the ones for the chosen strategy are consulted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankSection {
    /// `none`, `pointwise`, `sliding_window`, or `tournament`. Kept as a
    /// string so the validator can report unknown names as findings.
    #[serde(default = "default_strategy")]
    pub strategy: String,
    /// Scorer endpoint; required unless strategy is `none`.
    #[serde(default)]
    pub scorer: Option<String>,
    /// Pointwise: how many head candidates get scored.
    #[serde(default = "default_pointwise_k")]
    pub k: usize,
    /// Sliding window: window size.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Sliding window: stride.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Sliding window: number of passes.
    #[serde(default = "default_passes")]
    pub passes: usize,
    /// Tournament: match size m.
    #[serde(default = "default_match_size")]
    pub match_size: usize,
    /// Tournament: promotions per match r.
    #[serde(default = "default_promote")]
    pub promote: usize,
    /// Tournament: how many winners to extract.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

impl Default for RerankSection {
    fn default() -> Self {
        RerankSection {
            strategy: default_strategy(),
            scorer: None,
            k: default_pointwise_k(),
            window: default_window(),
            stride: default_stride(),
            passes: default_passes(),
            match_size: default_match_size(),
            promote: default_promote(),
            top_k: default_top_k(),
        }
    }
}

impl RerankSection {
    pub fn strategy(&self) -> Result<RerankStrategy> {
        self.strategy.parse()
    }

    pub fn window_config(&self) -> SlidingWindowConfig {
        SlidingWindowConfig {
            window: self.window,
            stride: self.stride,
            passes: self.passes,
        }
    }

    pub fn tournament_config(&self) -> TournamentConfig {
        TournamentConfig {
            match_size: self.match_size,
            promote: self.promote,
            top_k: self.top_k,
        }
    }
}

fn default_pool() -> usize {
    1
}
fn default_timeout_secs() -> u64 {
    30
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Subprocess pool size for `exec:` endpoints.
    #[serde(default = "default_pool")]
    pub pool: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            pool: default_pool(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

impl ProviderConfig {
    pub fn wire_options(&self) -> WireOptions {
        WireOptions {
            pool: self.pool,
            timeout: Duration::from_secs(self.timeout_secs),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackfillConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Output depth; defaults to `bm25.first_stage_k`.
    #[serde(default)]
    pub depth: Option<usize>,
}

impl Default for BackfillConfig {
    fn default() -> Self {
        BackfillConfig {
            enabled: true,
            depth: None,
        }
    }
}

fn default_tag() -> String {
    "driftrank".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// TREC run file path.
    pub run: PathBuf,
    /// JSONL run-record path.
    pub jsonl: PathBuf,
    /// Optional stage-trace JSON path.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Run tag written into column six of the TREC file.
    #[serde(default = "default_tag")]
    pub tag: String,
}

/// Explicit overrides, highest precedence (CLI flags map here).
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub dense_endpoint: Option<String>,
    pub scorer_endpoint: Option<String>,
    pub run: Option<PathBuf>,
    pub jsonl: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub tag: Option<String>,
}

impl PipelineConfig {
    /// Parse a TOML config file.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Apply `DRIFTRANK_DENSE_ENDPOINT` / `DRIFTRANK_SCORER_ENDPOINT` from
    /// the process environment.
    pub fn apply_env_overrides(&mut self) {
        self.apply_env_from(|key| std::env::var(key).ok());
    }

    /// [`apply_env_overrides`] with an injectable environment, for tests.
    pub fn apply_env_from(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(endpoint) = get(ENV_DENSE_ENDPOINT) {
            match &mut self.dense {
                Some(dense) => dense.endpoint = endpoint,
                None => self.dense = Some(DenseConfig::with_endpoint(endpoint)),
            }
        }
        if let Some(endpoint) = get(ENV_SCORER_ENDPOINT) {
            self.rerank.scorer = Some(endpoint);
        }
    }

    /// Apply explicit overrides (typically CLI flags).
    pub fn apply_overrides(&mut self, overrides: &ConfigOverrides) {
        if let Some(endpoint) = &overrides.dense_endpoint {
            match &mut self.dense {
                Some(dense) => dense.endpoint = endpoint.clone(),
                None => self.dense = Some(DenseConfig::with_endpoint(endpoint.clone())),
            }
        }
        if let Some(endpoint) = &overrides.scorer_endpoint {
            self.rerank.scorer = Some(endpoint.clone());
        }
        if let Some(run) = &overrides.run {
            self.output.run = run.clone();
        }
        if let Some(jsonl) = &overrides.jsonl {
            self.output.jsonl = jsonl.clone();
        }
        if let Some(trace) = &overrides.trace {
            self.output.trace = Some(trace.clone());
        }
        if let Some(tag) = &overrides.tag {
            self.output.tag = tag.clone();
        }
    }

    /// Candidate-pool size entering the rerank stage.
    pub fn rerank_pool(&self) -> usize {
        self.dense
            .as_ref()
            .map(|d| d.second_stage_k)
            .unwrap_or(self.bm25.first_stage_k)
    }

    /// Effective backfill depth.
    pub fn backfill_depth(&self) -> usize {
        self.backfill.depth.unwrap_or(self.bm25.first_stage_k)
    }
}

fn can_embed(spec: &EndpointSpec) -> bool {
    matches!(
        spec,
        EndpointSpec::Mock { .. } | EndpointSpec::Exec { .. } | EndpointSpec::Http { .. }
    )
}

fn can_score_pointwise(spec: &EndpointSpec) -> bool {
    !matches!(
        spec,
        EndpointSpec::Mock { .. }
            | EndpointSpec::Identity
            | EndpointSpec::PositionNoise { .. }
    )
}

fn can_rank_listwise(spec: &EndpointSpec) -> bool {
    !matches!(spec, EndpointSpec::Mock { .. })
}

/// Preflight check. Returns every violation found; an empty list means the
/// configuration is runnable. Never touches the filesystem or network.
pub fn validate_config(cfg: &PipelineConfig) -> Vec<String> {
    let mut findings = Vec::new();

    if cfg.schema_version != SCHEMA_VERSION {
        findings.push(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        ));
    }
    if cfg.input.corpus.as_os_str().is_empty() {
        findings.push("input.corpus path is empty".to_string());
    }
    if cfg.input.queries.as_os_str().is_empty() {
        findings.push("input.queries path is empty".to_string());
    }

    if cfg.bm25.k1.is_nan() || cfg.bm25.k1 < 0.0 {
        findings.push(format!("bm25.k1 = {} must be ≥ 0", cfg.bm25.k1));
    }
    if !(0.0..=1.0).contains(&cfg.bm25.b) {
        findings.push(format!("bm25.b = {} must be in [0, 1]", cfg.bm25.b));
    }
    if cfg.bm25.first_stage_k == 0 {
        findings.push("bm25.first_stage_k must be positive".to_string());
    }

    if let Some(dense) = &cfg.dense {
        if dense.second_stage_k == 0 {
            findings.push("dense.second_stage_k must be positive".to_string());
        }
        if dense.second_stage_k > cfg.bm25.first_stage_k {
            findings.push(format!(
                "dense.second_stage_k ({}) exceeds bm25.first_stage_k ({})",
                dense.second_stage_k, cfg.bm25.first_stage_k
            ));
        }
        if dense.truncate_tokens == 0 {
            findings.push("dense.truncate_tokens must be positive".to_string());
        }
        if !dense.fusion_weight.is_finite() {
            findings.push("dense.fusion_weight must be finite".to_string());
        }
        match dense.endpoint.parse::<EndpointSpec>() {
            Err(e) => findings.push(format!("dense.endpoint: {e}")),
            Ok(spec) if !can_embed(&spec) => findings.push(format!(
                "dense.endpoint {:?} cannot serve embeddings",
                dense.endpoint
            )),
            Ok(_) => {}
        }
    }

    match cfg.rerank.strategy() {
        Err(e) => findings.push(e.to_string()),
        Ok(RerankStrategy::None) => {}
        Ok(strategy) => {
            let pool = cfg.rerank_pool();
            match cfg.rerank.scorer.as_deref() {
                None | Some("") => findings.push(format!(
                    "rerank strategy {strategy} needs a rerank.scorer endpoint"
                )),
                Some(endpoint) => match endpoint.parse::<EndpointSpec>() {
                    Err(e) => findings.push(format!("rerank.scorer: {e}")),
                    Ok(spec) => {
                        let capable = match strategy {
                            RerankStrategy::Pointwise => can_score_pointwise(&spec),
                            _ => can_rank_listwise(&spec),
                        };
                        if !capable {
                            findings.push(format!(
                                "rerank.scorer {endpoint:?} cannot serve strategy {strategy}"
                            ));
                        }
                    }
                },
            }
            match strategy {
                RerankStrategy::Pointwise => {
                    if cfg.rerank.k == 0 {
                        findings.push("rerank.k must be positive".to_string());
                    }
                    if cfg.rerank.k > pool {
                        findings.push(format!(
                            "rerank.k ({}) exceeds the candidate pool ({pool})",
                            cfg.rerank.k
                        ));
                    }
                }
                RerankStrategy::SlidingWindow => {
                    if let Err(e) = cfg.rerank.window_config().validate() {
                        findings.push(e.to_string());
                    }
                }
                RerankStrategy::Tournament => {
                    if let Err(e) = cfg.rerank.tournament_config().validate() {
                        findings.push(e.to_string());
                    }
                    if cfg.rerank.top_k > pool {
                        findings.push(format!(
                            "rerank.top_k ({}) exceeds the candidate pool ({pool})",
                            cfg.rerank.top_k
                        ));
                    }
                }
                RerankStrategy::None => unreachable!(),
            }
        }
    }

    if cfg.provider.pool == 0 {
        findings.push("provider.pool must be positive".to_string());
    }
    if cfg.provider.timeout_secs == 0 {
        findings.push("provider.timeout_secs must be positive".to_string());
    }

    if cfg.backfill.enabled {
        if let Some(0) = cfg.backfill.depth {
            findings.push("backfill.depth must be positive when enabled".to_string());
        }
    }

    if cfg.output.run.as_os_str().is_empty() {
        findings.push("output.run path is empty".to_string());
    }
    if cfg.output.jsonl.as_os_str().is_empty() {
        findings.push("output.jsonl path is empty".to_string());
    }
    if cfg.output.tag.is_empty() || cfg.output.tag.contains(char::is_whitespace) {
        findings.push(format!(
            "output.tag {:?} must be non-empty with no whitespace",
            cfg.output.tag
        ));
    }

    findings
}
