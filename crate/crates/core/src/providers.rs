//! Bundled scoring and embedding providers, plus the endpoint grammar
//! that selects between them and external wire backends.
//!
//! Endpoint strings:
//!
//! | endpoint                  | kind              | behaviour |
//! |---------------------------|-------------------|-----------|
//! | `oracle:<qrels-path>`     | scorer (both)     | relevance grades from a qrels file; pointwise prob = grade / max grade |
//! | `constant:<p>`            | scorer (both)     | every document scores `p`; listwise = identity |
//! | `bm25`                    | scorer (both)     | BM25 against a supplied index, rescaled `s/(1+s)` pointwise |
//! | `noise:<seed>`            | scorer (both)     | seeded hash noise; permutation-invariant |
//! | `identity`                | scorer (listwise) | always returns the presented order (position-biased by construction) |
//! | `posnoise:<seed>:<w>`     | scorer (listwise) | hash noise plus weight `w` on presentation position |
//! | `mock:<seed>:<dim>`       | embedder          | seeded hash vectors in `[-1,1)` |
//! | `exec:<command>`          | any               | subprocess speaking the wire protocol on stdio |
//! | `http://…` / `https://…`  | any               | HTTP POST wire protocol |
//!
//! All in-process providers are deterministic: randomness comes from a
//! fixed-constant hash chain, never from global state.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use crate::bm25::{bm25_score, BM25Params, InvertedIndex};
use crate::dense::EmbeddingProvider;
use crate::rerank::{parse_permutation, DocRef, ListwiseScorer, Permutation, PointwiseScorer};
use crate::textcorpus::{tokenize, Query};
use crate::treceval::QrelSet;
use crate::wire::{
    EmbedItem, EmbedResponse, HttpTransport, SubprocessTransport, Transport, TransportPool,
    WireClient, WireVector,
};
use crate::{Error, Result, Score};

// --- deterministic hashing ------------------------------------------------

/// SplitMix64 finaliser — a fixed bit-mixing function, stable across
/// platforms and releases (unlike `DefaultHasher`), which the mock
/// providers chain over their inputs.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash `parts` under `seed`. Part boundaries are significant.
pub fn stable_hash(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = splitmix64(seed ^ 0xD6E8_FEB8_6659_FD93);
    for part in parts {
        for &b in *part {
            h = splitmix64(h ^ u64::from(b));
        }
        h = splitmix64(h ^ 0xFF00_0000_0000_00FF);
    }
    h
}

/// Map a hash to `[0,1)` with 53 bits of precision.
fn unit_float(h: u64) -> Score {
    (h >> 11) as Score / (1u64 << 53) as Score
}

// --- in-process scorers ---------------------------------------------------

/// Ground-truth scorer backed by relevance judgments. Pointwise
/// probability is the judged grade scaled by the global maximum grade;
/// listwise ranks by grade descending with doc_id breaking ties. Unjudged
/// documents grade 0.
pub struct OracleScorer {
    qrels: QrelSet,
    max_grade: Score,
    source: String,
}

impl OracleScorer {
    pub fn new(qrels: QrelSet) -> Self {
        let max_grade = qrels
            .queries()
            .filter_map(|q| qrels.grades_for(q))
            .flat_map(|g| g.values())
            .copied()
            .max()
            .unwrap_or(0)
            .max(1) as Score;
        OracleScorer {
            qrels,
            max_grade,
            source: "<in-memory>".to_string(),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut oracle = Self::new(QrelSet::from_path(path)?);
        oracle.source = path.display().to_string();
        Ok(oracle)
    }

    fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.qrels.grade(query_id, doc_id).unwrap_or(0)
    }
}

impl PointwiseScorer for OracleScorer {
    fn score(&self, query: &Query, doc: DocRef<'_>) -> Result<Score> {
        Ok(self.grade(&query.id, doc.id) as Score / self.max_grade)
    }
    fn label(&self) -> String {
        format!("oracle:{}", self.source)
    }
}

impl ListwiseScorer for OracleScorer {
    fn rank(&self, query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        let mut idx: Vec<usize> = (1..=window.len()).collect();
        idx.sort_by(|&a, &b| {
            let (da, db) = (window[a - 1], window[b - 1]);
            self.grade(&query.id, db.id)
                .cmp(&self.grade(&query.id, da.id))
                .then_with(|| da.id.cmp(db.id))
        });
        Permutation::repair(&idx, window.len())
    }
    fn label(&self) -> String {
        format!("oracle:{}", self.source)
    }
}

/// Scores every document the same; listwise keeps the presented order.
pub struct ConstantScorer {
    p: Score,
}

impl ConstantScorer {
    pub fn new(p: Score) -> Self {
        ConstantScorer { p }
    }
}

impl PointwiseScorer for ConstantScorer {
    fn score(&self, _query: &Query, _doc: DocRef<'_>) -> Result<Score> {
        Ok(self.p)
    }
    fn label(&self) -> String {
        format!("constant:{}", self.p)
    }
}

impl ListwiseScorer for ConstantScorer {
    fn rank(&self, _query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        Ok(Permutation::identity(window.len()))
    }
    fn label(&self) -> String {
        format!("constant:{}", self.p)
    }
}

/// Seeded pseudo-random scorer. Scores depend only on `(seed, query id,
/// doc id)`, so the listwise ordering is permutation-invariant.
pub struct NoiseScorer {
    seed: u64,
}

impl NoiseScorer {
    pub fn new(seed: u64) -> Self {
        NoiseScorer { seed }
    }

    fn key(&self, query_id: &str, doc_id: &str) -> Score {
        unit_float(stable_hash(
            self.seed,
            &[b"noise", query_id.as_bytes(), doc_id.as_bytes()],
        ))
    }
}

impl PointwiseScorer for NoiseScorer {
    fn score(&self, query: &Query, doc: DocRef<'_>) -> Result<Score> {
        Ok(self.key(&query.id, doc.id))
    }
    fn label(&self) -> String {
        format!("noise:{}", self.seed)
    }
}

impl ListwiseScorer for NoiseScorer {
    fn rank(&self, query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        let mut idx: Vec<usize> = (1..=window.len()).collect();
        idx.sort_by(|&a, &b| {
            let (da, db) = (window[a - 1], window[b - 1]);
            self.key(&query.id, db.id)
                .total_cmp(&self.key(&query.id, da.id))
                .then_with(|| da.id.cmp(db.id))
        });
        Permutation::repair(&idx, window.len())
    }
    fn label(&self) -> String {
        format!("noise:{}", self.seed)
    }
}

/// Lexical scorer backed by an inverted index. Pointwise rescales the
/// BM25 score into `[0,1)` with `s / (1 + s)` (order-preserving);
/// listwise ranks by raw score descending, doc_id ascending.
pub struct Bm25Scorer {
    index: Arc<InvertedIndex>,
    params: BM25Params,
}

impl Bm25Scorer {
    pub fn new(index: Arc<InvertedIndex>, params: BM25Params) -> Self {
        Bm25Scorer { index, params }
    }

    fn raw(&self, query: &Query, doc_id: &str) -> Score {
        let terms = tokenize(&query.text, self.index.analyzer());
        bm25_score(&self.index, &self.params, &terms, doc_id)
    }
}

impl PointwiseScorer for Bm25Scorer {
    fn score(&self, query: &Query, doc: DocRef<'_>) -> Result<Score> {
        let s = self.raw(query, doc.id);
        Ok(s / (1.0 + s))
    }
    fn label(&self) -> String {
        "bm25".to_string()
    }
}

impl ListwiseScorer for Bm25Scorer {
    fn rank(&self, query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        let scores: Vec<Score> = window.iter().map(|d| self.raw(query, d.id)).collect();
        let mut idx: Vec<usize> = (1..=window.len()).collect();
        idx.sort_by(|&a, &b| {
            scores[b - 1]
                .total_cmp(&scores[a - 1])
                .then_with(|| window[a - 1].id.cmp(window[b - 1].id))
        });
        Permutation::repair(&idx, window.len())
    }
    fn label(&self) -> String {
        "bm25".to_string()
    }
}

/// Always returns the presented order — the canonical position-biased
/// scorer, used to validate the bias probe.
pub struct IdentityListwise;

impl ListwiseScorer for IdentityListwise {
    fn rank(&self, _query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        Ok(Permutation::identity(window.len()))
    }
    fn label(&self) -> String {
        "identity".to_string()
    }
}

/// Hash noise plus a tunable pull toward presentation order: each window
/// member scores `hash_unit(doc) − weight · position`. At weight 0 the
/// scorer is permutation-invariant; as the weight grows it degenerates
/// into [`IdentityListwise`].
pub struct PositionNoiseListwise {
    seed: u64,
    weight: Score,
}

impl PositionNoiseListwise {
    pub fn new(seed: u64, weight: Score) -> Self {
        PositionNoiseListwise { seed, weight }
    }
}

impl ListwiseScorer for PositionNoiseListwise {
    fn rank(&self, query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        let score = |pos: usize| {
            unit_float(stable_hash(
                self.seed,
                &[b"posnoise", query.id.as_bytes(), window[pos].id.as_bytes()],
            )) - self.weight * pos as Score
        };
        let mut idx: Vec<usize> = (1..=window.len()).collect();
        idx.sort_by(|&a, &b| score(b - 1).total_cmp(&score(a - 1)).then(a.cmp(&b)));
        Permutation::repair(&idx, window.len())
    }
    fn label(&self) -> String {
        format!("posnoise:{}:{}", self.seed, self.weight)
    }
}

// --- in-process embedder --------------------------------------------------

/// Deterministic embedding provider: component `j` of a document's vector
/// is a hash of `(seed, id, j)` mapped into `[-1,1)`. Identical inputs
/// produce identical stores across runs and platforms.
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("mock embedder dim must be > 0".to_string()));
        }
        Ok(MockEmbedder { seed, dim })
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn embed_batch(&self, items: &[EmbedItem], _truncate_tokens: usize) -> Result<EmbedResponse> {
        Ok(EmbedResponse {
            dim: self.dim,
            vectors: items
                .iter()
                .map(|item| WireVector {
                    id: item.id.clone(),
                    values: (0..self.dim)
                        .map(|j| {
                            2.0 * unit_float(stable_hash(
                                self.seed,
                                &[b"embed", item.id.as_bytes(), &(j as u64).to_le_bytes()],
                            )) - 1.0
                        })
                        .collect(),
                })
                .collect(),
        })
    }

    fn label(&self) -> String {
        format!("mock:{}:{}", self.seed, self.dim)
    }
}

// --- wire adapters --------------------------------------------------------

/// Pointwise scorer over a wire transport.
pub struct WirePointwise {
    client: WireClient,
}

impl WirePointwise {
    pub fn new(client: WireClient) -> Self {
        WirePointwise { client }
    }
}

impl PointwiseScorer for WirePointwise {
    fn score(&self, query: &Query, doc: DocRef<'_>) -> Result<Score> {
        self.client.score(&query.text, doc.text)
    }
    fn label(&self) -> String {
        self.client.label()
    }
}

/// Listwise scorer over a wire transport. Accepts either a pre-parsed
/// index list (repaired like any other ranking) or a raw string run
/// through [`parse_permutation`].
pub struct WireListwise {
    client: WireClient,
}

impl WireListwise {
    pub fn new(client: WireClient) -> Self {
        WireListwise { client }
    }
}

impl ListwiseScorer for WireListwise {
    fn rank(&self, query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        let passages: Vec<String> = window.iter().map(|d| d.text.to_string()).collect();
        let response = self.client.rank(&query.text, passages)?;
        if let Some(indices) = response.permutation {
            return Permutation::repair(&indices, window.len());
        }
        if let Some(raw) = response.raw {
            return parse_permutation(&raw, window.len());
        }
        Err(Error::Protocol(format!(
            "{}: rank response carries neither \"permutation\" nor \"raw\"",
            self.client.label()
        )))
    }
    fn label(&self) -> String {
        self.client.label()
    }
}

/// Embedding provider over a wire transport.
pub struct WireEmbedder {
    client: WireClient,
}

impl WireEmbedder {
    pub fn new(client: WireClient) -> Self {
        WireEmbedder { client }
    }
}

impl EmbeddingProvider for WireEmbedder {
    fn embed_batch(&self, items: &[EmbedItem], truncate_tokens: usize) -> Result<EmbedResponse> {
        self.client.embed(items.to_vec(), truncate_tokens)
    }
    fn label(&self) -> String {
        self.client.label()
    }
}

// --- endpoint grammar -----------------------------------------------------

/// A parsed endpoint string (see the module docs for the grammar).
#[derive(Debug, Clone, PartialEq)]
pub enum EndpointSpec {
    Oracle { qrels_path: PathBuf },
    Constant { p: Score },
    Bm25,
    Noise { seed: u64 },
    Identity,
    PositionNoise { seed: u64, weight: Score },
    Mock { seed: u64, dim: usize },
    Exec { command: String },
    Http { url: String },
}

impl std::str::FromStr for EndpointSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("endpoint {s:?}: {msg}"));
        if s == "bm25" {
            return Ok(EndpointSpec::Bm25);
        }
        if s == "identity" {
            return Ok(EndpointSpec::Identity);
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(EndpointSpec::Http { url: s.to_string() });
        }
        if let Some(rest) = s.strip_prefix("oracle:") {
            if rest.is_empty() {
                return Err(bad("oracle needs a qrels path".to_string()));
            }
            return Ok(EndpointSpec::Oracle {
                qrels_path: PathBuf::from(rest),
            });
        }
        if let Some(rest) = s.strip_prefix("constant:") {
            let p: Score = rest
                .parse()
                .map_err(|e| bad(format!("bad constant probability: {e}")))?;
            return Ok(EndpointSpec::Constant { p });
        }
        if let Some(rest) = s.strip_prefix("noise:") {
            let seed: u64 = rest.parse().map_err(|e| bad(format!("bad seed: {e}")))?;
            return Ok(EndpointSpec::Noise { seed });
        }
        if let Some(rest) = s.strip_prefix("posnoise:") {
            let (seed_s, weight_s) = rest
                .split_once(':')
                .ok_or_else(|| bad("expected posnoise:<seed>:<weight>".to_string()))?;
            let seed: u64 = seed_s.parse().map_err(|e| bad(format!("bad seed: {e}")))?;
            let weight: Score = weight_s
                .parse()
                .map_err(|e| bad(format!("bad weight: {e}")))?;
            return Ok(EndpointSpec::PositionNoise { seed, weight });
        }
        if let Some(rest) = s.strip_prefix("mock:") {
            let (seed_s, dim_s) = rest
                .split_once(':')
                .ok_or_else(|| bad("expected mock:<seed>:<dim>".to_string()))?;
            let seed: u64 = seed_s.parse().map_err(|e| bad(format!("bad seed: {e}")))?;
            let dim: usize = dim_s.parse().map_err(|e| bad(format!("bad dim: {e}")))?;
            if dim == 0 {
                return Err(bad("dim must be > 0".to_string()));
            }
            return Ok(EndpointSpec::Mock { seed, dim });
        }
        if let Some(rest) = s.strip_prefix("exec:") {
            if rest.trim().is_empty() {
                return Err(bad("exec needs a command".to_string()));
            }
            return Ok(EndpointSpec::Exec {
                command: rest.to_string(),
            });
        }
        Err(bad(
            "expected one of oracle:<qrels>, constant:<p>, bm25, noise:<seed>, identity, \
             posnoise:<seed>:<weight>, mock:<seed>:<dim>, exec:<command>, or an http(s) URL"
                .to_string(),
        ))
    }
}

/// Connection settings for wire endpoints.
#[derive(Debug, Clone, Copy)]
pub struct WireOptions {
    /// Subprocess pool size for `exec:` endpoints.
    pub pool: usize,
    pub timeout: Duration,
}

impl Default for WireOptions {
    fn default() -> Self {
        WireOptions {
            pool: 1,
            timeout: Duration::from_secs(30),
        }
    }
}

fn wire_client(spec: &EndpointSpec, opts: &WireOptions) -> Result<WireClient> {
    let transport: Box<dyn Transport> = match spec {
        EndpointSpec::Exec { command } => {
            let pool = opts.pool.max(1);
            if pool == 1 {
                Box::new(SubprocessTransport::spawn(command)?)
            } else {
                let members: Vec<Box<dyn Transport>> = (0..pool)
                    .map(|_| {
                        SubprocessTransport::spawn(command)
                            .map(|t| Box::new(t) as Box<dyn Transport>)
                    })
                    .collect::<Result<_>>()?;
                Box::new(TransportPool::new(members)?)
            }
        }
        EndpointSpec::Http { url } => Box::new(HttpTransport::new(url, opts.timeout)),
        other => {
            return Err(Error::Config(format!(
                "{other:?} is not a wire endpoint"
            )))
        }
    };
    Ok(WireClient::new(transport))
}

/// Extra inputs some in-process scorers need.
#[derive(Default, Clone)]
pub struct ScorerDeps {
    /// Required by the `bm25` endpoint.
    pub index: Option<Arc<InvertedIndex>>,
    pub bm25_params: BM25Params,
}

/// Build a pointwise scorer from an endpoint string.
pub fn pointwise_from_endpoint(
    endpoint: &str,
    deps: &ScorerDeps,
    opts: &WireOptions,
) -> Result<Box<dyn PointwiseScorer>> {
    let spec: EndpointSpec = endpoint.parse()?;
    Ok(match spec {
        EndpointSpec::Oracle { qrels_path } => Box::new(OracleScorer::from_path(qrels_path)?),
        EndpointSpec::Constant { p } => Box::new(ConstantScorer::new(p)),
        EndpointSpec::Noise { seed } => Box::new(NoiseScorer::new(seed)),
        EndpointSpec::Bm25 => Box::new(Bm25Scorer::new(
            deps.index.clone().ok_or_else(|| {
                Error::Config("bm25 scorer endpoint needs an index".to_string())
            })?,
            deps.bm25_params,
        )),
        EndpointSpec::Identity | EndpointSpec::PositionNoise { .. } => {
            return Err(Error::Config(format!(
                "endpoint {endpoint:?} is listwise-only"
            )))
        }
        EndpointSpec::Mock { .. } => {
            return Err(Error::Config(format!(
                "endpoint {endpoint:?} is an embedder, not a scorer"
            )))
        }
        wire @ (EndpointSpec::Exec { .. } | EndpointSpec::Http { .. }) => {
            Box::new(WirePointwise::new(wire_client(&wire, opts)?))
        }
    })
}

/// Build a listwise scorer from an endpoint string.
pub fn listwise_from_endpoint(
    endpoint: &str,
    deps: &ScorerDeps,
    opts: &WireOptions,
) -> Result<Box<dyn ListwiseScorer>> {
    let spec: EndpointSpec = endpoint.parse()?;
    Ok(match spec {
        EndpointSpec::Oracle { qrels_path } => Box::new(OracleScorer::from_path(qrels_path)?),
        EndpointSpec::Constant { p } => Box::new(ConstantScorer::new(p)),
        EndpointSpec::Noise { seed } => Box::new(NoiseScorer::new(seed)),
        EndpointSpec::Identity => Box::new(IdentityListwise),
        EndpointSpec::PositionNoise { seed, weight } => {
            Box::new(PositionNoiseListwise::new(seed, weight))
        }
        EndpointSpec::Bm25 => Box::new(Bm25Scorer::new(
            deps.index.clone().ok_or_else(|| {
                Error::Config("bm25 scorer endpoint needs an index".to_string())
            })?,
            deps.bm25_params,
        )),
        EndpointSpec::Mock { .. } => {
            return Err(Error::Config(format!(
                "endpoint {endpoint:?} is an embedder, not a scorer"
            )))
        }
        wire @ (EndpointSpec::Exec { .. } | EndpointSpec::Http { .. }) => {
            Box::new(WireListwise::new(wire_client(&wire, opts)?))
        }
    })
}

/// Build an embedding provider from an endpoint string.
pub fn embedder_from_endpoint(
    endpoint: &str,
    opts: &WireOptions,
) -> Result<Box<dyn EmbeddingProvider>> {
    let spec: EndpointSpec = endpoint.parse()?;
    Ok(match spec {
        EndpointSpec::Mock { seed, dim } => Box::new(MockEmbedder::new(seed, dim)?),
        wire @ (EndpointSpec::Exec { .. } | EndpointSpec::Http { .. }) => {
            Box::new(WireEmbedder::new(wire_client(&wire, opts)?))
        }
        other => {
            return Err(Error::Config(format!(
                "endpoint {endpoint:?} ({other:?}) cannot embed"
            )))
        }
    })
}
