//! Second-stage dense rescoring: fetch embeddings from a provider, rescore
//! first-stage candidates by dot product, keep the top k.
//!
//! Embeddings only ever arrive over the provider interface — vectors are
//! opaque here, and any pooling/truncation semantics live on the provider
//! side (the truncation budget is forwarded in the wire message).

use std::collections::{BTreeMap, HashSet};

use crate::num::Real;
use crate::ranking::RankedList;
use crate::wire::{EmbedItem, EmbedResponse};
use crate::{Error, Result, Score};

/// Batch size for provider requests.
const BATCH: usize = 64;

/// A fixed-width real vector. All values finite; `dim` = `values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<F = Score> {
    values: Vec<F>,
}

impl<F: Real> EmbeddingVector<F> {
    pub fn new(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Protocol(
                "embedding vector contains a non-finite value".to_string(),
            ));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }
}

/// Dot product over aligned slices (caller guarantees equal length).
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// id → vector, all sharing one dimensionality, tagged with the provider
/// that produced them.
#[derive(Debug, Clone)]
pub struct EmbeddingStore<F = Score> {
    vectors: BTreeMap<String, EmbeddingVector<F>>,
    dim: usize,
    provider_tag: String,
}

impl<F: Real> EmbeddingStore<F> {
    pub fn new(dim: usize, provider_tag: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Protocol("embedding dimension must be > 0".to_string()));
        }
        Ok(EmbeddingStore {
            vectors: BTreeMap::new(),
            dim,
            provider_tag: provider_tag.into(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: EmbeddingVector<F>) -> Result<()> {
        let id = id.into();
        if vector.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                id,
                expected: self.dim,
                actual: vector.dim(),
            });
        }
        if self.vectors.insert(id.clone(), vector).is_some() {
            return Err(Error::DuplicateDocId { id });
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector<F>> {
        self.vectors.get(id)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }
}

/// An embedding source: in-process mock or a wire-protocol backend.
pub trait EmbeddingProvider: Send + Sync {
    /// Embed a batch. The response must cover exactly the requested ids.
    fn embed_batch(&self, items: &[EmbedItem], truncate_tokens: usize) -> Result<EmbedResponse>;

    /// Tag recorded on the resulting store.
    fn label(&self) -> String;
}

/// Fetch one vector per `(id, text)` pair, batching requests and
/// reassembling by id. Dimensions must agree across batches; every
/// requested id must come back exactly once.
pub fn fetch_embeddings(
    provider: &dyn EmbeddingProvider,
    texts: &[(String, String)],
    truncate_tokens: usize,
) -> Result<EmbeddingStore> {
    if texts.is_empty() {
        return Err(Error::EmptyInput("texts"));
    }
    let mut requested: HashSet<&str> = HashSet::with_capacity(texts.len());
    for (id, _) in texts {
        if !requested.insert(id) {
            return Err(Error::DuplicateDocId { id: id.clone() });
        }
    }

    let mut store: Option<EmbeddingStore> = None;
    for chunk in texts.chunks(BATCH) {
        let items: Vec<EmbedItem> = chunk
            .iter()
            .map(|(id, text)| EmbedItem {
                id: id.clone(),
                text: text.clone(),
            })
            .collect();
        let first_id = items[0].id.clone();
        let response = provider
            .embed_batch(&items, truncate_tokens)
            .map_err(|e| match e {
                Error::Protocol(msg) => Error::Protocol(format!(
                    "batch starting at {first_id:?} ({} items): {msg}",
                    items.len()
                )),
                other => other,
            })?;

        let store = match &mut store {
            Some(s) => {
                if response.dim != s.dim() {
                    return Err(Error::DimensionMismatch {
                        id: first_id,
                        expected: s.dim(),
                        actual: response.dim,
                    });
                }
                s
            }
            None => store.insert(EmbeddingStore::new(response.dim, provider.label())?),
        };

        let mut pending: HashSet<&str> = chunk.iter().map(|(id, _)| id.as_str()).collect();
        for vector in response.vectors {
            if !pending.remove(vector.id.as_str()) {
                return Err(Error::Protocol(format!(
                    "provider returned unrequested or repeated id {:?}",
                    vector.id
                )));
            }
            if vector.values.len() != response.dim {
                return Err(Error::DimensionMismatch {
                    id: vector.id,
                    expected: response.dim,
                    actual: vector.values.len(),
                });
            }
            store.insert(vector.id, EmbeddingVector::new(vector.values)?)?;
        }
        if let Some(missing) = pending.into_iter().next() {
            return Err(Error::MissingEmbedding {
                id: missing.to_string(),
            });
        }
    }
    Ok(store.expect("at least one batch"))
}

/// Rescore candidates by `dot(query, doc) + fusion_weight · first_stage`
/// (pure dense at weight 0, the default), reorder descending, truncate to
/// `k`. Ties break by doc_id ascending. Every candidate must have a
/// stored embedding of the query's dimensionality.
pub fn dot_rescore(
    query_vec: &EmbeddingVector,
    candidates: &RankedList,
    store: &EmbeddingStore,
    k: usize,
) -> Result<RankedList> {
    dot_rescore_fused(query_vec, candidates, store, k, 0.0)
}

/// [`dot_rescore`] with an explicit linear-fusion weight on the incoming
/// first-stage scores.
pub fn dot_rescore_fused(
    query_vec: &EmbeddingVector,
    candidates: &RankedList,
    store: &EmbeddingStore,
    k: usize,
    fusion_weight: Score,
) -> Result<RankedList> {
    if query_vec.dim() != store.dim() {
        return Err(Error::DimensionMismatch {
            id: "<query>".to_string(),
            expected: store.dim(),
            actual: query_vec.dim(),
        });
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for entry in &candidates.entries {
        let vector = store.get(&entry.doc_id).ok_or_else(|| Error::MissingEmbedding {
            id: entry.doc_id.clone(),
        })?;
        let score =
            dot(query_vec.values(), vector.values()) + fusion_weight * entry.score;
        scored.push((entry.doc_id.clone(), score));
    }
    Ok(RankedList::from_scores(&candidates.query_id, scored)?.truncated(k))
}
