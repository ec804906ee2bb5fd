//! Chunk embedding, a flat cosine index, and planned (keyword-first) retrieval.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge_base::{ChunkSource, KnowledgeChunk};
use crate::query_planner::QueryPlan;

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("the index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("embedding dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Unit-norm vector, or all zeros for text without 3-grams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na = self.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = other.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }

    fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|x| *x /= norm);
        }
        EmbeddingVector(values)
    }
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

/// Lower-cased character 3-grams hashed into `dimension` buckets, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct TrigramEmbedder {
    dimension: usize,
}

impl TrigramEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl Embedder for TrigramEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut counts = vec![0.0; self.dimension];
        let mut buf = [0u8; 12];
        for w in chars.windows(3) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            let bucket = (crate::fnv1a64(&buf[..n]) % self.dimension as u64) as usize;
            counts[bucket] += 1.0;
        }
        Ok(EmbeddingVector::normalized(counts))
    }
}

/// Remote embedding service: POST `{"text": ...}`, response is a JSON array of
/// numbers. The result is L2-normalized.
pub struct HttpEmbedder {
    url: String,
    api_key: Option<String>,
    dimension: usize,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, api_key_env: &str, dimension: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            api_key: std::env::var(api_key_env).ok(),
            dimension,
            agent,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let unavailable = |e: String| RetrievalError::ProviderUnavailable(e);
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(serde_json::json!({ "text": text }))
            .map_err(|e| unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unavailable(format!("status {}", resp.status())));
        }
        let values: Vec<f64> = resp
            .body_mut()
            .read_json()
            .map_err(|e| unavailable(e.to_string()))?;
        if values.len() != self.dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dimension,
                got: values.len(),
            });
        }
        Ok(EmbeddingVector::normalized(values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub source: ChunkSource,
    pub keywords: Vec<String>,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub dimension: usize,
    pub entries: Vec<IndexEntry>,
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A copy holding only entries from the given sources.
    pub fn restricted_to(&self, sources: &[ChunkSource]) -> VectorIndex {
        VectorIndex {
            dimension: self.dimension,
            entries: self
                .entries
                .iter()
                .filter(|e| sources.contains(&e.source))
                .cloned()
                .collect(),
        }
    }
}

pub fn build_index(
    chunks: &[KnowledgeChunk],
    embedder: &dyn Embedder,
) -> Result<VectorIndex, RetrievalError> {
    let entries = chunks
        .iter()
        .map(|c| {
            Ok(IndexEntry {
                chunk_id: c.id.clone(),
                source: c.source,
                keywords: c.keywords.clone(),
                vector: embedder.embed(&c.text)?,
            })
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    Ok(VectorIndex { dimension: embedder.dimension(), entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    KeywordTag,
    Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub chunk_id: String,
    pub score: f64,
    pub matched_by: MatchKind,
}

/// Keyword-tag matches first, then score descending, then chunk id ascending.
pub fn result_order(a: &RetrievalResult, b: &RetrievalResult) -> Ordering {
    a.matched_by
        .cmp(&b.matched_by)
        .then_with(|| b.score.total_cmp(&a.score))
        .then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextGroup {
    pub sub_request_text: String,
    pub keyword: String,
    pub results: Vec<RetrievalResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub groups: Vec<ContextGroup>,
}

impl ContextBundle {
    pub fn is_empty(&self) -> bool {
        self.groups.iter().all(|g| g.results.is_empty())
    }
}

fn vector_ranking(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    query: &str,
    exclude: &HashSet<&str>,
    k: usize,
) -> Result<Vec<RetrievalResult>, RetrievalError> {
    let q = embedder.embed(query)?;
    if q.dimension() != index.dimension {
        return Err(RetrievalError::DimensionMismatch {
            expected: index.dimension,
            got: q.dimension(),
        });
    }
    let mut scored: Vec<RetrievalResult> = index
        .entries
        .iter()
        .filter(|e| !exclude.contains(e.chunk_id.as_str()))
        .map(|e| RetrievalResult {
            chunk_id: e.chunk_id.clone(),
            score: q.cosine(&e.vector),
            matched_by: MatchKind::Vector,
        })
        .collect();
    scored.sort_by(result_order);
    scored.truncate(k);
    Ok(scored)
}

/// Top-k entries by cosine similarity to the whole query.
pub fn retrieve(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    query_text: &str,
    k: usize,
) -> Result<Vec<RetrievalResult>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    vector_ranking(index, embedder, query_text, &HashSet::new(), k)
}

fn retrieve_group(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    text: &str,
    keyword: &str,
    k: usize,
) -> Result<Vec<RetrievalResult>, RetrievalError> {
    let mut tagged: Vec<RetrievalResult> = if keyword.is_empty() {
        Vec::new()
    } else {
        index
            .entries
            .iter()
            .filter(|e| e.keywords.iter().any(|t| t.eq_ignore_ascii_case(keyword)))
            .map(|e| RetrievalResult {
                chunk_id: e.chunk_id.clone(),
                score: 1.0,
                matched_by: MatchKind::KeywordTag,
            })
            .collect()
    };
    tagged.sort_by(result_order);
    tagged.truncate(k);
    if tagged.len() < k {
        let taken: HashSet<&str> = tagged.iter().map(|r| r.chunk_id.as_str()).collect();
        let query = if keyword.is_empty() { text.to_string() } else { format!("{text} {keyword}") };
        let fill = vector_ranking(index, embedder, &query, &taken, k - tagged.len())?;
        tagged.extend(fill);
    }
    Ok(tagged)
}

/// One group per sub-query, in plan order. Groups are independent and are
/// retrieved on scoped threads when the plan has more than one sub-query.
pub fn retrieve_planned(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    plan: &QueryPlan,
    k: usize,
) -> Result<ContextBundle, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let subs = plan.sub_queries();
    let results: Vec<Result<Vec<RetrievalResult>, RetrievalError>> = if subs.len() == 1 {
        vec![retrieve_group(index, embedder, &subs[0].sub_request_text, &subs[0].keyword, k)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = subs
                .iter()
                .map(|sq| {
                    s.spawn(move || {
                        retrieve_group(index, embedder, &sq.sub_request_text, &sq.keyword, k)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("retrieval worker panicked"))
                .collect()
        })
    };
    let mut groups = Vec::with_capacity(subs.len());
    for (sq, res) in subs.iter().zip(results) {
        groups.push(ContextGroup {
            sub_request_text: sq.sub_request_text.clone(),
            keyword: sq.keyword.clone(),
            results: res?,
        });
    }
    Ok(ContextBundle { groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query_planner::SubQuery;

    fn chunk(id: &str, kw: &[&str], text: &str) -> KnowledgeChunk {
        KnowledgeChunk {
            id: id.into(),
            source: ChunkSource::Manual,
            keywords: kw.iter().map(|s| s.to_string()).collect(),
            text: text.into(),
        }
    }

    fn corpus() -> Vec<KnowledgeChunk> {
        vec![
            chunk("a", &[], "generate data for a power flow case"),
            chunk("b", &["pls_recw"], "recursive partial least squares options"),
            chunk("c", &[], "ranking of linearization methods by accuracy"),
            chunk("d", &[], "plot the results with a light style"),
            chunk("e", &[], "ridge regression with known parameter constraints"),
        ]
    }

    #[test]
    fn embedding_basics() {
        let e = TrigramEmbedder::default();
        let zero = e.embed("").unwrap();
        assert_eq!(zero.dimension(), 256);
        assert!(zero.0.iter().all(|x| *x == 0.0));
        assert!(e.embed("ab").unwrap().0.iter().all(|x| *x == 0.0));
        let v = e.embed("PLS_RECW options").unwrap();
        assert_eq!(v, e.embed("PLS_RECW options").unwrap());
        assert!((v.cosine(&v) - 1.0).abs() < 1e-12);
        let norm: f64 = v.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert_eq!(e.embed("Case39").unwrap(), e.embed("case39").unwrap());
    }

    #[test]
    fn index_is_deterministic() {
        let e = TrigramEmbedder::default();
        assert!(build_index(&[], &e).unwrap().is_empty());
        let a = build_index(&corpus(), &e).unwrap();
        let b = build_index(&corpus(), &e).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn retrieve_contract() {
        let e = TrigramEmbedder::default();
        let one = build_index(&corpus()[..1], &e).unwrap();
        let r = retrieve(&one, &e, "anything", 3).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].chunk_id, "a");

        let idx = build_index(&corpus(), &e).unwrap();
        let r = retrieve(&idx, &e, "ranking of linearization methods by accuracy", 2).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].chunk_id, "c");
        assert!(r[0].score >= r[1].score);
        assert!(r.iter().all(|x| x.matched_by == MatchKind::Vector));

        let empty = VectorIndex { dimension: 256, entries: vec![] };
        assert_eq!(retrieve(&empty, &e, "q", 1), Err(RetrievalError::EmptyIndex));
        assert_eq!(retrieve(&idx, &e, "q", 0), Err(RetrievalError::InvalidK));
    }

    #[test]
    fn planned_keyword_first() {
        let e = TrigramEmbedder::default();
        let idx = build_index(&corpus(), &e).unwrap();
        let plan = QueryPlan::planned(vec![
            SubQuery::new("set the forgetting factor", "PLS_RECW").unwrap(),
            SubQuery::new("plot it", "nothing").unwrap(),
            SubQuery::new("make data", "generate_data").unwrap(),
        ])
        .unwrap();
        let bundle = retrieve_planned(&idx, &e, &plan, 4).unwrap();
        assert_eq!(bundle.groups.len(), 3);
        assert_eq!(bundle.groups[0].results[0].chunk_id, "b");
        assert_eq!(bundle.groups[0].results[0].matched_by, MatchKind::KeywordTag);
        assert_eq!(bundle.groups[0].results[0].score, 1.0);
        assert!(bundle.groups.iter().all(|g| g.results.len() <= 4));

        let fallback = retrieve(&idx, &e, "plot it nothing", 4).unwrap();
        assert_eq!(bundle.groups[1].results, fallback);
    }
}
