//! Sentence embeddings and cosine ranking.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::bm25::tokenize;
use super::RankedList;
use crate::error::{Error, Result};
use crate::model::Instance;

pub trait Embedder: Send + Sync {
    /// One vector per input text, all of the same dimension.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Local TF-IDF vectors, L2-normalised. The vocabulary and document
/// frequencies come from the corpus passed to [`TfIdfEmbedder::fit`];
/// unseen terms are ignored.
#[derive(Debug, Clone)]
pub struct TfIdfEmbedder {
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdfEmbedder {
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n = 0usize;
        for doc in corpus {
            n += 1;
            let mut terms = tokenize(doc);
            terms.sort();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut vocab = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (term, d)) in df.into_iter().enumerate() {
            vocab.insert(term, i);
            idf.push(((1 + n) as f64 / (1 + d) as f64).ln() + 1.0);
        }
        Self { vocab, idf }
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for t in tokenize(text) {
            if let Some(&i) = self.vocab.get(&t) {
                v[i] += self.idf[i];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for TfIdfEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Embedder(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            http,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/embeddings", self.endpoint.trim_end_matches('/'));
        let mut req = self.http.post(url).json(&EmbedBody {
            model: &self.model,
            input: texts,
        });
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| Error::Embedder(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| Error::Embedder(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Embedder(format!("{status}: {body}")));
        }
        let parsed: EmbedResponse =
            serde_json::from_str(&body).map_err(|e| Error::Embedder(format!("unparseable response: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(Error::Embedder(format!(
                "{} embeddings for {} inputs",
                parsed.data.len(),
                texts.len()
            )));
        }
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, item) in parsed.data.into_iter().enumerate() {
            let i = item.index.unwrap_or(pos);
            if i >= out.len() {
                return Err(Error::Embedder(format!("embedding index {i} out of range")));
            }
            out[i] = item.embedding;
        }
        Ok(out)
    }
}

/// Training-set embeddings computed once and reused for every query.
pub struct SimilarityIndex {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl SimilarityIndex {
    pub fn new(train: &[Instance], embedder: &dyn Embedder) -> Result<Self> {
        let texts: Vec<&str> = train.iter().map(|i| i.text.as_str()).collect();
        let vectors = embedder.embed(&texts)?;
        if vectors.len() != train.len() {
            return Err(Error::Embedder("embedding count mismatch".into()));
        }
        Ok(Self {
            ids: train.iter().map(|i| i.id.clone()).collect(),
            vectors,
        })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Ranks the training set by cosine similarity to `query`.
    pub fn rank(&self, query: &Instance, embedder: &dyn Embedder) -> Result<RankedList> {
        let q = embedder
            .embed(&[query.text.as_str()])?
            .pop()
            .ok_or_else(|| Error::Embedder("empty embedding response".into()))?;
        Ok(RankedList::new(
            self.ids
                .iter()
                .cloned()
                .zip(self.vectors.iter().map(|v| cosine(&q, v)))
                .collect(),
        ))
    }
}

pub fn rank_similarity(test: &Instance, train: &[Instance], embedder: &dyn Embedder) -> Result<RankedList> {
    SimilarityIndex::new(train, embedder)?.rank(test, embedder)
}
