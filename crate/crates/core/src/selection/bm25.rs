//! Okapi BM25 over the training split.
//!
//! score(D, Q) = Σ_{t ∈ Q} idf(t) · tf(t, D)·(k1 + 1) / (tf(t, D) + k1·(1 − b + b·|D|/avgdl))
//!
//! with idf(t) = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5)). Query terms are
//! summed once per occurrence in the query.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::RankedList;
use crate::model::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

/// Lower-cased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub struct Bm25Index {
    params: Bm25Params,
    ids: Vec<String>,
    term_freqs: Vec<HashMap<String, u32>>,
    doc_lens: Vec<f64>,
    doc_freq: HashMap<String, u32>,
    avgdl: f64,
}

impl Bm25Index {
    pub fn new(train: &[Instance], params: Bm25Params) -> Self {
        let mut term_freqs = Vec::with_capacity(train.len());
        let mut doc_lens = Vec::with_capacity(train.len());
        let mut doc_freq: HashMap<String, u32> = HashMap::new();
        for inst in train {
            let toks = tokenize(&inst.text);
            doc_lens.push(toks.len() as f64);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avgdl = if doc_lens.is_empty() {
            0.0
        } else {
            doc_lens.iter().sum::<f64>() / doc_lens.len() as f64
        };
        Self {
            params,
            ids: train.iter().map(|i| i.id.clone()).collect(),
            term_freqs,
            doc_lens,
            doc_freq,
            avgdl,
        }
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.ids.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score of every training document against `query`, in index order.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let q = tokenize(query);
        let Bm25Params { k1, b } = self.params;
        (0..self.ids.len())
            .map(|d| {
                let norm = if self.avgdl > 0.0 {
                    k1 * (1.0 - b + b * self.doc_lens[d] / self.avgdl)
                } else {
                    k1
                };
                q.iter()
                    .map(|t| match self.term_freqs[d].get(t) {
                        Some(&tf) => {
                            let tf = tf as f64;
                            self.idf(t) * tf * (k1 + 1.0) / (tf + norm)
                        }
                        None => 0.0,
                    })
                    .sum()
            })
            .collect()
    }

    pub fn rank(&self, query: &str) -> RankedList {
        RankedList::new(self.ids.iter().cloned().zip(self.scores(query)).collect())
    }
}

pub fn rank_bm25(test: &Instance, train: &[Instance], params: Bm25Params) -> RankedList {
    Bm25Index::new(train, params).rank(&test.text)
}
