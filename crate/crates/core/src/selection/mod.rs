//! Demonstration selection and K-way N-shot assembly.
//!
//! Every strategy ends in a [`DemonstrationSet`]: N items per label, no
//! duplicate ids, none drawn from the evaluation split. Category-based
//! strategies draw from a [`CategoryPool`] via [`assemble`]; shortfalls are
//! filled from same-label training instances, and an empty category is
//! dropped.

mod bm25;
mod embed;
mod kmeans;
mod scores;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Group, Instance, LabelSet, TripartiteRecord};
use crate::rng::keyed_rng;
use crate::tripartite::VanillaRecord;

pub use bm25::{rank_bm25, tokenize, Bm25Index, Bm25Params};
pub use embed::{cosine, rank_similarity, Embedder, RemoteEmbedder, SimilarityIndex, TfIdfEmbedder};
pub use kmeans::{farthest_point_seeds, kmeans, select_diversity, KMeans, KMEANS_MAX_ITER, KMEANS_TOL};
pub use scores::{entropy, label_distribution, perplexity, score_entropy, score_perplexity};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub instance_id: String,
    pub text: String,
    pub label: String,
}

impl Demonstration {
    fn of(i: &Instance) -> Self {
        Self {
            instance_id: i.id.clone(),
            text: i.text.clone(),
            label: i.gold.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub seed: u64,
    /// Items drawn from the fallback pool.
    #[serde(default)]
    pub supplemented: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub items: Vec<Demonstration>,
    pub provenance: Provenance,
    pub k: usize,
    pub n: usize,
}

impl DemonstrationSet {
    /// Orders per-label picks round-robin across labels, then applies one
    /// seeded shuffle.
    fn build(
        per_label: Vec<Vec<&Instance>>,
        labels: &LabelSet,
        n: usize,
        provenance: Provenance,
        order_key: &str,
    ) -> Self {
        let mut items = Vec::with_capacity(labels.len() * n);
        for j in 0..n {
            for picks in &per_label {
                if let Some(i) = picks.get(j) {
                    items.push(Demonstration::of(i));
                }
            }
        }
        let mut rng = keyed_rng(provenance.seed, &["order", &provenance.strategy, order_key]);
        items.shuffle(&mut rng);
        Self {
            items,
            k: labels.len(),
            n,
            provenance,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|d| d.instance_id.as_str())
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.items.iter().map(|d| (d.text.as_str(), d.label.as_str()))
    }

    /// Shape, balance, duplicate and leakage checks.
    pub fn check(&self, labels: &LabelSet, eval_ids: &HashSet<&str>) -> Result<()> {
        if self.items.len() != self.k * self.n || self.k != labels.len() {
            return Err(Error::InsufficientData(format!(
                "set has {} items, expected {}x{}",
                self.items.len(),
                labels.len(),
                self.n
            )));
        }
        let mut seen = HashSet::new();
        let mut per_label = vec![0usize; labels.len()];
        for d in &self.items {
            if !seen.insert(d.instance_id.as_str()) {
                return Err(Error::InsufficientData(format!("duplicate demonstration `{}`", d.instance_id)));
            }
            if eval_ids.contains(d.instance_id.as_str()) {
                return Err(Error::Leakage(d.instance_id.clone()));
            }
            let li = labels
                .index_of(&d.label)
                .ok_or_else(|| Error::InsufficientData(format!("foreign label `{}`", d.label)))?;
            per_label[li] += 1;
        }
        if per_label.iter().any(|c| *c != self.n) {
            return Err(Error::InsufficientData(format!("unbalanced labels {per_label:?}")));
        }
        Ok(())
    }
}

/// Training ids per candidate category, split by gold label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryPool {
    pub pools: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl CategoryPool {
    /// Every training instance must be assigned exactly once.
    pub fn from_assignments<'a>(
        assignments: impl IntoIterator<Item = (&'a str, String)>,
        train: &[Instance],
        labels: &LabelSet,
    ) -> Result<Self> {
        let by_id: HashMap<&str, &Instance> = train.iter().map(|i| (i.id.as_str(), i)).collect();
        let mut pool = CategoryPool::default();
        let mut assigned = HashSet::new();
        for (id, key) in assignments {
            let Some(inst) = by_id.get(id) else { continue };
            if !assigned.insert(id) {
                return Err(Error::InsufficientData(format!("instance `{id}` assigned twice")));
            }
            let label = labels.canonical(&inst.gold).unwrap_or(&inst.gold).to_string();
            pool.pools
                .entry(key)
                .or_default()
                .entry(label)
                .or_default()
                .push(id.to_string());
        }
        if let Some(missing) = train.iter().find(|i| !assigned.contains(i.id.as_str())) {
            return Err(Error::InsufficientData(format!(
                "no uncertainty record for training instance `{}`",
                missing.id
            )));
        }
        for labels in pool.pools.values_mut() {
            for ids in labels.values_mut() {
                ids.sort();
            }
        }
        Ok(pool)
    }

    pub fn from_tripartite(records: &[TripartiteRecord], train: &[Instance], labels: &LabelSet) -> Result<Self> {
        Self::from_assignments(
            records.iter().map(|r| (r.instance_id.as_str(), r.category.code())),
            train,
            labels,
        )
    }

    pub fn from_vanilla(records: &[VanillaRecord], train: &[Instance], labels: &LabelSet) -> Result<Self> {
        Self::from_assignments(
            records.iter().map(|r| (r.instance_id.as_str(), r.bucket.clone())),
            train,
            labels,
        )
    }

    pub fn total(&self) -> usize {
        self.pools.values().flat_map(|m| m.values()).map(Vec::len).sum()
    }

    /// Per-label ids of one category; empty when absent.
    pub fn get(&self, key: &str) -> BTreeMap<String, Vec<String>> {
        self.pools.get(key).cloned().unwrap_or_default()
    }

    /// Union of several categories, e.g. every code of a group.
    pub fn merged<'k>(&self, keys: impl IntoIterator<Item = &'k str>) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for k in keys {
            for (label, ids) in self.get(k) {
                out.entry(label).or_default().extend(ids);
            }
        }
        for ids in out.values_mut() {
            ids.sort();
            ids.dedup();
        }
        out
    }

    pub fn group(&self, group: Group) -> BTreeMap<String, Vec<String>> {
        let codes: Vec<String> = crate::model::group_members(group).iter().map(|c| c.code()).collect();
        self.merged(codes.iter().map(String::as_str))
    }
}

/// `(instance id, score)` pairs, descending by score, ties by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList(pub Vec<(String, f64)>);

impl RankedList {
    pub fn new(mut pairs: Vec<(String, f64)>) -> Self {
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        RankedList(pairs)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(id, _)| id.as_str())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn shuffled<'a>(mut ids: Vec<&'a str>, seed: u64, stream: &[&str]) -> Vec<&'a str> {
    ids.sort_unstable();
    let mut rng = keyed_rng(seed, stream);
    ids.shuffle(&mut rng);
    ids
}

/// Draws N per label from `category` (uniformly, without replacement) and
/// fills any per-label shortfall uniformly from the remaining same-label
/// training instances.
///
/// Returns `Ok(None)` when the category has no instance at all (dropped).
pub fn assemble(
    category_name: &str,
    category: &BTreeMap<String, Vec<String>>,
    train: &[Instance],
    labels: &LabelSet,
    n: usize,
    seed: u64,
) -> Result<Option<DemonstrationSet>> {
    if category.values().all(Vec::is_empty) {
        return Ok(None);
    }
    let by_id: HashMap<&str, &Instance> = train.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut supplemented = 0;
    let mut per_label = Vec::with_capacity(labels.len());
    for label in labels.labels() {
        let in_cat: Vec<&str> = category
            .iter()
            .filter(|(l, _)| labels.canonical(l) == Some(label.as_str()))
            .flat_map(|(_, ids)| ids.iter().map(String::as_str))
            .filter(|id| by_id.contains_key(id))
            .collect();
        let mut picks: Vec<&str> = shuffled(in_cat, seed, &["assemble", category_name, label])
            .into_iter()
            .take(n)
            .collect();
        if picks.len() < n {
            let chosen: BTreeSet<&str> = picks.iter().copied().collect();
            let fallback: Vec<&str> = train
                .iter()
                .filter(|i| i.is_gold(label) && !chosen.contains(i.id.as_str()))
                .map(|i| i.id.as_str())
                .collect();
            let need = n - picks.len();
            if fallback.len() < need {
                return Err(Error::InsufficientData(format!(
                    "category {category_name}: label `{label}` needs {need} more, fallback has {}",
                    fallback.len()
                )));
            }
            supplemented += need;
            picks.extend(shuffled(fallback, seed, &["supplement", category_name, label]).into_iter().take(need));
        }
        per_label.push(picks.into_iter().map(|id| by_id[id]).collect());
    }
    Ok(Some(DemonstrationSet::build(
        per_label,
        labels,
        n,
        Provenance {
            strategy: "category".into(),
            category: Some(category_name.to_string()),
            seed,
            supplemented,
        },
        category_name,
    )))
}

/// N per label uniformly at random.
pub fn select_random(train: &[Instance], labels: &LabelSet, n: usize, seed: u64) -> Result<DemonstrationSet> {
    let mut per_label = Vec::with_capacity(labels.len());
    for label in labels.labels() {
        let ids: Vec<&str> = train.iter().filter(|i| i.is_gold(label)).map(|i| i.id.as_str()).collect();
        if ids.len() < n {
            return Err(Error::InsufficientData(format!(
                "label `{label}` has {} training instances, need {n}",
                ids.len()
            )));
        }
        per_label.push(shuffled(ids, seed, &["random", label]).into_iter().take(n).collect::<Vec<_>>());
    }
    let by_id: HashMap<&str, &Instance> = train.iter().map(|i| (i.id.as_str(), i)).collect();
    let per_label = per_label
        .into_iter()
        .map(|ids| ids.into_iter().map(|id| by_id[id]).collect())
        .collect();
    Ok(DemonstrationSet::build(
        per_label,
        labels,
        n,
        Provenance {
            strategy: "random".into(),
            category: None,
            seed,
            supplemented: 0,
        },
        "",
    ))
}

/// Walks `ranking` from the top and keeps the first N instances of each label.
pub fn select_top_ranked(
    ranking: &RankedList,
    train: &[Instance],
    labels: &LabelSet,
    n: usize,
    strategy: &str,
    seed: u64,
    order_key: &str,
) -> Result<DemonstrationSet> {
    let by_id: HashMap<&str, &Instance> = train.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut per_label: Vec<Vec<&Instance>> = vec![Vec::new(); labels.len()];
    for id in ranking.ids() {
        let Some(inst) = by_id.get(id) else { continue };
        let Some(li) = labels.index_of(&inst.gold) else { continue };
        if per_label[li].len() < n {
            per_label[li].push(inst);
        }
    }
    if let Some(li) = per_label.iter().position(|p| p.len() < n) {
        return Err(Error::InsufficientData(format!(
            "ranking yields {} `{}` instances, need {n}",
            per_label[li].len(),
            labels.labels()[li]
        )));
    }
    Ok(DemonstrationSet::build(
        per_label,
        labels,
        n,
        Provenance {
            strategy: strategy.into(),
            category: None,
            seed,
            supplemented: 0,
        },
        order_key,
    ))
}
