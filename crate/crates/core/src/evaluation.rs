//! K-way N-shot in-context evaluation, validation-based category picking,
//! seeded repetition and report emission.
//!
//! [`Pipeline`] ties the pieces together: it measures the training split
//! with the strategy's guidance (tripartite records, vanilla samples,
//! verification or logprob scores), picks a category on validation when the
//! strategy needs one, and evaluates one demonstration set per seed on test.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::concurrency::{map_bounded, DEFAULT_CONCURRENCY};
use crate::data::{read_jsonl, DatasetSpec, DEFAULT_SEEDS};
use crate::error::{Error, Result};
use crate::model::{Group, Instance, LabelSet, ParsedAnswer, TripartiteRecord, UncertaintyCategory};
use crate::prompting::{parse_answer, render_icl, PromptTemplate};
use crate::provider::{CompletionRequest, Provider, Purpose, SAMPLING_TEMPERATURE};
use crate::rng::derive_seed;
use crate::selection::{
    assemble, score_entropy, score_perplexity, select_diversity, select_random, select_top_ranked,
    Bm25Index, Bm25Params, CategoryPool, DemonstrationSet, Embedder, RankedList, SimilarityIndex, TfIdfEmbedder,
};
use crate::tripartite::{Prober, VanillaRecord, VerificationMethod, DEFAULT_Q};

/// Shots per label when comparing candidate categories on validation.
pub const VALIDATION_SHOTS: usize = 1;

const MEAN_TIE_EPS: f64 = 1e-9;

/// Demonstrations of one run: shared by every query, or chosen per query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demos {
    Shared(DemonstrationSet),
    PerInstance(BTreeMap<String, DemonstrationSet>),
}

impl Demos {
    pub fn for_instance(&self, id: &str) -> Option<&DemonstrationSet> {
        match self {
            Demos::Shared(s) => Some(s),
            Demos::PerInstance(m) => m.get(id),
        }
    }

    fn sets(&self) -> Box<dyn Iterator<Item = &DemonstrationSet> + '_> {
        match self {
            Demos::Shared(s) => Box::new(std::iter::once(s)),
            Demos::PerInstance(m) => Box::new(m.values()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub predicted: ParsedAnswer,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub seed: u64,
    pub eval_split: String,
    pub demonstrations: Demos,
    pub per_instance: Vec<Prediction>,
    /// Mean of the correct bits; Failed answers count as wrong.
    pub accuracy: f64,
}

impl EvalRun {
    pub fn failed(&self) -> usize {
        self.per_instance.iter().filter(|p| p.predicted.is_failed()).count()
    }
}

/// Sends one ICL query per evaluation instance.
pub struct IclRunner<'a> {
    pub provider: &'a dyn Provider,
    pub model_id: String,
    pub labels: &'a LabelSet,
    pub template: &'a PromptTemplate,
    pub temperature: f64,
    pub concurrency: usize,
}

impl<'a> IclRunner<'a> {
    pub fn new(
        provider: &'a dyn Provider,
        model_id: impl Into<String>,
        labels: &'a LabelSet,
        template: &'a PromptTemplate,
    ) -> Self {
        Self {
            provider,
            model_id: model_id.into(),
            labels,
            template,
            temperature: SAMPLING_TEMPERATURE,
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    /// Exactly one provider call per instance of `eval`. Demonstrations that
    /// share an id with `eval` are rejected before any call.
    pub fn run(&self, demos: &Demos, eval: &[Instance], seed: u64, eval_split: &str) -> Result<EvalRun> {
        if eval.is_empty() {
            return Err(Error::InsufficientData(format!("evaluation split `{eval_split}` is empty")));
        }
        let eval_ids: HashSet<&str> = eval.iter().map(|i| i.id.as_str()).collect();
        for set in demos.sets() {
            if let Some(id) = set.ids().find(|id| eval_ids.contains(id)) {
                return Err(Error::Leakage(id.to_string()));
            }
        }
        for inst in eval {
            if demos.for_instance(&inst.id).is_none() {
                return Err(Error::Config(format!("no demonstrations planned for `{}`", inst.id)));
            }
        }
        let per_instance = map_bounded(eval, self.concurrency, |inst| {
            let set = demos.for_instance(&inst.id).expect("checked above");
            let messages = render_icl(set.pairs(), inst, self.labels, self.template)?;
            let req = CompletionRequest::new(self.model_id.clone(), messages)
                .temperature(self.temperature)
                .seed_hint(Some(derive_seed(seed, &[&inst.id, "icl"])))
                .tag(inst.id.clone(), Purpose::Icl);
            let predicted = parse_answer(&self.provider.complete(&req)?.text, self.labels);
            Ok(Prediction {
                instance_id: inst.id.clone(),
                correct: predicted.is_correct(inst),
                predicted,
            })
        })?;
        let accuracy = per_instance.iter().filter(|p| p.correct).count() as f64 / per_instance.len() as f64;
        Ok(EvalRun {
            seed,
            eval_split: eval_split.to_string(),
            demonstrations: demos.clone(),
            per_instance,
            accuracy,
        })
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Mean and sample standard deviation in percentage points, rounded to one
/// decimal. A single run reports std 0.0 and sets `single_run`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub single_run: bool,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1} ({:.1})", self.mean, self.std)
    }
}

/// Accuracies are fractions in [0, 1]. They are summed in sorted order, so
/// the result does not depend on run order.
pub fn aggregate(accuracies: &[f64]) -> Summary {
    let mut xs = accuracies.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return Summary {
            mean: 0.0,
            std: 0.0,
            runs: 0,
            single_run: false,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary {
        mean: round1(mean * 100.0),
        std: round1(std * 100.0),
        runs: n,
        single_run: n == 1,
    }
}

/// One category considered during validation picking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub name: String,
    /// Training ids per gold label.
    pub pool: BTreeMap<String, Vec<String>>,
    /// Wins ties against certain candidates.
    pub uncertain: bool,
}

/// The eight tripartite codes.
pub fn tripartite_candidates(pool: &CategoryPool) -> Vec<Candidate> {
    UncertaintyCategory::all()
        .map(|c| Candidate {
            name: c.code(),
            pool: pool.get(&c.code()),
            uncertain: c.group() == Group::Unc,
        })
        .collect()
}

/// Vanilla buckets: all wrong, all right, minority right, majority right.
pub const VANILLA_BUCKETS: [&str; 4] = ["000", "111", "001/010/100", "011/101/110"];

pub fn vanilla_candidates(pool: &CategoryPool) -> Vec<Candidate> {
    VANILLA_BUCKETS
        .iter()
        .map(|b| Candidate {
            name: b.to_string(),
            pool: pool.get(b),
            uncertain: b.contains('/'),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub accuracies: Vec<f64>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryChoice {
    pub chosen: String,
    pub validation: BTreeMap<String, CandidateScore>,
    pub dropped: Vec<String>,
}

/// Evaluates every non-empty candidate once per seed and keeps the best mean
/// accuracy. Ties go to uncertain candidates, then to the smaller name.
pub fn pick_best_category<F>(
    candidates: &[Candidate],
    train: &[Instance],
    labels: &LabelSet,
    seeds: &[u64],
    mut evaluate: F,
) -> Result<CategoryChoice>
where
    F: FnMut(&DemonstrationSet, u64) -> Result<f64>,
{
    let mut validation = BTreeMap::new();
    let mut dropped = Vec::new();
    let mut best: Option<(f64, &Candidate)> = None;
    for cand in candidates {
        let mut accuracies = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            match assemble(&cand.name, &cand.pool, train, labels, VALIDATION_SHOTS, seed)? {
                Some(set) => accuracies.push(evaluate(&set, seed)?),
                None => break,
            }
        }
        if accuracies.is_empty() {
            dropped.push(cand.name.clone());
            continue;
        }
        let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        let better = match best {
            None => true,
            Some((m, b)) => {
                if (mean - m).abs() > MEAN_TIE_EPS {
                    mean > m
                } else if cand.uncertain != b.uncertain {
                    cand.uncertain
                } else {
                    cand.name < b.name
                }
            }
        };
        if better {
            best = Some((mean, cand));
        }
        validation.insert(
            cand.name.clone(),
            CandidateScore {
                summary: aggregate(&accuracies),
                accuracies,
            },
        );
    }
    let (_, chosen) = best.ok_or(Error::AllDropped)?;
    Ok(CategoryChoice {
        chosen: chosen.name.clone(),
        validation,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub category: String,
    pub group: Group,
    pub count: usize,
    pub per_label: BTreeMap<String, usize>,
}

/// Category counts of one (model, dataset) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub model_id: String,
    pub dataset: String,
    pub labels: Vec<String>,
    pub total: usize,
    /// Observed categories only, sorted by name.
    pub rows: Vec<DistributionRow>,
    pub groups: BTreeMap<Group, usize>,
    /// |Unc| / total; `None` for an empty record set.
    pub wavering: Option<f64>,
}

impl DistributionTable {
    /// Tallies `(category, group, gold label)` entries.
    pub fn tally(
        model_id: &str,
        dataset: &str,
        labels: &LabelSet,
        entries: impl IntoIterator<Item = (String, Group, Option<String>)>,
    ) -> Self {
        let mut rows: BTreeMap<String, DistributionRow> = BTreeMap::new();
        let mut groups = BTreeMap::new();
        let mut total = 0;
        for (category, group, label) in entries {
            total += 1;
            *groups.entry(group).or_insert(0) += 1;
            let row = rows.entry(category.clone()).or_insert_with(|| DistributionRow {
                category,
                group,
                count: 0,
                per_label: labels.labels().iter().map(|l| (l.clone(), 0)).collect(),
            });
            row.count += 1;
            if let Some(l) = label.as_deref().and_then(|l| labels.canonical(l)) {
                *row.per_label.get_mut(l).expect("seeded with every label") += 1;
            }
        }
        let unc = groups.get(&Group::Unc).copied().unwrap_or(0);
        Self {
            model_id: model_id.into(),
            dataset: dataset.into(),
            labels: labels.labels().to_vec(),
            total,
            rows: rows.into_values().collect(),
            groups,
            wavering: (total > 0).then(|| unc as f64 / total as f64),
        }
    }

    /// `model,dataset,category,group,<labels…>,count`, one row per category.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["model", "dataset", "category", "group"];
        header.extend(self.labels.iter().map(String::as_str));
        header.push("count");
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![
                self.model_id.clone(),
                self.dataset.clone(),
                r.category.clone(),
                r.group.as_str().to_string(),
            ];
            rec.extend(self.labels.iter().map(|l| r.per_label.get(l).copied().unwrap_or(0).to_string()));
            rec.push(r.count.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn gold_of(instances: &[Instance]) -> BTreeMap<&str, &str> {
    instances.iter().map(|i| (i.id.as_str(), i.gold.as_str())).collect()
}

/// Distribution of tripartite records; `instances` supplies gold labels.
pub fn distribution_report(
    records: &[TripartiteRecord],
    instances: &[Instance],
    labels: &LabelSet,
    dataset: &str,
) -> DistributionTable {
    let gold = gold_of(instances);
    let model = records.first().map_or("", |r| r.model_id.as_str());
    DistributionTable::tally(
        model,
        dataset,
        labels,
        records.iter().map(|r| {
            (
                r.category.code(),
                r.category.group(),
                gold.get(r.instance_id.as_str()).map(|g| g.to_string()),
            )
        }),
    )
}

pub fn vanilla_distribution(
    records: &[VanillaRecord],
    instances: &[Instance],
    labels: &LabelSet,
    dataset: &str,
) -> DistributionTable {
    let gold = gold_of(instances);
    let model = records.first().map_or("", |r| r.model_id.as_str());
    DistributionTable::tally(
        model,
        dataset,
        labels,
        records.iter().map(|r| {
            (
                r.bucket.clone(),
                r.group,
                gold.get(r.instance_id.as_str()).map(|g| g.to_string()),
            )
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Unc,
    Cer,
}

/// Demonstration selection strategies.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    /// Per query: most similar training texts by embedding cosine.
    Similarity,
    /// Per query: highest BM25 relevance.
    Bm25,
    Diversity,
    Entropy,
    Perplexity,
    /// Unc keeps the lowest P(True), Cer the highest.
    PTrue(Polarity),
    /// Unc keeps the highest inconsistency, Cer the lowest.
    SelfCheck(Polarity),
    /// Vanilla-sampling bucket or group; `None` picks on validation.
    Vanilla(Option<String>),
    /// Tripartite code or group; `None` picks on validation.
    UncTtp(Option<String>),
}

impl Strategy {
    /// Every strategy in report order, category strategies picking on
    /// validation.
    pub fn all() -> Vec<Strategy> {
        vec![
            Strategy::Random,
            Strategy::Similarity,
            Strategy::Bm25,
            Strategy::Diversity,
            Strategy::Entropy,
            Strategy::Perplexity,
            Strategy::PTrue(Polarity::Unc),
            Strategy::PTrue(Polarity::Cer),
            Strategy::SelfCheck(Polarity::Unc),
            Strategy::SelfCheck(Polarity::Cer),
            Strategy::Vanilla(None),
            Strategy::UncTtp(None),
        ]
    }

    pub fn needs_logprobs(&self) -> bool {
        matches!(self, Strategy::Entropy | Strategy::Perplexity)
    }

    pub fn per_instance(&self) -> bool {
        matches!(self, Strategy::Similarity | Strategy::Bm25)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pol = |p: &Polarity| match p {
            Polarity::Unc => "unc",
            Polarity::Cer => "cer",
        };
        match self {
            Strategy::Random => f.write_str("random"),
            Strategy::Similarity => f.write_str("similarity"),
            Strategy::Bm25 => f.write_str("bm25"),
            Strategy::Diversity => f.write_str("diversity"),
            Strategy::Entropy => f.write_str("entropy"),
            Strategy::Perplexity => f.write_str("perplexity"),
            Strategy::PTrue(p) => write!(f, "ptrue-{}", pol(p)),
            Strategy::SelfCheck(p) => write!(f, "selfcheck-{}", pol(p)),
            Strategy::Vanilla(None) => f.write_str("vanilla"),
            Strategy::Vanilla(Some(c)) => write!(f, "vanilla:{c}"),
            Strategy::UncTtp(None) => f.write_str("uncttp"),
            Strategy::UncTtp(Some(c)) => write!(f, "uncttp:{c}"),
        }
    }
}

fn group_name(s: &str) -> Option<Group> {
    Group::ALL.into_iter().find(|g| g.as_str().eq_ignore_ascii_case(s))
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a.to_string())),
            None => (s, None),
        };
        let plain = |st: Strategy| match &arg {
            None => Ok(st),
            Some(_) => Err(Error::Config(format!("strategy `{head}` takes no argument"))),
        };
        match head.to_ascii_lowercase().as_str() {
            "random" => plain(Strategy::Random),
            "similarity" => plain(Strategy::Similarity),
            "bm25" => plain(Strategy::Bm25),
            "diversity" => plain(Strategy::Diversity),
            "entropy" => plain(Strategy::Entropy),
            "perplexity" => plain(Strategy::Perplexity),
            "ptrue" | "ptrue-unc" => plain(Strategy::PTrue(Polarity::Unc)),
            "ptrue-cer" => plain(Strategy::PTrue(Polarity::Cer)),
            "selfcheck" | "selfcheck-unc" => plain(Strategy::SelfCheck(Polarity::Unc)),
            "selfcheck-cer" => plain(Strategy::SelfCheck(Polarity::Cer)),
            "vanilla" => match arg {
                Some(a) if !VANILLA_BUCKETS.contains(&a.as_str()) && group_name(&a).is_none() => {
                    Err(Error::Config(format!("unknown vanilla category `{a}`")))
                }
                a => Ok(Strategy::Vanilla(a.map(|a| group_name(&a).map_or(a, |g| g.as_str().to_string())))),
            },
            "uncttp" | "unc-ttp" => match arg {
                Some(a) => {
                    if let Some(g) = group_name(&a) {
                        Ok(Strategy::UncTtp(Some(g.as_str().to_string())))
                    } else {
                        let code: UncertaintyCategory = a
                            .parse()
                            .map_err(|_| Error::Config(format!("unknown tripartite category `{a}`")))?;
                        Ok(Strategy::UncTtp(Some(code.code())))
                    }
                }
                None => Ok(Strategy::UncTtp(None)),
            },
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Measurements of the training split that a strategy selects from.
#[derive(Debug, Clone, PartialEq)]
pub enum Guidance {
    None,
    Tripartite(Vec<TripartiteRecord>),
    Vanilla(Vec<VanillaRecord>),
    /// Per-instance uncertainty scores, higher meaning more uncertain.
    Scores(Vec<(String, f64)>),
}

impl Guidance {
    /// Model whose measurements these are, when recorded.
    pub fn model_id(&self) -> Option<&str> {
        match self {
            Guidance::Tripartite(r) => r.first().map(|r| r.model_id.as_str()),
            Guidance::Vanilla(r) => r.first().map(|r| r.model_id.as_str()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub model_id: String,
    /// Model whose uncertainty records guided selection, when it differs
    /// from the evaluated one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guide_model_id: Option<String>,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub summary: Summary,
    /// Failed (unparseable) answers summed over runs.
    pub failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<CategoryChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionTable>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// `method,<dataset…>` grid of "mean (std)" cells; rows and columns follow
/// first appearance.
pub fn grid_csv(reports: &[EvalReport]) -> Result<String> {
    let mut methods: Vec<&str> = Vec::new();
    let mut datasets: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str), String> = BTreeMap::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        cells.insert((&r.method, &r.dataset), r.summary.to_string());
    }
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method"];
    header.extend(&datasets);
    w.write_record(&header).map_err(csv_err)?;
    for m in &methods {
        let mut rec = vec![m.to_string()];
        rec.extend(datasets.iter().map(|d| cells.get(&(*m, *d)).cloned().unwrap_or_default()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// End-to-end runner for one model on one dataset.
pub struct Pipeline<'a> {
    pub provider: &'a dyn Provider,
    pub model_id: String,
    pub spec: &'a DatasetSpec,
    pub template: &'a PromptTemplate,
    embedder: Option<&'a dyn Embedder>,
    tfidf: TfIdfEmbedder,
    pub n: usize,
    pub q: u32,
    pub temperature: f64,
    /// Keys wrong-label choice and sampling streams of the measurements.
    pub seed: u64,
    /// One evaluation run per seed.
    pub seeds: Vec<u64>,
    pub concurrency: usize,
    pub bm25: Bm25Params,
}

impl<'a> Pipeline<'a> {
    /// Defaults: 1-shot, q = 3, temperature 0.7, seeds 13/42/87, TF-IDF
    /// embeddings fitted on the training split.
    pub fn new(
        provider: &'a dyn Provider,
        model_id: impl Into<String>,
        spec: &'a DatasetSpec,
        template: &'a PromptTemplate,
    ) -> Self {
        Self {
            provider,
            model_id: model_id.into(),
            spec,
            template,
            embedder: None,
            tfidf: TfIdfEmbedder::fit(spec.train.iter().map(|i| i.text.as_str())),
            n: 1,
            q: DEFAULT_Q,
            temperature: SAMPLING_TEMPERATURE,
            seed: 0,
            seeds: DEFAULT_SEEDS.to_vec(),
            concurrency: DEFAULT_CONCURRENCY,
            bm25: Bm25Params::default(),
        }
    }

    pub fn with_embedder(mut self, embedder: &'a dyn Embedder) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn shots(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn q(mut self, q: u32) -> Self {
        self.q = q;
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn concurrency(mut self, n: usize) -> Self {
        self.concurrency = n;
        self
    }

    fn embedder(&self) -> &dyn Embedder {
        self.embedder.unwrap_or(&self.tfidf)
    }

    fn labels(&self) -> &'a LabelSet {
        &self.spec.labels
    }

    pub fn prober(&self) -> Prober<'_> {
        Prober::new(self.provider, self.model_id.clone(), self.labels(), self.template)
            .seed(self.seed)
            .concurrency(self.concurrency)
    }

    pub fn runner(&self) -> IclRunner<'_> {
        IclRunner {
            provider: self.provider,
            model_id: self.model_id.clone(),
            labels: self.labels(),
            template: self.template,
            temperature: self.temperature,
            concurrency: self.concurrency,
        }
    }

    /// Measures the training split as `strategy` requires.
    pub fn guidance(&self, strategy: &Strategy) -> Result<Guidance> {
        let train = &self.spec.train;
        let scores = |v: Vec<f64>| Guidance::Scores(train.iter().map(|i| i.id.clone()).zip(v).collect());
        Ok(match strategy {
            Strategy::Random | Strategy::Similarity | Strategy::Bm25 | Strategy::Diversity => Guidance::None,
            Strategy::Entropy => scores(map_bounded(train, self.concurrency, |i| {
                score_entropy(i, self.labels(), self.provider, &self.model_id, self.template)
            })?),
            Strategy::Perplexity => scores(map_bounded(train, self.concurrency, |i| {
                score_perplexity(i, self.provider, &self.model_id)
            })?),
            Strategy::PTrue(_) | Strategy::SelfCheck(_) => {
                let method = match strategy {
                    Strategy::PTrue(_) => VerificationMethod::PTrue,
                    _ => VerificationMethod::SelfCheck,
                };
                let v = self.prober().verify_all(train, method, self.q)?;
                Guidance::Scores(v.into_iter().map(|s| (s.instance_id, s.score)).collect())
            }
            Strategy::Vanilla(_) => Guidance::Vanilla(self.prober().vanilla_all(train, self.q, self.temperature)?),
            Strategy::UncTtp(_) => Guidance::Tripartite(self.prober().classify_all(train)?),
        })
    }

    fn pool(&self, guidance: &Guidance) -> Result<CategoryPool> {
        match guidance {
            Guidance::Tripartite(r) => CategoryPool::from_tripartite(r, &self.spec.train, self.labels()),
            Guidance::Vanilla(r) => CategoryPool::from_vanilla(r, &self.spec.train, self.labels()),
            _ => Err(Error::Config("category selection needs tripartite or vanilla records".into())),
        }
    }

    fn candidates(&self, strategy: &Strategy, pool: &CategoryPool) -> Result<Vec<Candidate>> {
        match strategy {
            Strategy::UncTtp(_) => Ok(tripartite_candidates(pool)),
            Strategy::Vanilla(_) => Ok(vanilla_candidates(pool)),
            other => Err(Error::Config(format!("strategy `{other}` has no categories"))),
        }
    }

    /// Per-label ids of a named category: a code or bucket, or a group.
    fn category_pool(&self, strategy: &Strategy, pool: &CategoryPool, name: &str) -> BTreeMap<String, Vec<String>> {
        match (strategy, group_name(name)) {
            (Strategy::UncTtp(_), Some(g)) => pool.group(g),
            (Strategy::Vanilla(_), Some(Group::CerW)) => pool.get("000"),
            (Strategy::Vanilla(_), Some(Group::CerR)) => pool.get("111"),
            (Strategy::Vanilla(_), Some(Group::Unc)) => pool.merged(VANILLA_BUCKETS[2..].iter().copied()),
            _ => pool.get(name),
        }
    }

    /// Compares 1-shot sets of every candidate category on validation.
    pub fn pick_category(&self, strategy: &Strategy, guidance: &Guidance) -> Result<CategoryChoice> {
        let pool = self.pool(guidance)?;
        let candidates = self.candidates(strategy, &pool)?;
        let runner = self.runner();
        pick_best_category(&candidates, &self.spec.train, self.labels(), &self.seeds, |set, seed| {
            Ok(runner
                .run(&Demos::Shared(set.clone()), &self.spec.validation, seed, "validation")?
                .accuracy)
        })
    }

    fn ranked(&self, scores: &[(String, f64)], descending: bool) -> RankedList {
        RankedList::new(
            scores
                .iter()
                .map(|(id, s)| (id.clone(), if descending { *s } else { -*s }))
                .collect(),
        )
    }

    /// Demonstrations of one run. `category` is required by category
    /// strategies and ignored otherwise.
    pub fn demonstrations(
        &self,
        strategy: &Strategy,
        guidance: &Guidance,
        category: Option<&str>,
        seed: u64,
        eval: &[Instance],
    ) -> Result<Demos> {
        let train = &self.spec.train;
        let labels = self.labels();
        let name = strategy.to_string();
        let scores = || match guidance {
            Guidance::Scores(s) => Ok(s.as_slice()),
            _ => Err(Error::Config(format!("strategy `{name}` needs score guidance"))),
        };
        let top = |descending: bool| -> Result<Demos> {
            let ranking = self.ranked(scores()?, descending);
            Ok(Demos::Shared(select_top_ranked(&ranking, train, labels, self.n, &name, seed, "")?))
        };
        match strategy {
            Strategy::Random => Ok(Demos::Shared(select_random(train, labels, self.n, seed)?)),
            Strategy::Diversity => Ok(Demos::Shared(select_diversity(train, labels, self.n, self.embedder(), seed)?)),
            Strategy::Similarity => {
                let index = SimilarityIndex::new(train, self.embedder())?;
                self.per_instance(eval, &name, seed, |q| index.rank(q, self.embedder()))
            }
            Strategy::Bm25 => {
                let index = Bm25Index::new(train, self.bm25);
                self.per_instance(eval, &name, seed, |q| Ok(index.rank(&q.text)))
            }
            Strategy::Entropy | Strategy::Perplexity => top(true),
            Strategy::PTrue(Polarity::Unc) | Strategy::SelfCheck(Polarity::Cer) => top(false),
            Strategy::PTrue(Polarity::Cer) | Strategy::SelfCheck(Polarity::Unc) => top(true),
            Strategy::Vanilla(fixed) | Strategy::UncTtp(fixed) => {
                let cat = fixed
                    .as_deref()
                    .or(category)
                    .ok_or_else(|| Error::Config(format!("strategy `{name}` needs a category")))?;
                let pool = self.pool(guidance)?;
                let ids = self.category_pool(strategy, &pool, cat);
                match assemble(cat, &ids, train, labels, self.n, seed)? {
                    Some(mut set) => {
                        set.provenance.strategy = name;
                        Ok(Demos::Shared(set))
                    }
                    None => Err(Error::InsufficientData(format!("category `{cat}` has no instances"))),
                }
            }
        }
    }

    fn per_instance<F>(&self, eval: &[Instance], name: &str, seed: u64, rank: F) -> Result<Demos>
    where
        F: Fn(&Instance) -> Result<RankedList> + Sync,
    {
        let sets = map_bounded(eval, self.concurrency, |q| {
            let ranking = rank(q)?;
            select_top_ranked(&ranking, &self.spec.train, self.labels(), self.n, name, seed, &q.id)
        })?;
        Ok(Demos::PerInstance(eval.iter().map(|i| i.id.clone()).zip(sets).collect()))
    }

    /// Measures, picks a category where needed, and evaluates on test once
    /// per seed.
    pub fn evaluate(&self, strategy: &Strategy) -> Result<EvalReport> {
        let guidance = self.guidance(strategy)?;
        self.evaluate_guided(strategy, &guidance)
    }

    /// As [`Pipeline::evaluate`] with precomputed guidance, possibly from
    /// another model.
    pub fn evaluate_guided(&self, strategy: &Strategy, guidance: &Guidance) -> Result<EvalReport> {
        let choice = match strategy {
            Strategy::Vanilla(None) | Strategy::UncTtp(None) => Some(self.pick_category(strategy, guidance)?),
            _ => None,
        };
        let category = choice.as_ref().map(|c| c.chosen.as_str());
        let runner = self.runner();
        let mut accuracies = Vec::with_capacity(self.seeds.len());
        let mut failed = 0;
        for &seed in &self.seeds {
            let demos = self.demonstrations(strategy, guidance, category, seed, &self.spec.test)?;
            let run = runner.run(&demos, &self.spec.test, seed, "test")?;
            failed += run.failed();
            accuracies.push(run.accuracy);
        }
        let distribution = match guidance {
            Guidance::Tripartite(r) => Some(distribution_report(r, &self.spec.train, self.labels(), &self.spec.name)),
            Guidance::Vanilla(r) => Some(vanilla_distribution(r, &self.spec.train, self.labels(), &self.spec.name)),
            _ => None,
        };
        let guide_model_id = guidance
            .model_id()
            .filter(|m| *m != self.model_id)
            .map(str::to_string);
        Ok(EvalReport {
            method: strategy.to_string(),
            dataset: self.spec.name.clone(),
            model_id: self.model_id.clone(),
            guide_model_id,
            n: self.n,
            seeds: self.seeds.clone(),
            summary: aggregate(&accuracies),
            accuracies,
            failed,
            category: choice,
            distribution,
        })
    }
}

/// Selects with another model's records and evaluates with this pipeline's
/// provider. Vanilla strategies read vanilla records, all others tripartite
/// records.
pub fn transfer_eval(records: &Path, pipeline: &Pipeline<'_>, strategy: &Strategy) -> Result<EvalReport> {
    if !records.exists() {
        return Err(Error::MissingRecords(records.to_path_buf()));
    }
    let guidance = match strategy {
        Strategy::Vanilla(_) => Guidance::Vanilla(read_jsonl(records)?),
        Strategy::UncTtp(_) => Guidance::Tripartite(read_jsonl(records)?),
        other => {
            return Err(Error::Config(format!(
                "transfer needs a category strategy, got `{other}`"
            )))
        }
    };
    pipeline.evaluate_guided(strategy, &guidance)
}
