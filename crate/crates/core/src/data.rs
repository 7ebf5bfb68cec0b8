//! Dataset ingestion, seeded splitting, JSONL artifacts and run
//! configuration.
//!
//! Ingested datasets and split specs are stored as pretty JSON; records and
//! scores as JSONL, one value per line. Both are written byte-stably, so a
//! load/save cycle reproduces the file exactly.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, LabelSet};
use crate::rng::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    /// Guesses from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "jsonl" | "ndjson" => Some(Self::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::Config(format!("unknown input format `{other}`"))),
        }
    }
}

/// Column names read during ingestion. A missing id column falls back to
/// `row-{index}`; the split column is optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Columns {
    pub text: String,
    pub label: String,
    pub id: String,
    pub split: Option<String>,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            text: "text".into(),
            label: "label".into(),
            id: "id".into(),
            split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub labels: LabelSet,
    pub instances: Vec<Instance>,
    /// Split assignment read from the input, by instance id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub split_column: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub labels: LabelSet,
    pub balance: bool,
    pub train: Vec<Instance>,
    pub validation: Vec<Instance>,
    pub test: Vec<Instance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "validation" | "valid" | "dev" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Row {
    line: usize,
    id: Option<String>,
    text: String,
    label: String,
    split: Option<String>,
}

fn csv_rows(path: &Path, columns: &Columns) -> Result<Vec<Row>> {
    // The reader's positions lag by one terminator on CRLF input, so lines
    // are counted from the first content byte at or after the offset.
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let line_at = |byte: u64| {
        let mut at = (byte as usize).min(bytes.len());
        while at < bytes.len() && matches!(bytes[at], b'\r' | b'\n') {
            at += 1;
        }
        bytes[..at].iter().filter(|b| **b == b'\n').count() + 1
    };
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| format_err(path, 1, e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let text_ix = find(&columns.text).ok_or_else(|| format_err(path, 1, format!("no column `{}`", columns.text)))?;
    let label_ix =
        find(&columns.label).ok_or_else(|| format_err(path, 1, format!("no column `{}`", columns.label)))?;
    let id_ix = find(&columns.id);
    let split_ix = match &columns.split {
        Some(c) => Some(find(c).ok_or_else(|| format_err(path, 1, format!("no column `{c}`")))?),
        None => None,
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| line_at(p.byte()));
            format_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| line_at(p.byte()));
        let get = |i: usize| rec.get(i).map(str::to_string);
        rows.push(Row {
            line,
            id: id_ix.and_then(get).filter(|s| !s.is_empty()),
            text: get(text_ix).unwrap_or_default(),
            label: get(label_ix).unwrap_or_default(),
            split: split_ix.and_then(get),
        });
    }
    Ok(rows)
}

fn jsonl_rows(path: &Path, columns: &Columns) -> Result<Vec<Row>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&line).map_err(|e| format_err(path, line_no, e.to_string()))?;
        let field = |name: &str| -> Option<String> {
            obj.get(name).and_then(|v| match v {
                serde_json::Value::String(s) => Some(s.clone()),
                serde_json::Value::Null => None,
                other => Some(other.to_string()),
            })
        };
        let need = |name: &str| field(name).ok_or_else(|| format_err(path, line_no, format!("missing field `{name}`")));
        rows.push(Row {
            line: line_no,
            id: field(&columns.id),
            text: need(&columns.text)?,
            label: need(&columns.label)?,
            split: columns.split.as_deref().and_then(field),
        });
    }
    Ok(rows)
}

/// Reads a labelled corpus. Labels are matched case-insensitively and stored
/// in the label set's spelling; an unknown label fails with its line number.
pub fn ingest(
    path: impl AsRef<Path>,
    format: InputFormat,
    columns: &Columns,
    labels: &LabelSet,
    name: impl Into<String>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let rows = match format {
        InputFormat::Csv => csv_rows(path, columns)?,
        InputFormat::Jsonl => jsonl_rows(path, columns)?,
    };
    let mut seen = HashSet::new();
    let mut instances = Vec::with_capacity(rows.len());
    let mut split_column = BTreeMap::new();
    for (index, row) in rows.into_iter().enumerate() {
        let gold = labels.canonical(&row.label).ok_or_else(|| Error::UnknownLabel {
            path: path.to_path_buf(),
            line: row.line,
            label: row.label.clone(),
        })?;
        if row.text.trim().is_empty() {
            return Err(format_err(path, row.line, "empty text"));
        }
        let id = row.id.unwrap_or_else(|| format!("row-{index}"));
        if !seen.insert(id.clone()) {
            return Err(format_err(path, row.line, format!("duplicate id `{id}`")));
        }
        if let Some(s) = row.split {
            split_column.insert(id.clone(), s);
        }
        instances.push(Instance::new(id, row.text, gold));
    }
    Ok(Dataset {
        name: name.into(),
        labels: labels.clone(),
        instances,
        split_column,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn new(train: usize, validation: usize, test: usize) -> Self {
        Self { train, validation, test }
    }

    fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

impl FromStr for SplitSizes {
    type Err = Error;

    /// `train/validation/test`, separated by `/` or `,`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(['/', ','])
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad split sizes `{s}`: {e}")))?;
        match parts[..] {
            [a, b, c] => Ok(Self::new(a, b, c)),
            _ => Err(Error::Config(format!("split sizes need three numbers, got `{s}`"))),
        }
    }
}

/// Seeded, disjoint train/validation/test split. With `balance`, every split
/// holds the same count of each label, so each size must divide by K.
/// Instances keep their dataset order inside each split.
pub fn split(dataset: &Dataset, sizes: SplitSizes, balance: bool, seed: u64) -> Result<DatasetSpec> {
    let n = dataset.instances.len();
    if sizes.total() > n {
        return Err(Error::InfeasibleBalance(format!(
            "requested {} instances from a dataset of {n}",
            sizes.total()
        )));
    }
    let mut assign: Vec<Option<SplitName>> = vec![None; n];
    let fill = |order: &[usize], quotas: [usize; 3], assign: &mut Vec<Option<SplitName>>| {
        let names = [SplitName::Train, SplitName::Validation, SplitName::Test];
        let mut it = order.iter();
        for (name, q) in names.into_iter().zip(quotas) {
            for &i in it.by_ref().take(q) {
                assign[i] = Some(name);
            }
        }
    };
    if balance {
        let k = dataset.labels.len();
        for (name, size) in [("train", sizes.train), ("validation", sizes.validation), ("test", sizes.test)] {
            if size % k != 0 {
                return Err(Error::InfeasibleBalance(format!(
                    "{name} size {size} is not divisible by {k} labels"
                )));
            }
        }
        let quotas = [sizes.train / k, sizes.validation / k, sizes.test / k];
        let need: usize = quotas.iter().sum();
        for label in dataset.labels.labels() {
            let mut idx: Vec<usize> = (0..n).filter(|&i| dataset.instances[i].is_gold(label)).collect();
            if idx.len() < need {
                return Err(Error::InfeasibleBalance(format!(
                    "label `{label}` has {} instances, balanced split needs {need}",
                    idx.len()
                )));
            }
            idx.shuffle(&mut keyed_rng(seed, &["split", label]));
            fill(&idx, quotas, &mut assign);
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut keyed_rng(seed, &["split"]));
        fill(&idx, [sizes.train, sizes.validation, sizes.test], &mut assign);
    }
    let pick = |name: SplitName| -> Vec<Instance> {
        dataset
            .instances
            .iter()
            .zip(&assign)
            .filter(|(_, a)| **a == Some(name))
            .map(|(i, _)| i.clone())
            .collect()
    };
    Ok(DatasetSpec {
        name: dataset.name.clone(),
        labels: dataset.labels.clone(),
        balance,
        train: pick(SplitName::Train),
        validation: pick(SplitName::Validation),
        test: pick(SplitName::Test),
    })
}

impl Dataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    /// Uses the ingested split column (train/validation/test) instead of a
    /// random split; rows with other values are ignored.
    pub fn presplit(&self) -> Result<DatasetSpec> {
        if self.split_column.is_empty() {
            return Err(Error::Config(format!("dataset `{}` has no split column", self.name)));
        }
        let mut spec = DatasetSpec {
            name: self.name.clone(),
            labels: self.labels.clone(),
            balance: false,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for inst in &self.instances {
            let Some(s) = self.split_column.get(&inst.id) else { continue };
            let Ok(name) = s.parse::<SplitName>() else { continue };
            spec.split_mut(name).push(inst.clone());
        }
        Ok(spec)
    }
}

impl DatasetSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = read_json(path.as_ref())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn split(&self, name: SplitName) -> &[Instance] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    fn split_mut(&mut self, name: SplitName) -> &mut Vec<Instance> {
        match name {
            SplitName::Train => &mut self.train,
            SplitName::Validation => &mut self.validation,
            SplitName::Test => &mut self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &Instance> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    /// Disjointness, label validity and, when declared, balance.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for inst in self.all() {
            inst.validate(&self.labels)?;
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::InvalidInstance {
                    id: inst.id.clone(),
                    reason: "appears in more than one split".into(),
                });
            }
        }
        if self.balance {
            for name in [SplitName::Train, SplitName::Validation, SplitName::Test] {
                let counts = label_counts(self.split(name), &self.labels);
                if counts.windows(2).any(|w| w[0] != w[1]) {
                    return Err(Error::InfeasibleBalance(format!(
                        "{} split is declared balanced but has label counts {counts:?}",
                        name.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Instances per label, in label-set order.
pub fn label_counts(instances: &[Instance], labels: &LabelSet) -> Vec<usize> {
    let mut c = vec![0; labels.len()];
    for i in instances {
        if let Some(ix) = labels.index_of(&i.gold) {
            c[ix] += 1;
        }
    }
    c
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| format_err(path, e.line(), e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, to_jsonl(items)?.as_bytes())
}

/// Blank lines are skipped; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format_err(path, i + 1, e.to_string())))
        .collect()
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Default seeds of the repeated evaluation runs.
pub const DEFAULT_SEEDS: [u64; 3] = [13, 42, 87];

/// Flat run configuration; every key can be overridden on the command line.
///
/// ```toml
/// provider = "openai"          # or "mock"
/// endpoint = "http://localhost:8000/v1"
/// model = "mistral-7b-instruct"
/// api_key_env = "OPENAI_API_KEY"
/// logprobs = true
/// dataset = "data/sh.spec.json"
/// output = "runs/sh"
/// n = 1
/// q = 3
/// temperature = 0.7
/// seeds = [13, 42, 87]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub provider: String,
    pub endpoint: Option<String>,
    pub model: String,
    pub api_key_env: String,
    /// Whether the endpoint returns token logprobs.
    pub logprobs: bool,
    /// Scripted answers for the mock provider.
    pub fixture: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub output: PathBuf,
    /// Response cache; defaults to `<output>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub template: Option<PathBuf>,
    /// Keys wrong-label choice and sampling streams.
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub q: u32,
    pub temperature: f64,
    pub concurrency: usize,
    /// `tfidf` or `remote`.
    pub embedder: String,
    pub embed_endpoint: Option<String>,
    pub embed_model: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            provider: "mock".into(),
            endpoint: None,
            model: "mock".into(),
            api_key_env: crate::provider::DEFAULT_API_KEY_ENV.into(),
            logprobs: true,
            fixture: None,
            dataset: None,
            output: PathBuf::from("out"),
            cache_dir: None,
            template: None,
            seed: 0,
            seeds: DEFAULT_SEEDS.to_vec(),
            n: 1,
            q: crate::tripartite::DEFAULT_Q,
            temperature: crate::provider::SAMPLING_TEMPERATURE,
            concurrency: crate::concurrency::DEFAULT_CONCURRENCY,
            embedder: "tfidf".into(),
            embed_endpoint: None,
            embed_model: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&s).map_err(|e| {
            let line = e.span().map_or(0, |sp| s[..sp.start].matches('\n').count() + 1);
            format_err(path, line, e.message().to_string())
        })
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output.join("cache"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        for p in [&self.dataset, &self.fixture, &self.template].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        match self.provider.as_str() {
            "mock" => {}
            "openai" if self.endpoint.is_some() => {}
            "openai" => return Err(Error::Config("provider `openai` needs an endpoint".into())),
            other => return Err(Error::Config(format!("unknown provider `{other}`"))),
        }
        match self.embedder.as_str() {
            "tfidf" => Ok(()),
            "remote" if self.embed_endpoint.is_some() || self.endpoint.is_some() => Ok(()),
            "remote" => Err(Error::Config("remote embedder needs an endpoint".into())),
            other => Err(Error::Config(format!("unknown embedder `{other}`"))),
        }
    }
}

/// The first three runs use [`DEFAULT_SEEDS`]; further ones derive from them.
pub fn seeds_for_runs(runs: usize) -> Vec<u64> {
    (0..runs)
        .map(|i| match DEFAULT_SEEDS.get(i) {
            Some(s) => *s,
            None => crate::rng::derive_seed(DEFAULT_SEEDS[0], &["run", &i.to_string()]),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn synthetic(per_label: &[usize], labels: &LabelSet) -> Dataset {
        let mut instances = Vec::new();
        for (li, &count) in per_label.iter().enumerate() {
            for j in 0..count {
                instances.push(Instance::new(format!("x{li}-{j}"), format!("t {j}"), labels.labels()[li].as_str()));
            }
        }
        Dataset {
            name: "syn".into(),
            labels: labels.clone(),
            instances,
            split_column: BTreeMap::new(),
        }
    }

    #[test]
    fn csv_balanced_six_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "d.csv",
            "text,label\na,sarcastic\nb,non-sarcastic\nc,Sarcastic\nd,non-sarcastic\ne,sarcastic\nf,non-sarcastic\n",
        );
        let d = ingest(&p, InputFormat::Csv, &Columns::default(), &LabelSet::sarcasm(), "sh").unwrap();
        assert_eq!(label_counts(&d.instances, &d.labels), [3, 3]);
        assert_eq!(d.instances[0].id, "row-0");
        assert_eq!(d.instances[2].gold, "sarcastic");
    }

    #[test]
    fn unknown_label_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "text,label\nfine,positive\nmeh,positve\n");
        match ingest(&p, InputFormat::Csv, &Columns::default(), &LabelSet::financial(), "fp") {
            Err(Error::UnknownLabel { line, label, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(label, "positve");
            }
            other => panic!("expected UnknownLabel, got {other:?}"),
        }
        let p = write(dir.path(), "crlf.csv", "text,label\r\nfine,positive\r\n\r\nmeh,positve\r\n");
        assert!(matches!(
            ingest(&p, InputFormat::Csv, &Columns::default(), &LabelSet::financial(), "fp"),
            Err(Error::UnknownLabel { line: 4, .. })
        ));
        let p = write(dir.path(), "d.jsonl", "{\"text\":\"a\",\"label\":\"positive\"}\n\n{\"text\":\"b\",\"label\":\"up\"}\n");
        assert!(matches!(
            ingest(&p, InputFormat::Jsonl, &Columns::default(), &LabelSet::financial(), "fp"),
            Err(Error::UnknownLabel { line: 3, .. })
        ));
    }

    #[test]
    fn jsonl_with_ids_and_split_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "d.jsonl",
            "{\"id\":\"a\",\"text\":\"x\",\"label\":\"humorous\",\"split\":\"train\"}\n{\"id\":\"b\",\"text\":\"y\",\"label\":\"not humorous\",\"split\":\"test\"}\n",
        );
        let cols = Columns {
            split: Some("split".into()),
            ..Columns::default()
        };
        let d = ingest(&p, InputFormat::Jsonl, &cols, &LabelSet::humor(), "hs").unwrap();
        let spec = d.presplit().unwrap();
        assert_eq!(spec.train[0].id, "a");
        assert_eq!(spec.test[0].id, "b");
    }

    #[test]
    fn save_load_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let d = synthetic(&[4, 4], &LabelSet::sarcasm());
        let p = dir.path().join("d.json");
        d.save(&p).unwrap();
        let first = fs::read(&p).unwrap();
        Dataset::load(&p).unwrap().save(&p).unwrap();
        assert_eq!(first, fs::read(&p).unwrap());
    }

    #[test]
    fn balanced_split_divisibility() {
        let labels = LabelSet::financial();
        let d = synthetic(&[100, 100, 100], &labels);
        assert!(matches!(
            split(&d, SplitSizes::new(100, 0, 0), true, 1),
            Err(Error::InfeasibleBalance(_))
        ));
        let s = split(&d, SplitSizes::new(99, 0, 0), true, 1).unwrap();
        assert_eq!(label_counts(&s.train, &labels), [33, 33, 33]);
    }

    #[test]
    fn fp_shaped_split() {
        let labels = LabelSet::financial();
        let d = synthetic(&[400, 450, 400], &labels);
        let s = split(&d, SplitSizes::new(300, 600, 300), true, 7).unwrap();
        assert_eq!(label_counts(&s.train, &labels), [100, 100, 100]);
        assert_eq!(label_counts(&s.validation, &labels), [200, 200, 200]);
        assert_eq!(label_counts(&s.test, &labels), [100, 100, 100]);
        s.validate().unwrap();
        assert_eq!(s, split(&d, SplitSizes::new(300, 600, 300), true, 7).unwrap());
        assert_ne!(s.train, split(&d, SplitSizes::new(300, 600, 300), true, 8).unwrap().train);
        assert!(split(&synthetic(&[100, 200, 100], &labels), SplitSizes::new(300, 600, 300), true, 7).is_err());
    }

    #[test]
    fn sizes_parse() {
        assert_eq!("500/1500/200".parse::<SplitSizes>().unwrap(), SplitSizes::new(500, 1500, 200));
        assert!("1,2".parse::<SplitSizes>().is_err());
    }

    #[test]
    fn config_parses_and_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "run.toml", "model = \"m\"\nn = 2\nseeds = [1, 2]\n");
        let c = RunConfig::load(&p).unwrap();
        assert_eq!((c.model.as_str(), c.n, c.q), ("m", 2, 3));
        c.validate().unwrap();
        let p = write(dir.path(), "bad.toml", "model = \"m\"\nshots = 2\n");
        assert!(matches!(RunConfig::load(&p), Err(Error::Format { line: 2, .. })));
        let bad = RunConfig { n: 0, ..RunConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn default_seed_schedule() {
        assert_eq!(seeds_for_runs(3), [13, 42, 87]);
        assert_eq!(seeds_for_runs(5).len(), 5);
    }
}
