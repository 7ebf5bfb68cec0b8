//! Shared domain types and the category-labeling algebra.
//!
//! An instance is probed under three settings (no label, right label, wrong
//! label). Each probe yields one correctness bit, and the three bits, read in
//! that order, form a 3-character code such as `011`. `000` and `111` are the
//! two certain outcomes; every other code marks an instance on which the
//! model wavers.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Case-folds a label or answer fragment for comparison.
pub fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Ordered, case-insensitively unique list of class labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels
            .into_iter()
            .map(|l| l.into().trim().to_string())
            .collect();
        if labels.len() < 2 {
            return Err(Error::InvalidLabelSet(format!(
                "need at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if l.is_empty() {
                return Err(Error::InvalidLabelSet("empty label".into()));
            }
            if !seen.insert(fold(l)) {
                return Err(Error::InvalidLabelSet(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels })
    }

    /// Sarcasm headlines: `sarcastic / non-sarcastic`.
    pub fn sarcasm() -> Self {
        Self::new(["sarcastic", "non-sarcastic"]).expect("static label set")
    }

    /// Humor speech: `humorous / not humorous`.
    pub fn humor() -> Self {
        Self::new(["humorous", "not humorous"]).expect("static label set")
    }

    /// Financial phrasebank: `positive / neutral / negative`.
    pub fn financial() -> Self {
        Self::new(["positive", "neutral", "negative"]).expect("static label set")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Returns the canonical spelling of `label`, if it belongs to the set.
    pub fn canonical(&self, label: &str) -> Option<&str> {
        let f = fold(label);
        self.labels
            .iter()
            .find(|l| fold(l) == f)
            .map(String::as_str)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.canonical(label).is_some()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        let f = fold(label);
        self.labels.iter().position(|l| fold(l) == f)
    }

    /// `a or b` for two labels, `a, b, or c` for more.
    pub fn enumeration(&self) -> String {
        match self.labels.as_slice() {
            [a, b] => format!("{a} or {b}"),
            [init @ .., last] => format!("{}, or {last}", init.join(", ")),
            [] => String::new(),
        }
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text: String,
    #[serde(rename = "label")]
    pub gold: String,
}

impl Instance {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold: gold.into(),
        }
    }

    pub fn validate(&self, labels: &LabelSet) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::InvalidInstance {
                id: self.id.clone(),
                reason: "empty text".into(),
            });
        }
        if !labels.contains(&self.gold) {
            return Err(Error::InvalidInstance {
                id: self.id.clone(),
                reason: format!("gold label `{}` not in label set", self.gold),
            });
        }
        Ok(())
    }

    pub fn is_gold(&self, label: &str) -> bool {
        fold(label) == fold(&self.gold)
    }
}

/// The label-injection condition a prompt is rendered under.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "setting")]
pub enum Setting {
    NoLabel,
    RightLabel,
    WrongLabel { injected: String },
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::NoLabel => "no_label",
            Setting::RightLabel => "right_label",
            Setting::WrongLabel { .. } => "wrong_label",
        }
    }

    /// The label presented to the model, if any.
    pub fn injected<'a>(&'a self, instance: &'a Instance) -> Option<&'a str> {
        match self {
            Setting::NoLabel => None,
            Setting::RightLabel => Some(&instance.gold),
            Setting::WrongLabel { injected } => Some(injected),
        }
    }

    pub fn validate(&self, instance: &Instance, labels: &LabelSet) -> Result<()> {
        if let Setting::WrongLabel { injected } = self {
            if !labels.contains(injected) {
                return Err(Error::InvalidInstance {
                    id: instance.id.clone(),
                    reason: format!("injected label `{injected}` not in label set"),
                });
            }
            if instance.is_gold(injected) {
                return Err(Error::InvalidInstance {
                    id: instance.id.clone(),
                    reason: "wrong-label setting injects the gold label".into(),
                });
            }
        }
        Ok(())
    }
}

/// Correctness under {no-label, right-label, wrong-label}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OutcomeBits {
    pub no_label: bool,
    pub right_label: bool,
    pub wrong_label: bool,
}

impl OutcomeBits {
    pub fn new(no_label: bool, right_label: bool, wrong_label: bool) -> Self {
        Self {
            no_label,
            right_label,
            wrong_label,
        }
    }

    pub fn as_array(&self) -> [u8; 3] {
        [
            self.no_label as u8,
            self.right_label as u8,
            self.wrong_label as u8,
        ]
    }

    /// All eight triples in code order `000..111`.
    pub fn all() -> impl Iterator<Item = OutcomeBits> {
        (0u8..8).map(|v| OutcomeBits::new(v & 4 != 0, v & 2 != 0, v & 1 != 0))
    }
}

impl Serialize for OutcomeBits {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for OutcomeBits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = <[u8; 3]>::deserialize(d)?;
        let bit = |b: u8| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("bit must be 0 or 1, got {other}"))),
        };
        Ok(OutcomeBits::new(bit(raw[0])?, bit(raw[1])?, bit(raw[2])?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Unwaveringly wrong.
    #[serde(rename = "Cer_W")]
    CerW,
    /// Unwaveringly right.
    #[serde(rename = "Cer_R")]
    CerR,
    #[serde(rename = "Unc")]
    Unc,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::CerW, Group::CerR, Group::Unc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Group::CerW => "Cer_W",
            Group::CerR => "Cer_R",
            Group::Unc => "Unc",
        }
    }

    pub fn is_certain(&self) -> bool {
        !matches!(self, Group::Unc)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Cer_W" | "cer_w" | "cerw" => Ok(Group::CerW),
            "Cer_R" | "cer_r" | "cerr" => Ok(Group::CerR),
            "Unc" | "unc" => Ok(Group::Unc),
            _ => Err(Error::Config(format!("unknown group `{s}`"))),
        }
    }
}

/// One of the eight tripartite codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UncertaintyCategory(u8);

impl UncertaintyCategory {
    pub fn all() -> impl Iterator<Item = UncertaintyCategory> {
        (0u8..8).map(UncertaintyCategory)
    }

    pub fn bits(&self) -> OutcomeBits {
        OutcomeBits::new(self.0 & 4 != 0, self.0 & 2 != 0, self.0 & 1 != 0)
    }

    pub fn code(&self) -> String {
        format!("{:03b}", self.0)
    }

    pub fn group(&self) -> Group {
        match self.0 {
            0 => Group::CerW,
            7 => Group::CerR,
            _ => Group::Unc,
        }
    }
}

impl fmt::Display for UncertaintyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03b}", self.0)
    }
}

impl FromStr for UncertaintyCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() == 3 && s.bytes().all(|b| b == b'0' || b == b'1') {
            Ok(UncertaintyCategory(
                u8::from_str_radix(s, 2).expect("validated binary"),
            ))
        } else {
            Err(Error::Config(format!("`{s}` is not a 3-bit category code")))
        }
    }
}

impl Serialize for UncertaintyCategory {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.code())
    }
}

impl<'de> Deserialize<'de> for UncertaintyCategory {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Concatenates the bits in {no, right, wrong} order.
pub fn category_of(bits: OutcomeBits) -> UncertaintyCategory {
    UncertaintyCategory(
        (bits.no_label as u8) << 2 | (bits.right_label as u8) << 1 | bits.wrong_label as u8,
    )
}

pub fn group_members(group: Group) -> BTreeSet<UncertaintyCategory> {
    UncertaintyCategory::all()
        .filter(|c| c.group() == group)
        .collect()
}

/// A model answer mapped back onto the label set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParsedAnswer {
    Label(String),
    /// No label could be found in the completion (refusal or off-format).
    Failed,
}

impl ParsedAnswer {
    pub fn label(&self) -> Option<&str> {
        match self {
            ParsedAnswer::Label(l) => Some(l),
            ParsedAnswer::Failed => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, ParsedAnswer::Failed)
    }

    /// Failed answers are never correct.
    pub fn is_correct(&self, instance: &Instance) -> bool {
        self.label().is_some_and(|l| instance.is_gold(l))
    }
}

impl Serialize for ParsedAnswer {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.label().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParsedAnswer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match Option::<String>::deserialize(d)? {
            Some(l) => ParsedAnswer::Label(l),
            None => ParsedAnswer::Failed,
        })
    }
}

/// Outcome of the three probes on one instance. Serialized as one JSONL line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripartiteRecord {
    pub instance_id: String,
    pub model_id: String,
    pub bits: OutcomeBits,
    pub category: UncertaintyCategory,
    /// Ordered {no, right, wrong}.
    pub raw_answers: [ParsedAnswer; 3],
}

impl TripartiteRecord {
    pub fn new(
        instance_id: impl Into<String>,
        model_id: impl Into<String>,
        raw_answers: [ParsedAnswer; 3],
        instance: &Instance,
    ) -> Self {
        let bits = OutcomeBits::new(
            raw_answers[0].is_correct(instance),
            raw_answers[1].is_correct(instance),
            raw_answers[2].is_correct(instance),
        );
        Self {
            instance_id: instance_id.into(),
            model_id: model_id.into(),
            bits,
            category: category_of(bits),
            raw_answers,
        }
    }

    pub fn group(&self) -> Group {
        self.category.group()
    }
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    instance_id: String,
    model_id: String,
    bits: OutcomeBits,
    code: UncertaintyCategory,
    group: Group,
    raw_answers: [ParsedAnswer; 3],
}

impl Serialize for TripartiteRecord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RecordWire {
            instance_id: self.instance_id.clone(),
            model_id: self.model_id.clone(),
            bits: self.bits,
            code: self.category,
            group: self.category.group(),
            raw_answers: self.raw_answers.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TripartiteRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = RecordWire::deserialize(d)?;
        if category_of(w.bits) != w.code || w.code.group() != w.group {
            return Err(serde::de::Error::custom(format!(
                "record `{}`: code {} / group {} disagree with bits",
                w.instance_id, w.code, w.group
            )));
        }
        Ok(TripartiteRecord {
            instance_id: w.instance_id,
            model_id: w.model_id,
            bits: w.bits,
            category: w.code,
            raw_answers: w.raw_answers,
        })
    }
}
