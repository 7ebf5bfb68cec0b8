//! Offline provider driven by scripted answers and/or a behaviour profile.
//!
//! A profile describes a sycophantic classifier: each instance gets a fixed
//! base answer (right with probability `p0`), the right-label probe follows
//! the injected label with probability `f_r`, the wrong-label probe follows
//! with probability `f_w`, and temperature samples drift away from the base
//! answer with probability `sample_drift`. All draws are keyed by
//! `(profile seed, instance id, stream, seed hint)`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{
    CompletionRequest, CompletionResponse, Provider, Purpose, TokenLogprob, TopLogprob,
};
use crate::error::{Error, Result};
use crate::model::{fold, Instance, LabelSet, Setting};
use crate::rng::unit;

pub const REFUSAL_TEXT: &str = "I cannot determine this.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProfile {
    pub p0: f64,
    #[serde(default)]
    pub f_r: f64,
    #[serde(default)]
    pub f_w: f64,
    #[serde(default)]
    pub refusal_rate: f64,
    #[serde(default)]
    pub sample_drift: f64,
    #[serde(default)]
    pub seed: u64,
    /// Whether token logprobs are exposed.
    #[serde(default)]
    pub logprobs: bool,
}

impl MockProfile {
    pub fn new(p0: f64, f_r: f64, f_w: f64) -> Self {
        Self {
            p0,
            f_r,
            f_w,
            refusal_rate: 0.0,
            sample_drift: 0.0,
            seed: 0,
            logprobs: false,
        }
    }

    /// Always answers the gold label, under every setting.
    pub fn oracle() -> Self {
        Self::new(1.0, 1.0, 0.0)
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn refusal_rate(mut self, r: f64) -> Self {
        self.refusal_rate = r;
        self
    }

    pub fn sample_drift(mut self, d: f64) -> Self {
        self.sample_drift = d;
        self
    }

    pub fn logprobs(mut self, on: bool) -> Self {
        self.logprobs = on;
        self
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p0", self.p0),
            ("f_r", self.f_r),
            ("f_w", self.f_w),
            ("refusal_rate", self.refusal_rate),
            ("sample_drift", self.sample_drift),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("mock profile {name}={v} outside [0,1]")));
            }
        }
        Ok(())
    }

    fn draw(&self, instance: &Instance, stream: &str) -> f64 {
        unit(self.seed, &[&instance.id, stream])
    }

    fn refuses(&self, instance: &Instance) -> bool {
        self.draw(instance, "refuse") < self.refusal_rate
    }

    /// The greedy answer to the plain prompt.
    fn base_answer<'a>(&self, labels: &'a LabelSet, instance: &Instance) -> &'a str {
        if self.draw(instance, "base") < self.p0 {
            labels.canonical(&instance.gold).expect("gold validated")
        } else {
            other_label(labels, &instance.gold, self.draw(instance, "base_wrong"))
        }
    }

    /// Base answer, possibly drifted when sampling at temperature > 0.
    fn belief<'a>(
        &self,
        labels: &'a LabelSet,
        instance: &Instance,
        temperature: f64,
        seed_hint: Option<u64>,
        index: u32,
    ) -> &'a str {
        let base = self.base_answer(labels, instance);
        if temperature == 0.0 || self.sample_drift == 0.0 {
            return base;
        }
        let hint = seed_hint.unwrap_or(0).to_string();
        let idx = index.to_string();
        let u = unit(self.seed, &[&instance.id, "drift", &hint, &idx]);
        if u < self.sample_drift {
            let v = unit(self.seed, &[&instance.id, "drift_to", &hint, &idx]);
            other_label(labels, base, v)
        } else {
            base
        }
    }
}

/// Uniform pick among labels other than `not`, driven by `u ∈ [0,1)`.
fn other_label<'a>(labels: &'a LabelSet, not: &str, u: f64) -> &'a str {
    let others: Vec<&String> = labels.labels().iter().filter(|l| fold(l) != fold(not)).collect();
    let i = ((u * others.len() as f64) as usize).min(others.len() - 1);
    others[i]
}

/// Scripted answer of a profile for one request.
pub fn mock_behavior(
    profile: &MockProfile,
    labels: &LabelSet,
    instance: &Instance,
    purpose: &Purpose,
    temperature: f64,
    seed_hint: Option<u64>,
) -> String {
    if let Purpose::Perplexity = purpose {
        return instance.text.clone();
    }
    if profile.refuses(instance) {
        return REFUSAL_TEXT.to_string();
    }
    match purpose {
        Purpose::Probe { setting } => {
            let base = profile.belief(labels, instance, temperature, seed_hint, 0);
            match setting {
                Setting::NoLabel => base.to_string(),
                Setting::RightLabel => {
                    if profile.draw(instance, "follow_right") < profile.f_r {
                        instance.gold.clone()
                    } else {
                        base.to_string()
                    }
                }
                Setting::WrongLabel { injected } => {
                    if profile.draw(instance, "follow_wrong") < profile.f_w {
                        injected.clone()
                    } else {
                        base.to_string()
                    }
                }
            }
        }
        Purpose::Sample { index } => profile
            .belief(labels, instance, temperature, seed_hint, *index)
            .to_string(),
        Purpose::Icl => profile
            .belief(labels, instance, temperature, seed_hint, 0)
            .to_string(),
        Purpose::Verify { proposed, index } => {
            let belief = profile.belief(labels, instance, temperature, seed_hint, *index);
            if fold(proposed) == fold(belief) { "True" } else { "False" }.to_string()
        }
        Purpose::Perplexity => unreachable!(),
    }
}

fn logprobs_for(
    profile: &MockProfile,
    labels: &LabelSet,
    instance: &Instance,
    purpose: &Purpose,
    text: &str,
) -> Vec<TokenLogprob> {
    let ln = |p: f64| p.ln();
    match purpose {
        Purpose::Perplexity => text
            .split_whitespace()
            .enumerate()
            .map(|(i, tok)| TokenLogprob {
                token: tok.to_string(),
                logprob: -(0.05 + 3.0 * unit(profile.seed, &[&instance.id, "ppl", &i.to_string()])),
                top: Vec::new(),
            })
            .collect(),
        Purpose::Verify { .. } => {
            let c = 0.5 + 0.49 * profile.draw(instance, "verify_conf");
            let (pt, pf) = if text == "True" { (c, 1.0 - c) } else { (1.0 - c, c) };
            vec![TokenLogprob {
                token: text.to_string(),
                logprob: ln(pt.max(pf)),
                top: vec![
                    TopLogprob { token: "True".into(), logprob: ln(pt) },
                    TopLogprob { token: "False".into(), logprob: ln(pf) },
                ],
            }]
        }
        _ => {
            let k = labels.len() as f64;
            let Some(chosen) = labels.index_of(text) else {
                return vec![TokenLogprob {
                    token: text.split_whitespace().next().unwrap_or("").to_string(),
                    logprob: ln(0.5),
                    top: Vec::new(),
                }];
            };
            let conf = 1.0 / k + (1.0 - 1.0 / k) * 0.98 * profile.draw(instance, "label_conf");
            let rest = (1.0 - conf) / (k - 1.0);
            let top = labels
                .labels()
                .iter()
                .enumerate()
                .map(|(i, l)| TopLogprob {
                    token: l.clone(),
                    logprob: ln(if i == chosen { conf } else { rest }),
                })
                .collect();
            vec![TokenLogprob {
                token: text.to_string(),
                logprob: ln(conf),
                top,
            }]
        }
    }
}

/// One line of a mock fixture file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum FixtureLine {
    Profile { profile: MockProfile },
    Answer {
        instance_id: String,
        setting: String,
        #[serde(default)]
        index: Option<u32>,
        answer: String,
    },
}

/// Parsed fixture: scripted answers plus an optional profile.
///
/// Without a profile the fixture is exhaustive: requests with no scripted
/// answer fail with [`Error::UnknownInstance`].
#[derive(Debug, Clone, Default)]
pub struct MockFixture {
    pub profile: Option<MockProfile>,
    /// `(instance id, setting key, sample index) -> answer`.
    pub answers: BTreeMap<(String, String, Option<u32>), String>,
}

impl MockFixture {
    pub fn parse(path: &Path, contents: &str) -> Result<Self> {
        let mut fx = MockFixture::default();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FixtureLine = serde_json::from_str(line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            match parsed {
                FixtureLine::Profile { profile } => {
                    profile.validate()?;
                    fx.profile = Some(profile);
                }
                FixtureLine::Answer {
                    instance_id,
                    setting,
                    index,
                    answer,
                } => {
                    fx.answers.insert((instance_id, setting, index), answer);
                }
            }
        }
        Ok(fx)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &s)
    }
}

pub struct MockProvider {
    labels: LabelSet,
    instances: HashMap<String, Instance>,
    fixture: MockFixture,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(labels: LabelSet, instances: impl IntoIterator<Item = Instance>) -> Self {
        Self {
            labels,
            instances: instances.into_iter().map(|i| (i.id.clone(), i)).collect(),
            fixture: MockFixture::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_profile(mut self, profile: MockProfile) -> Self {
        self.fixture.profile = Some(profile);
        self
    }

    pub fn with_fixture(mut self, fixture: MockFixture) -> Self {
        self.fixture = fixture;
        self
    }

    /// Scripts the answer for `(instance, setting key)`; keys are `no_label`,
    /// `right_label`, `wrong_label`, `sample`, `verify`, `icl`, `perplexity`.
    pub fn script(mut self, instance_id: &str, key: &str, answer: &str) -> Self {
        self.fixture
            .answers
            .insert((instance_id.into(), key.into(), None), answer.into());
        self
    }

    pub fn script_indexed(mut self, instance_id: &str, key: &str, index: u32, answer: &str) -> Self {
        self.fixture
            .answers
            .insert((instance_id.into(), key.into(), Some(index)), answer.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    fn scripted(&self, id: &str, purpose: &Purpose) -> Option<&String> {
        let key = purpose.fixture_key();
        let index = match purpose {
            Purpose::Sample { index } | Purpose::Verify { index, .. } => Some(*index),
            _ => None,
        };
        let a = &self.fixture.answers;
        index
            .and_then(|ix| a.get(&(id.to_string(), key.to_string(), Some(ix))))
            .or_else(|| a.get(&(id.to_string(), key.to_string(), None)))
            .or_else(|| a.get(&(id.to_string(), "*".to_string(), None)))
    }
}

impl Provider for MockProvider {
    fn endpoint_id(&self) -> String {
        "mock".into()
    }

    fn supports_logprobs(&self) -> bool {
        self.fixture.profile.as_ref().is_some_and(|p| p.logprobs)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if request.logprobs_wanted && !self.supports_logprobs() {
            return Err(Error::Capability(
                "mock fixture does not provide token logprobs".into(),
            ));
        }
        let tag = request
            .tag
            .as_ref()
            .ok_or_else(|| Error::Protocol("mock provider needs a request tag".into()))?;
        let id = &tag.instance_id;
        let scripted = self.scripted(id, &tag.purpose).cloned();
        let instance = self.instances.get(id);
        let text = match (scripted, &self.fixture.profile, instance) {
            (Some(text), _, _) => text,
            (None, Some(profile), Some(inst)) => mock_behavior(
                profile,
                &self.labels,
                inst,
                &tag.purpose,
                request.temperature,
                request.seed_hint,
            ),
            _ => return Err(Error::UnknownInstance(id.clone())),
        };
        let mut response = CompletionResponse::text(text);
        response
            .provider_meta
            .insert("model".into(), serde_json::Value::String(request.model_id.clone()));
        if request.logprobs_wanted {
            let (Some(profile), Some(inst)) = (&self.fixture.profile, instance) else {
                return Err(Error::UnknownInstance(id.clone()));
            };
            response.token_logprobs = Some(logprobs_for(
                profile,
                &self.labels,
                inst,
                &tag.purpose,
                &response.text,
            ));
        }
        Ok(response)
    }
}
