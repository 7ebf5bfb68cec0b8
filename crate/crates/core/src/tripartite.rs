//! Inconsistency-based uncertainty measurements.
//!
//! - tripartite probing: three greedy answers under {no, right, wrong} label
//!   injection, folded into one of eight categories;
//! - vanilla sampling: `q` temperature samples of the plain prompt;
//! - P(True): probability the model affirms its own greedy answer;
//! - self-check: fraction of `q` sampled verifications that fail to affirm it.

use serde::{Deserialize, Serialize};

use crate::concurrency::{map_bounded, DEFAULT_CONCURRENCY};
use crate::error::{Error, Result};
use crate::model::{Group, Instance, LabelSet, ParsedAnswer, Setting, TripartiteRecord};
use crate::prompting::{choose_wrong_label, parse_answer, render, render_verify, PromptTemplate};
use crate::provider::{
    CompletionRequest, CompletionResponse, Provider, Purpose, TokenLogprob, GREEDY,
    SAMPLING_TEMPERATURE,
};
use crate::rng::derive_seed;

/// Samples per instance for vanilla sampling and verification.
pub const DEFAULT_Q: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VanillaRecord {
    pub instance_id: String,
    pub model_id: String,
    pub answers: Vec<ParsedAnswer>,
    /// Correctness of each sample, in sample order.
    pub correct: Vec<u8>,
    /// Label holding a strict majority of the samples.
    pub majority: Option<String>,
    pub group: Group,
    /// Candidate pool this record belongs to, see [`vanilla_bucket`].
    pub bucket: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerificationMethod {
    #[serde(rename = "ptrue")]
    PTrue,
    #[serde(rename = "selfcheck")]
    SelfCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationScore {
    pub instance_id: String,
    pub model_id: String,
    pub method: VerificationMethod,
    /// P(True): probability of affirmation. Self-check: inconsistency
    /// fraction, higher means more uncertain.
    pub score: f64,
    pub first_answer: ParsedAnswer,
}

/// Strict-majority label among the parsed answers.
pub fn majority(answers: &[ParsedAnswer]) -> Option<String> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for a in answers.iter().filter_map(ParsedAnswer::label) {
        match counts.iter_mut().find(|(l, _)| *l == a) {
            Some((_, c)) => *c += 1,
            None => counts.push((a, 1)),
        }
    }
    counts
        .into_iter()
        .find(|(_, c)| 2 * c > answers.len())
        .map(|(l, _)| l.to_string())
}

/// Cer_R when every sample is gold, Cer_W when every sample is the same
/// non-gold answer (all-Failed included), Unc otherwise.
pub fn vanilla_group(answers: &[ParsedAnswer], instance: &Instance) -> Group {
    let all_equal = answers.windows(2).all(|w| w[0] == w[1]);
    match answers.first() {
        Some(first) if all_equal && first.is_correct(instance) => Group::CerR,
        Some(_) if all_equal => Group::CerW,
        _ => Group::Unc,
    }
}

/// Candidate pool name for a vanilla record: `000` / `111` for the certain
/// groups; wavering records go to the minority-right pool (`001/010/100` for
/// q = 3) or the majority-right pool (`011/101/110`).
pub fn vanilla_bucket(group: Group, correct_count: usize, q: usize) -> String {
    match group {
        Group::CerW => "0".repeat(q),
        Group::CerR => "1".repeat(q),
        Group::Unc => {
            let top = q.saturating_sub(1).max(1);
            let k = if 2 * correct_count > q {
                correct_count.max(q / 2 + 1).min(top)
            } else {
                correct_count.min((q / 2).max(1)).max(1)
            };
            (0..1u32 << q)
                .filter(|v| v.count_ones() as usize == k)
                .map(|v| format!("{v:0q$b}"))
                .collect::<Vec<_>>()
                .join("/")
        }
    }
}

/// Normalized probability mass of `True` among the True/False alternatives at
/// the first token position.
pub fn true_probability(logprobs: &[TokenLogprob]) -> Option<f64> {
    let first = logprobs.first()?;
    let mut t = 0.0;
    let mut f = 0.0;
    let alternatives: Vec<(&str, f64)> = if first.top.is_empty() {
        vec![(first.token.as_str(), first.logprob)]
    } else {
        first.top.iter().map(|a| (a.token.as_str(), a.logprob)).collect()
    };
    for (tok, lp) in alternatives {
        match tok.trim().to_lowercase().as_str() {
            "true" => t += lp.exp(),
            "false" => f += lp.exp(),
            _ => {}
        }
    }
    (t + f > 0.0).then(|| t / (t + f))
}

fn verdict(text: &str) -> Option<bool> {
    let tf = LabelSet::new(["True", "False"]).expect("static label set");
    parse_answer(text, &tf).label().map(|l| l == "True")
}

/// Runs measurements for one model against one provider.
pub struct Prober<'a> {
    pub provider: &'a dyn Provider,
    pub model_id: String,
    pub labels: &'a LabelSet,
    pub template: &'a PromptTemplate,
    /// Keys wrong-label choice and sampling seeds.
    pub seed: u64,
    pub concurrency: usize,
}

impl<'a> Prober<'a> {
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
            seed: 0,
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn concurrency(mut self, n: usize) -> Self {
        self.concurrency = n;
        self
    }

    fn ask(
        &self,
        instance: &Instance,
        setting: &Setting,
        purpose: Purpose,
        temperature: f64,
        seed_hint: Option<u64>,
    ) -> Result<CompletionResponse> {
        let messages = render(instance, self.labels, setting, self.template)?;
        let req = CompletionRequest::new(self.model_id.clone(), messages)
            .temperature(temperature)
            .seed_hint(seed_hint)
            .tag(instance.id.clone(), purpose);
        self.provider.complete(&req)
    }

    fn sample_seed(&self, instance: &Instance, stream: &str, index: u32) -> u64 {
        derive_seed(self.seed, &[&instance.id, stream, &index.to_string()])
    }

    /// Three greedy probes, one per setting; exactly three provider calls.
    pub fn run_unc_ttp(&self, instance: &Instance) -> Result<TripartiteRecord> {
        instance.validate(self.labels)?;
        let wrong = Setting::WrongLabel {
            injected: choose_wrong_label(instance, self.labels, self.seed)?,
        };
        let settings = [Setting::NoLabel, Setting::RightLabel, wrong];
        let mut answers = Vec::with_capacity(3);
        for s in settings {
            let resp = self.ask(instance, &s, Purpose::Probe { setting: s.clone() }, GREEDY, None)?;
            answers.push(parse_answer(&resp.text, self.labels));
        }
        let answers: [ParsedAnswer; 3] = answers.try_into().expect("three settings");
        Ok(TripartiteRecord::new(
            instance.id.clone(),
            self.model_id.clone(),
            answers,
            instance,
        ))
    }

    /// `q` temperature samples of the plain prompt; exactly `q` calls.
    pub fn run_vanilla(&self, instance: &Instance, q: u32, temperature: f64) -> Result<VanillaRecord> {
        instance.validate(self.labels)?;
        let mut answers = Vec::with_capacity(q as usize);
        for j in 0..q {
            let resp = self.ask(
                instance,
                &Setting::NoLabel,
                Purpose::Sample { index: j },
                temperature,
                Some(self.sample_seed(instance, "vanilla", j)),
            )?;
            answers.push(parse_answer(&resp.text, self.labels));
        }
        let correct: Vec<u8> = answers.iter().map(|a| a.is_correct(instance) as u8).collect();
        let group = vanilla_group(&answers, instance);
        let n_correct = correct.iter().filter(|c| **c == 1).count();
        Ok(VanillaRecord {
            instance_id: instance.id.clone(),
            model_id: self.model_id.clone(),
            majority: majority(&answers),
            bucket: vanilla_bucket(group, n_correct, q as usize),
            answers,
            correct,
            group,
        })
    }

    /// Greedy plain-prompt answer; identical to the no-label probe request,
    /// so a shared cache serves both.
    fn first_stage(&self, instance: &Instance) -> Result<(ParsedAnswer, String)> {
        let resp = self.ask(
            instance,
            &Setting::NoLabel,
            Purpose::Probe {
                setting: Setting::NoLabel,
            },
            GREEDY,
            None,
        )?;
        let parsed = parse_answer(&resp.text, self.labels);
        let proposed = parsed
            .label()
            .map(str::to_string)
            .unwrap_or_else(|| resp.text.trim().to_string());
        Ok((parsed, proposed))
    }

    fn verify(
        &self,
        instance: &Instance,
        proposed: &str,
        index: u32,
        temperature: f64,
        logprobs: bool,
    ) -> Result<CompletionResponse> {
        let messages = render_verify(instance, self.labels, proposed, self.template)?;
        let seed_hint = (temperature > 0.0).then(|| self.sample_seed(instance, "verify", index));
        let req = CompletionRequest::new(self.model_id.clone(), messages)
            .temperature(temperature)
            .with_logprobs(logprobs)
            .seed_hint(seed_hint)
            .tag(
                instance.id.clone(),
                Purpose::Verify {
                    proposed: proposed.to_string(),
                    index,
                },
            );
        self.provider.complete(&req)
    }

    /// With logprobs: one greedy verification scored by the True mass
    /// (2 calls). Otherwise: share of `True` over `q` sampled verifications
    /// (q + 1 calls).
    pub fn score_ptrue(&self, instance: &Instance, q: u32) -> Result<VerificationScore> {
        instance.validate(self.labels)?;
        let (first_answer, proposed) = self.first_stage(instance)?;
        let score = if self.provider.supports_logprobs() {
            let resp = self.verify(instance, &proposed, 0, GREEDY, true)?;
            let lp = resp
                .token_logprobs
                .ok_or_else(|| Error::Capability("verification returned no logprobs".into()))?;
            true_probability(&lp).ok_or_else(|| {
                Error::Capability("no True/False alternatives at the answer position".into())
            })?
        } else {
            if q == 0 {
                return Err(Error::Capability(
                    "P(True) needs logprobs or at least one sampled verification".into(),
                ));
            }
            let mut yes = 0;
            for j in 0..q {
                let resp = self.verify(instance, &proposed, j, SAMPLING_TEMPERATURE, false)?;
                yes += (verdict(&resp.text) == Some(true)) as u32;
            }
            yes as f64 / q as f64
        };
        Ok(VerificationScore {
            instance_id: instance.id.clone(),
            model_id: self.model_id.clone(),
            method: VerificationMethod::PTrue,
            score,
            first_answer,
        })
    }

    /// Fraction of `q` sampled verifications that do not affirm the greedy
    /// answer; q + 1 calls.
    pub fn score_selfcheck(&self, instance: &Instance, q: u32) -> Result<VerificationScore> {
        instance.validate(self.labels)?;
        if q == 0 {
            return Err(Error::Config("self-check needs q ≥ 1".into()));
        }
        let (first_answer, proposed) = self.first_stage(instance)?;
        let mut contradicting = 0;
        for j in 0..q {
            let resp = self.verify(instance, &proposed, j, SAMPLING_TEMPERATURE, false)?;
            contradicting += (verdict(&resp.text) != Some(true)) as u32;
        }
        Ok(VerificationScore {
            instance_id: instance.id.clone(),
            model_id: self.model_id.clone(),
            method: VerificationMethod::SelfCheck,
            score: contradicting as f64 / q as f64,
            first_answer,
        })
    }

    pub fn classify_all(&self, instances: &[Instance]) -> Result<Vec<TripartiteRecord>> {
        map_bounded(instances, self.concurrency, |i| self.run_unc_ttp(i))
    }

    pub fn vanilla_all(&self, instances: &[Instance], q: u32, temperature: f64) -> Result<Vec<VanillaRecord>> {
        map_bounded(instances, self.concurrency, |i| self.run_vanilla(i, q, temperature))
    }

    pub fn verify_all(
        &self,
        instances: &[Instance],
        method: VerificationMethod,
        q: u32,
    ) -> Result<Vec<VerificationScore>> {
        map_bounded(instances, self.concurrency, |i| match method {
            VerificationMethod::PTrue => self.score_ptrue(i, q),
            VerificationMethod::SelfCheck => self.score_selfcheck(i, q),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{MockProfile, MockProvider, TopLogprob};

    fn inst() -> Instance {
        Instance::new("sh-1", "area man", "sarcastic")
    }

    fn mock() -> MockProvider {
        MockProvider::new(LabelSet::sarcasm(), [inst()])
    }

    fn code(m: MockProvider) -> String {
        let l = LabelSet::sarcasm();
        let t = PromptTemplate::default();
        let r = Prober::new(&m, "m", &l, &t).run_unc_ttp(&inst()).unwrap();
        assert_eq!(m.calls(), 3);
        r.category.code()
    }

    #[test]
    fn unc_ttp_examples() {
        let g = "sarcastic";
        let w = "non-sarcastic";
        let all_gold = mock().script("sh-1", "no_label", g).script("sh-1", "right_label", g).script("sh-1", "wrong_label", g);
        assert_eq!(code(all_gold), "111");
        let wavering = mock().script("sh-1", "no_label", w).script("sh-1", "right_label", g).script("sh-1", "wrong_label", w);
        assert_eq!(code(wavering), "010");
        let failed = mock()
            .script("sh-1", "no_label", "I refuse.")
            .script("sh-1", "right_label", g)
            .script("sh-1", "wrong_label", g);
        assert_eq!(code(failed), "011");
    }

    fn vanilla(answers: &[&str], labels: LabelSet, gold: &str) -> VanillaRecord {
        let i = Instance::new("x", "t", gold);
        let mut m = MockProvider::new(labels.clone(), [i.clone()]);
        for (j, a) in answers.iter().enumerate() {
            m = m.script_indexed("x", "sample", j as u32, a);
        }
        let t = PromptTemplate::default();
        let r = Prober::new(&m, "m", &labels, &t)
            .run_vanilla(&i, answers.len() as u32, SAMPLING_TEMPERATURE)
            .unwrap();
        assert_eq!(m.calls(), answers.len());
        r
    }

    #[test]
    fn vanilla_examples() {
        let r = vanilla(&["sarcastic"; 3], LabelSet::sarcasm(), "sarcastic");
        assert_eq!((r.group, r.bucket.as_str()), (Group::CerR, "111"));
        let r = vanilla(&["sarcastic", "sarcastic", "non-sarcastic"], LabelSet::sarcasm(), "sarcastic");
        assert_eq!(r.group, Group::Unc);
        assert_eq!(r.majority.as_deref(), Some("sarcastic"));
        assert_eq!(r.bucket, "011/101/110");
        let r = vanilla(&["positive", "neutral", "negative"], LabelSet::financial(), "positive");
        assert_eq!((r.majority, r.group), (None, Group::Unc));
        assert_eq!(r.bucket, "001/010/100");
        let r = vanilla(&["no idea"; 3], LabelSet::sarcasm(), "sarcastic");
        assert_eq!((r.group, r.bucket.as_str()), (Group::CerW, "000"));
    }

    #[test]
    fn buckets_for_q3_cover_table_rows() {
        let names: Vec<String> = [
            (Group::CerW, 0),
            (Group::CerR, 3),
            (Group::Unc, 0),
            (Group::Unc, 1),
            (Group::Unc, 2),
        ]
        .iter()
        .map(|(g, k)| vanilla_bucket(*g, *k, 3))
        .collect();
        assert_eq!(names, ["000", "111", "001/010/100", "001/010/100", "011/101/110"]);
    }

    #[test]
    fn true_probability_normalizes_two_masses() {
        let lp = vec![TokenLogprob {
            token: "True".into(),
            logprob: 0.9f64.ln(),
            top: vec![
                TopLogprob { token: "True".into(), logprob: 0.9f64.ln() },
                TopLogprob { token: " false".into(), logprob: 0.1f64.ln() },
                TopLogprob { token: "Maybe".into(), logprob: 0.3f64.ln() },
            ],
        }];
        assert!((true_probability(&lp).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ptrue_sampling_path_counts_affirmations() {
        let m = mock()
            .script("sh-1", "no_label", "sarcastic")
            .script_indexed("sh-1", "verify", 0, "True")
            .script_indexed("sh-1", "verify", 1, "True")
            .script_indexed("sh-1", "verify", 2, "False");
        let l = LabelSet::sarcasm();
        let t = PromptTemplate::default();
        let s = Prober::new(&m, "m", &l, &t).score_ptrue(&inst(), 3).unwrap();
        assert!((s.score - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.calls(), 4);
    }

    #[test]
    fn ptrue_logprob_path_uses_two_calls() {
        let m = mock().with_profile(MockProfile::oracle().logprobs(true));
        let l = LabelSet::sarcasm();
        let t = PromptTemplate::default();
        let s = Prober::new(&m, "m", &l, &t).score_ptrue(&inst(), 3).unwrap();
        assert!(s.score > 0.5 && s.score < 1.0, "{}", s.score);
        assert_eq!(m.calls(), 2);
    }

    #[test]
    fn selfcheck_fraction() {
        let l = LabelSet::sarcasm();
        let t = PromptTemplate::default();
        let agree = mock().script("sh-1", "no_label", "sarcastic").script("sh-1", "verify", "True");
        let s = Prober::new(&agree, "m", &l, &t).score_selfcheck(&inst(), 3).unwrap();
        assert_eq!(s.score, 0.0);
        assert_eq!(agree.calls(), 4);
        let one_off = mock()
            .script("sh-1", "no_label", "sarcastic")
            .script("sh-1", "verify", "True")
            .script_indexed("sh-1", "verify", 1, "False");
        let s = Prober::new(&one_off, "m", &l, &t).score_selfcheck(&inst(), 3).unwrap();
        assert!((s.score - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_profiles_match_enumeration() {
        // every (p0, f_r, f_w) ∈ {0,1}^3 with hand-enumerated codes
        let cases = [
            ((0.0, 0.0, 0.0), "000"),
            ((0.0, 0.0, 1.0), "000"),
            ((0.0, 1.0, 0.0), "010"),
            ((0.0, 1.0, 1.0), "010"),
            ((1.0, 0.0, 0.0), "111"),
            ((1.0, 0.0, 1.0), "110"),
            ((1.0, 1.0, 0.0), "111"),
            ((1.0, 1.0, 1.0), "110"),
        ];
        for ((p0, fr, fw), want) in cases {
            let m = mock().with_profile(MockProfile::new(p0, fr, fw));
            assert_eq!(code(m), want, "profile ({p0},{fr},{fw})");
        }
    }
}
