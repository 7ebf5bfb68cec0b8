//! White-box uncertainty scores: label entropy and text perplexity.
//!
//! Both need token logprobs; a provider without them yields
//! [`Error::Capability`] before any request is made.

use crate::error::{Error, Result};
use crate::model::{fold, Instance, LabelSet, Setting};
use crate::prompting::{render, render_perplexity, PromptTemplate};
use crate::provider::{CompletionRequest, Provider, Purpose, TokenLogprob, TopLogprob, GREEDY};

/// Token budget of the perplexity scoring call.
const PERPLEXITY_MAX_TOKENS: u32 = 512;

/// Shannon entropy (nats) of `probs` after normalisation. Zero entries
/// contribute nothing.
pub fn entropy(probs: &[f64]) -> f64 {
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| {
            let q = p / total;
            q * q.ln()
        })
        .sum::<f64>()
}

/// exp(−mean logprob); `None` for an empty sequence.
pub fn perplexity(logprobs: &[f64]) -> Option<f64> {
    if logprobs.is_empty() {
        return None;
    }
    Some((-logprobs.iter().sum::<f64>() / logprobs.len() as f64).exp())
}

/// Probability mass per label from the alternatives at one position.
///
/// A token maps to a label when it equals the folded label or is a prefix
/// of exactly one label. `None` when no alternative maps to any label.
pub fn label_distribution(top: &[TopLogprob], labels: &LabelSet) -> Option<Vec<f64>> {
    let folded: Vec<String> = labels.labels().iter().map(|l| fold(l)).collect();
    let mut mass = vec![0.0; labels.len()];
    let mut hit = false;
    for alt in top {
        let t = fold(&alt.token);
        if t.is_empty() {
            continue;
        }
        let idx = folded.iter().position(|l| *l == t).or_else(|| {
            let mut prefixed = folded.iter().enumerate().filter(|(_, l)| l.starts_with(&t));
            match (prefixed.next(), prefixed.next()) {
                (Some((i, _)), None) => Some(i),
                _ => None,
            }
        });
        if let Some(i) = idx {
            mass[i] += alt.logprob.exp();
            hit = true;
        }
    }
    hit.then_some(mass)
}

fn require_logprobs(provider: &dyn Provider) -> Result<()> {
    if provider.supports_logprobs() {
        Ok(())
    } else {
        Err(Error::Capability(format!(
            "{} does not expose token logprobs",
            provider.endpoint_id()
        )))
    }
}

fn logprobs_of(tokens: Option<Vec<TokenLogprob>>) -> Result<Vec<TokenLogprob>> {
    tokens.ok_or_else(|| Error::Capability("response carries no token logprobs".into()))
}

/// Entropy of the label distribution at the first answer position whose
/// alternatives name a label. Higher means more uncertain.
pub fn score_entropy(
    instance: &Instance,
    labels: &LabelSet,
    provider: &dyn Provider,
    model_id: &str,
    template: &PromptTemplate,
) -> Result<f64> {
    require_logprobs(provider)?;
    let req = CompletionRequest::new(model_id, render(instance, labels, &Setting::NoLabel, template)?)
        .temperature(GREEDY)
        .with_logprobs(true)
        .tag(instance.id.clone(), Purpose::Probe { setting: Setting::NoLabel });
    let tokens = logprobs_of(provider.complete(&req)?.token_logprobs)?;
    tokens
        .iter()
        .find_map(|t| label_distribution(&t.top, labels))
        .map(|d| entropy(&d))
        .ok_or_else(|| Error::Protocol(format!("no label token among logprobs for `{}`", instance.id)))
}

/// Perplexity of the instance text under an echo scoring call.
pub fn score_perplexity(instance: &Instance, provider: &dyn Provider, model_id: &str) -> Result<f64> {
    require_logprobs(provider)?;
    let req = CompletionRequest::new(model_id, render_perplexity(instance))
        .temperature(GREEDY)
        .max_tokens(PERPLEXITY_MAX_TOKENS)
        .with_logprobs(true)
        .tag(instance.id.clone(), Purpose::Perplexity);
    let tokens = logprobs_of(provider.complete(&req)?.token_logprobs)?;
    let lp: Vec<f64> = tokens.iter().map(|t| t.logprob).collect();
    perplexity(&lp).ok_or_else(|| Error::Protocol(format!("empty scoring completion for `{}`", instance.id)))
}
