//! Prompt rendering for the three probe settings, wrong-label choice, and
//! answer parsing.
//!
//! Template bodies use `{slot}` placeholders (`{{`/`}}` for literal braces):
//!
//! | slot | value |
//! |------|-------|
//! | `{labels}` | all labels, `a or b` / `a, b, or c` |
//! | `{A}`..`{Z}` | the label at that position |
//! | `{text}` | instance text, verbatim |
//! | `{injected}` | label presented as ground truth (injected body only) |
//! | `{answer}` | proposed answer (verify body only) |
//!
//! The instruction comes first and the instance text after it.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{fold, Instance, LabelSet, ParsedAnswer, Setting};
use crate::provider::Message;
use crate::rng::keyed_rng;

pub const ANSWER_INSTRUCTION: &str = "Answer with exactly one label.";

const STANCE_SENTENCE: &str = "do not change your stance so easily";

const DEFAULT_NO_LABEL: &str = "Your job is to determine whether the text is {labels}. \
Answer with exactly one label.\n\nText: {text}";

const DEFAULT_INJECTED: &str = "Your job is to determine whether the text is {labels} by \
reference to the given label, which presents the ground truth of the text as {injected}. \
Despite having to refer to the provided labels, you should still have your own thinking and \
do not change your stance so easily. Answer with exactly one label.\n\nText: {text}";

const DEFAULT_VERIFY: &str = "Your job is to determine whether the text is {labels}.\n\n\
Text: {text}\n\nProposed answer: {answer}. Is the proposed answer correct? Answer True or False.";

const PERPLEXITY_PROMPT: &str = "Repeat the following text exactly.\n\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    /// Sent as a system message when non-empty.
    pub system_preamble: String,
    pub no_label_body: String,
    pub injected_body: String,
    pub verify_body: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system_preamble: String::new(),
            no_label_body: DEFAULT_NO_LABEL.into(),
            injected_body: DEFAULT_INJECTED.into(),
            verify_body: DEFAULT_VERIFY.into(),
        }
    }
}

enum Piece<'a> {
    Lit(&'a str),
    Slot(&'a str),
}

fn pieces(body: &str) -> Result<Vec<Piece<'_>>> {
    let mut out = Vec::new();
    let mut rest = body;
    while !rest.is_empty() {
        let Some(pos) = rest.find(['{', '}']) else {
            out.push(Piece::Lit(rest));
            break;
        };
        out.push(Piece::Lit(&rest[..pos]));
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push(Piece::Lit("{"));
            rest = after;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push(Piece::Lit("}"));
            rest = after;
        } else if tail.starts_with('}') {
            return Err(Error::Template(format!("unmatched `}}` in {body:?}")));
        } else {
            let end = tail
                .find('}')
                .ok_or_else(|| Error::Template(format!("unclosed `{{` in {body:?}")))?;
            out.push(Piece::Slot(&tail[1..end]));
            rest = &tail[end + 1..];
        }
    }
    Ok(out)
}

fn slots(body: &str) -> Result<Vec<&str>> {
    Ok(pieces(body)?
        .into_iter()
        .filter_map(|p| match p {
            Piece::Slot(s) => Some(s),
            Piece::Lit(_) => None,
        })
        .collect())
}

fn fill(body: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(body.len() + 64);
    for p in pieces(body)? {
        match p {
            Piece::Lit(s) => out.push_str(s),
            Piece::Slot(name) => out.push_str(
                &lookup(name).ok_or_else(|| Error::Template(format!("unknown slot `{{{name}}}`")))?,
            ),
        }
    }
    Ok(out)
}

fn label_slot(labels: &LabelSet, name: &str) -> Option<String> {
    if name == "labels" {
        return Some(labels.enumeration());
    }
    let b = name.as_bytes();
    if b.len() == 1 && b[0].is_ascii_uppercase() {
        return labels.labels().get((b[0] - b'A') as usize).cloned();
    }
    None
}

impl PromptTemplate {
    /// Checks the required slots of every body.
    pub fn validate(&self) -> Result<()> {
        let require = |section: &str, body: &str, needed: &[&str]| -> Result<()> {
            let present = slots(body)?;
            for n in needed {
                if !present.contains(n) {
                    return Err(Error::Template(format!("{section} body lacks `{{{n}}}`")));
                }
            }
            Ok(())
        };
        slots(&self.system_preamble)?;
        require("no_label", &self.no_label_body, &["text"])?;
        require("injected", &self.injected_body, &["text", "injected"])?;
        require("verify", &self.verify_body, &["text", "answer"])?;
        if !self.injected_body.contains(STANCE_SENTENCE) {
            return Err(Error::Template(format!(
                "injected body must ask the model to hold its stance (`{STANCE_SENTENCE}`)"
            )));
        }
        Ok(())
    }

    /// Reads `[system]`, `[no_label]`, `[injected]` and `[verify]` sections;
    /// absent sections keep their defaults.
    pub fn parse(contents: &str) -> Result<Self> {
        let mut t = PromptTemplate::default();
        let mut current: Option<(String, Vec<&str>)> = None;
        let mut sections = Vec::new();
        for line in contents.lines() {
            let trimmed = line.trim();
            if trimmed.starts_with('[') && trimmed.ends_with(']') && trimmed.len() > 2 {
                sections.extend(current.take());
                current = Some((trimmed[1..trimmed.len() - 1].to_string(), Vec::new()));
            } else if let Some((_, lines)) = current.as_mut() {
                lines.push(line);
            } else if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Err(Error::Template(format!("text outside a section: {line:?}")));
            }
        }
        sections.extend(current);
        for (name, lines) in sections {
            let body = lines.join("\n").trim_matches('\n').to_string();
            match name.as_str() {
                "system" => t.system_preamble = body,
                "no_label" => t.no_label_body = body,
                "injected" => t.injected_body = body,
                "verify" => t.verify_body = body,
                other => return Err(Error::Template(format!("unknown section `[{other}]`"))),
            }
        }
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&s)
    }

    fn messages(&self, user: String) -> Vec<Message> {
        let mut m = Vec::with_capacity(2);
        if !self.system_preamble.trim().is_empty() {
            m.push(Message::system(self.system_preamble.clone()));
        }
        m.push(Message::user(user));
        m
    }

    fn body_for(&self, instance: &Instance, labels: &LabelSet, setting: &Setting) -> Result<String> {
        let injected = setting.injected(instance).map(|l| {
            labels.canonical(l).map(str::to_string).unwrap_or_else(|| l.to_string())
        });
        let body = match setting {
            Setting::NoLabel => &self.no_label_body,
            _ => &self.injected_body,
        };
        if !slots(body)?.contains(&"text") {
            return Err(Error::Template(format!("{} body lacks `{{text}}`", setting.name())));
        }
        fill(body, |name| match name {
            "text" => Some(instance.text.clone()),
            "injected" => injected.clone(),
            _ => label_slot(labels, name),
        })
    }
}

/// Renders the probe prompt for one instance under `setting`.
pub fn render(
    instance: &Instance,
    labels: &LabelSet,
    setting: &Setting,
    template: &PromptTemplate,
) -> Result<Vec<Message>> {
    instance.validate(labels)?;
    setting.validate(instance, labels)?;
    Ok(template.messages(template.body_for(instance, labels, setting)?))
}

/// Plain prompt prefixed by `Text: …\nLabel: …\n\n` demonstration blocks.
pub fn render_icl<'a>(
    demonstrations: impl IntoIterator<Item = (&'a str, &'a str)>,
    instance: &Instance,
    labels: &LabelSet,
    template: &PromptTemplate,
) -> Result<Vec<Message>> {
    let mut user = String::new();
    for (text, label) in demonstrations {
        user.push_str("Text: ");
        user.push_str(text);
        user.push_str("\nLabel: ");
        user.push_str(label);
        user.push_str("\n\n");
    }
    user.push_str(&template.body_for(instance, labels, &Setting::NoLabel)?);
    Ok(template.messages(user))
}

pub fn render_verify(
    instance: &Instance,
    labels: &LabelSet,
    proposed: &str,
    template: &PromptTemplate,
) -> Result<Vec<Message>> {
    let user = fill(&template.verify_body, |name| match name {
        "text" => Some(instance.text.clone()),
        "answer" => Some(proposed.to_string()),
        _ => label_slot(labels, name),
    })?;
    Ok(template.messages(user))
}

/// Scoring call whose completion echoes the instance text.
pub fn render_perplexity(instance: &Instance) -> Vec<Message> {
    vec![Message::user(format!("{PERPLEXITY_PROMPT}{}", instance.text))]
}

/// Picks the label injected in the wrong-label probe: uniform over the K−1
/// incorrect labels, keyed by `(seed, instance id)`.
pub fn choose_wrong_label(instance: &Instance, labels: &LabelSet, seed: u64) -> Result<String> {
    if !labels.contains(&instance.gold) {
        return Err(Error::InvalidInstance {
            id: instance.id.clone(),
            reason: format!("gold label `{}` not in label set", instance.gold),
        });
    }
    let others: Vec<&String> = labels
        .labels()
        .iter()
        .filter(|l| !instance.is_gold(l))
        .collect();
    let mut rng = keyed_rng(seed, &["wrong_label", &instance.id]);
    Ok(others[rng.random_range(0..others.len())].clone())
}

/// Maps a free-text completion onto the label set.
///
/// Scans the case-folded text left to right; at each word start, labels are
/// tried longest first and must end on a word boundary. The first hit wins.
pub fn parse_answer(text: &str, labels: &LabelSet) -> ParsedAnswer {
    let hay = text.to_lowercase();
    let mut candidates: Vec<(String, &String)> =
        labels.labels().iter().map(|l| (fold(l), l)).collect();
    candidates.sort_by_key(|c| std::cmp::Reverse(c.0.len()));

    let mut prev: Option<char> = None;
    for (pos, ch) in hay.char_indices() {
        if prev.is_none_or(|p| !p.is_alphanumeric()) {
            let rest = &hay[pos..];
            for (folded, canonical) in &candidates {
                if rest.starts_with(folded.as_str())
                    && rest[folded.len()..]
                        .chars()
                        .next()
                        .is_none_or(|c| !c.is_alphanumeric())
                {
                    return ParsedAnswer::Label((*canonical).clone());
                }
            }
        }
        prev = Some(ch);
    }
    ParsedAnswer::Failed
}
