//! Tripartite probing against a live OpenAI-compatible endpoint.
//!
//! `UNCTTP_ENDPOINT=http://localhost:8000/v1 UNCTTP_MODEL=... cargo run --example openai_client`
//! The key is read from `OPENAI_API_KEY` when set.

use uncttp::prompting::PromptTemplate;
use uncttp::provider::{CachedProvider, OpenAiConfig, OpenAiProvider, ResponseCache, DEFAULT_API_KEY_ENV};
use uncttp::tripartite::Prober;
use uncttp::{Instance, LabelSet};

fn main() -> uncttp::Result<()> {
    let Ok(endpoint) = std::env::var("UNCTTP_ENDPOINT") else {
        eprintln!("set UNCTTP_ENDPOINT (and UNCTTP_MODEL) to run against a server");
        return Ok(());
    };
    let model = std::env::var("UNCTTP_MODEL").unwrap_or_else(|_| "gpt-3.5-turbo".into());
    let provider = OpenAiProvider::new(OpenAiConfig::new(endpoint).api_key_from_env(DEFAULT_API_KEY_ENV))?;
    let cached = CachedProvider::new(provider, ResponseCache::open(std::env::temp_dir().join("uncttp-cache"))?);

    let labels = LabelSet::sarcasm();
    let inst = Instance::new("sh-demo", "Nation's dads announce plan to finally fix that squeaky door", "sarcastic");
    let template = PromptTemplate::default();
    let record = Prober::new(&cached, model, &labels, &template).run_unc_ttp(&inst)?;
    println!("{} {} {:?}", record.category.code(), record.group(), record.raw_answers);
    println!("calls {}, cache hits {}", cached.misses(), cached.hits());
    Ok(())
}
