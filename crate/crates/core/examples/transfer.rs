//! Records measured on one model guiding selection for another.

use uncttp::data::{write_jsonl, DatasetSpec};
use uncttp::evaluation::{transfer_eval, Pipeline, Strategy};
use uncttp::prompting::PromptTemplate;
use uncttp::provider::{MockProfile, MockProvider};
use uncttp::{Instance, LabelSet};

fn main() -> uncttp::Result<()> {
    let labels = LabelSet::sarcasm();
    let mk = |p: &str, n: usize| -> Vec<Instance> {
        (0..n)
            .map(|i| Instance::new(format!("{p}{i}"), format!("headline {p} {i}"), labels.labels()[i % 2].as_str()))
            .collect()
    };
    let spec = DatasetSpec {
        name: "toy-sh".into(),
        train: mk("tr", 24),
        validation: mk("va", 8),
        test: mk("te", 10),
        labels: labels.clone(),
        balance: true,
    };
    let template = PromptTemplate::default();

    let small = MockProvider::new(labels.clone(), spec.all().cloned()).with_profile(MockProfile::new(0.6, 0.9, 0.6).seed(1));
    let records = Pipeline::new(&small, "small", &spec, &template).prober().classify_all(&spec.train)?;
    let dir = std::env::temp_dir().join("uncttp-transfer-example");
    std::fs::create_dir_all(&dir).map_err(|e| uncttp::Error::Config(e.to_string()))?;
    let path = dir.join("small.uncttp.jsonl");
    write_jsonl(&path, &records)?;

    let large = MockProvider::new(labels, spec.all().cloned()).with_profile(MockProfile::new(0.9, 0.95, 0.3).seed(2));
    let target = Pipeline::new(&large, "large", &spec, &template);
    let report = transfer_eval(&path, &target, &Strategy::UncTtp(None))?;
    println!(
        "guided by {:?}, evaluated on {}: {} (category {})",
        report.guide_model_id,
        report.model_id,
        report.summary,
        report.category.as_ref().map_or("-", |c| c.chosen.as_str())
    );
    Ok(())
}
