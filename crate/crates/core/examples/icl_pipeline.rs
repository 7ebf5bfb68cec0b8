//! Every selection strategy through the full pipeline on a noisy mock.

use uncttp::data::DatasetSpec;
use uncttp::evaluation::{grid_csv, Pipeline, Strategy};
use uncttp::prompting::PromptTemplate;
use uncttp::provider::{MockProfile, MockProvider};
use uncttp::{Instance, LabelSet};

fn part(prefix: &str, labels: &LabelSet, n: usize) -> Vec<Instance> {
    (0..n)
        .map(|i| {
            let l = &labels.labels()[i % labels.len()];
            Instance::new(format!("{prefix}{i}"), format!("{l} sounding text {i} {prefix}"), l.as_str())
        })
        .collect()
}

fn main() -> uncttp::Result<()> {
    let labels = LabelSet::financial();
    let spec = DatasetSpec {
        name: "toy".into(),
        train: part("tr", &labels, 30),
        validation: part("va", &labels, 12),
        test: part("te", &labels, 15),
        labels: labels.clone(),
        balance: true,
    };
    let mock = MockProvider::new(labels, spec.all().cloned())
        .with_profile(MockProfile::new(0.75, 0.9, 0.4).sample_drift(0.1).seed(8).logprobs(true));
    let template = PromptTemplate::default();
    let pipe = Pipeline::new(&mock, "mock-noisy", &spec, &template);

    let mut reports = Vec::new();
    for s in Strategy::all() {
        let r = pipe.evaluate(&s)?;
        if let Some(c) = &r.category {
            println!("{s}: picked {} on validation", c.chosen);
        }
        reports.push(r);
    }
    print!("{}", grid_csv(&reports)?);
    println!("{} provider calls", mock.calls());
    Ok(())
}
