//! Sampling-based and verification-based uncertainty on a drifting mock.

use uncttp::prompting::PromptTemplate;
use uncttp::provider::{MockProfile, MockProvider};
use uncttp::tripartite::{Prober, VerificationMethod};
use uncttp::{Instance, LabelSet};

fn main() -> uncttp::Result<()> {
    let labels = LabelSet::humor();
    let instances: Vec<Instance> = (0..6)
        .map(|i| Instance::new(format!("h-{i}"), format!("joke number {i}"), labels.labels()[i % 2].as_str()))
        .collect();
    let mock = MockProvider::new(labels.clone(), instances.clone())
        .with_profile(MockProfile::new(0.8, 1.0, 0.4).sample_drift(0.3).seed(2));
    let template = PromptTemplate::default();
    let prober = Prober::new(&mock, "drifty", &labels, &template).seed(3);

    for r in prober.vanilla_all(&instances, 3, 0.7)? {
        println!("{}  samples {:?}  bucket {}", r.instance_id, r.correct, r.bucket);
    }
    for method in [VerificationMethod::PTrue, VerificationMethod::SelfCheck] {
        for s in prober.verify_all(&instances, method, 3)? {
            println!("{:?} {}  {:.2}", method, s.instance_id, s.score);
        }
    }
    Ok(())
}
