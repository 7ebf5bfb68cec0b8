//! The three probe prompts of one instance and answer parsing.

use uncttp::model::Setting;
use uncttp::prompting::{choose_wrong_label, parse_answer, render, PromptTemplate};
use uncttp::{Instance, LabelSet};

fn main() -> uncttp::Result<()> {
    let labels = LabelSet::sarcasm();
    let inst = Instance::new("sh-1", "Local man thrilled to spend weekend assembling furniture", "sarcastic");
    let template = PromptTemplate::default();
    let wrong = choose_wrong_label(&inst, &labels, 7)?;
    for setting in [Setting::NoLabel, Setting::RightLabel, Setting::WrongLabel { injected: wrong }] {
        println!("--- {}", setting.name());
        for m in render(&inst, &labels, &setting, &template)? {
            println!("{}", m.content);
        }
    }
    for reply in ["Sarcastic.", "The text is non-sarcastic", "I cannot tell."] {
        println!("{reply:?} -> {:?}", parse_answer(reply, &labels));
    }
    Ok(())
}
