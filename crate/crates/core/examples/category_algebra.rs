//! The eight outcome triples and the groups they fall into.

use uncttp::model::{category_of, group_members, Group, OutcomeBits};

fn main() {
    for bits in OutcomeBits::all() {
        let cat = category_of(bits);
        println!("{}  {}", cat.code(), cat.group());
    }
    for g in Group::ALL {
        let codes: Vec<String> = group_members(g).iter().map(|c| c.code()).collect();
        println!("{g}: {}", codes.join(" "));
    }
}
