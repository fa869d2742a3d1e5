//! Templates and lexicons shipped with the crate (see `data/`).

use std::sync::OnceLock;

use super::lexicon::{parse_lexicon, Lexicon};
use super::template::{parse_templates, ConstructionTemplate};
use crate::condition::Construction;

macro_rules! data {
    ($path:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/", $path))
    };
}

fn template_source(c: Construction) -> &'static str {
    match c {
        Construction::Clefting => data!("templates/clefting.json"),
        Construction::WhMovement => data!("templates/wh_movement.json"),
        Construction::TopicalizationIntro => data!("templates/topicalization_intro.json"),
        Construction::TopicalizationNoIntro => data!("templates/topicalization_no_intro.json"),
        Construction::ToughMovement => data!("templates/tough_movement.json"),
    }
}

fn lexicon_source(c: Construction) -> &'static str {
    match c {
        Construction::Clefting => data!("lexicons/clefting.json"),
        Construction::WhMovement => data!("lexicons/wh_movement.json"),
        Construction::TopicalizationIntro => data!("lexicons/topicalization_intro.json"),
        Construction::TopicalizationNoIntro => data!("lexicons/topicalization_no_intro.json"),
        Construction::ToughMovement => data!("lexicons/tough_movement.json"),
    }
}

fn augmentation_source(c: Construction) -> Option<&'static str> {
    match c {
        Construction::Clefting => Some(data!("lexicons/clefting_aug.json")),
        Construction::TopicalizationIntro => Some(data!("lexicons/topicalization_intro_aug.json")),
        _ => None,
    }
}

fn index(c: Construction) -> usize {
    Construction::ALL.iter().position(|&x| x == c).expect("listed construction")
}

pub fn builtin_template(c: Construction) -> &'static ConstructionTemplate {
    static CELLS: [OnceLock<ConstructionTemplate>; 5] = [const { OnceLock::new() }; 5];
    CELLS[index(c)].get_or_init(|| {
        let mut ts = parse_templates(template_source(c), c.name()).expect("shipped template is valid");
        ts.remove(0)
    })
}

pub fn builtin_lexicon(c: Construction) -> &'static Lexicon {
    static CELLS: [OnceLock<Lexicon>; 5] = [const { OnceLock::new() }; 5];
    CELLS[index(c)].get_or_init(|| parse_lexicon(lexicon_source(c), c.name()).expect("shipped lexicon is valid"))
}

/// Lexicon for augmentation sentences; shipped for clefting and
/// topicalization with intro.
pub fn builtin_augmentation_lexicon(c: Construction) -> Option<&'static Lexicon> {
    static CELLS: [OnceLock<Option<Lexicon>>; 5] = [const { OnceLock::new() }; 5];
    CELLS[index(c)]
        .get_or_init(|| augmentation_source(c).map(|s| parse_lexicon(s, c.name()).expect("shipped lexicon is valid")))
        .as_ref()
}

/// Item counts of the full-size test set.
pub fn default_item_count(c: Construction) -> usize {
    match c {
        Construction::Clefting => 486,
        Construction::TopicalizationIntro => 486,
        Construction::TopicalizationNoIntro => 161,
        Construction::ToughMovement => 243,
        Construction::WhMovement => 48,
    }
}
