use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, StimgenError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotRole {
    Subject,
    Verb,
    FillerNp,
    ObjectNp,
    Adverbial,
    IslandNp,
    IntroPhrase,
    Other,
}

impl SlotRole {
    /// Role implied by the conventional slot names of the shipped templates.
    pub fn infer(slot: &str) -> SlotRole {
        match slot {
            "subj" => SlotRole::Subject,
            "verb" | "verb_inf" => SlotRole::Verb,
            "filler" | "topic" | "tough_subj" | "wh" => SlotRole::FillerNp,
            "obj" => SlotRole::ObjectNp,
            "adv" => SlotRole::Adverbial,
            "island" => SlotRole::IslandNp,
            "intro" | "nonfiller" => SlotRole::IntroPhrase,
            _ => SlotRole::Other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LexiconSlot {
    pub name: String,
    pub role: SlotRole,
    pub candidates: Vec<String>,
}

impl LexiconSlot {
    pub fn new(name: impl Into<String>, role: SlotRole, candidates: Vec<String>) -> Result<Self> {
        let slot = LexiconSlot {
            name: name.into(),
            role,
            candidates,
        };
        slot.validate()?;
        Ok(slot)
    }

    fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(StimgenError::InvalidLexicon(format!("slot `{}` has no candidates", self.name)));
        }
        for c in &self.candidates {
            if c.is_empty() || c.trim() != c {
                return Err(StimgenError::InvalidLexicon(format!(
                    "slot `{}` candidate `{c}` is empty or has surrounding whitespace",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Named slots, ordered by name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    slots: BTreeMap<String, LexiconSlot>,
}

impl Lexicon {
    pub fn new(slots: impl IntoIterator<Item = LexiconSlot>) -> Self {
        Lexicon {
            slots: slots.into_iter().map(|s| (s.name.clone(), s)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&LexiconSlot> {
        self.slots.get(name)
    }

    pub fn slots(&self) -> impl Iterator<Item = &LexiconSlot> {
        self.slots.values()
    }

    pub fn insert(&mut self, slot: LexiconSlot) {
        self.slots.insert(slot.name.clone(), slot);
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSlot {
    Candidates(Vec<String>),
    Full { role: SlotRole, candidates: Vec<String> },
}

/// Parses a JSON map `slot -> [candidates]` (or `slot -> {role, candidates}`).
pub fn parse_lexicon(text: &str, origin: &str) -> Result<Lexicon> {
    let raw: BTreeMap<String, RawSlot> = serde_json::from_str(text).map_err(|e| StimgenError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut slots = Vec::with_capacity(raw.len());
    for (name, slot) in raw {
        let (role, candidates) = match slot {
            RawSlot::Candidates(c) => (SlotRole::infer(&name), c),
            RawSlot::Full { role, candidates } => (role, candidates),
        };
        slots.push(LexiconSlot::new(name, role, candidates)?);
    }
    Ok(Lexicon::new(slots))
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| StimgenError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_lexicon(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_slot_forms_parse() {
        let lex = parse_lexicon(
            r#"{"subj": ["Mary"], "adv": {"role": "adverbial", "candidates": ["last week"]}}"#,
            "x",
        )
        .unwrap();
        assert_eq!(lex.get("subj").unwrap().role, SlotRole::Subject);
        assert_eq!(lex.get("adv").unwrap().candidates, vec!["last week"]);
    }

    #[test]
    fn empty_or_padded_candidates_are_rejected() {
        assert!(parse_lexicon(r#"{"subj": []}"#, "x").is_err());
        assert!(parse_lexicon(r#"{"subj": [" Mary"]}"#, "x").is_err());
        assert!(parse_lexicon(r#"{"subj": [""]}"#, "x").is_err());
    }
}
