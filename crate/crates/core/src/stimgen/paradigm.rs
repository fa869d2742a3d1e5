use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use super::template::{ConstructionTemplate, Segment, Variant};
use super::{Result, StimgenError};
use crate::condition::{Condition, Construction, Sign};
use crate::corpus::Vocab;

/// Slot name → chosen candidate.
pub type Binding = BTreeMap<String, String>;

mod span {
    use std::ops::Range;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &Range<usize>, s: S) -> Result<S::Ok, S::Error> {
        [r.start, r.end].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Range<usize>, D::Error> {
        let [start, end] = <[usize; 2]>::deserialize(d)?;
        Ok(start..end)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSentence {
    pub condition: Condition,
    pub tokens: Vec<String>,
    /// Half-open token range whose surprisal is measured.
    #[serde(with = "span")]
    pub critical_region: Range<usize>,
    /// Half-open token range holding the filler (or its -filler substitute).
    #[serde(with = "span")]
    pub filler_span: Range<usize>,
    pub grammatical: bool,
}

impl ConditionSentence {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn region_tokens(&self) -> &[String] {
        &self.tokens[self.critical_region.clone()]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParadigmItem {
    pub item_id: u32,
    pub construction: Construction,
    pub binding: Binding,
    pub sentences: Vec<ConditionSentence>,
}

impl ParadigmItem {
    pub fn sentence(&self, condition: Condition) -> Option<&ConditionSentence> {
        self.sentences.iter().find(|s| s.condition == condition)
    }
}

fn realize(variant: &Variant, binding: &Binding) -> Result<ConditionSentence> {
    let mut tokens = Vec::new();
    let mut bounds = Vec::with_capacity(variant.segments.len() + 1);
    for segment in &variant.segments {
        bounds.push(tokens.len());
        let text = match segment {
            Segment::Literal(s) => s.as_str(),
            Segment::Slot(name) => binding
                .get(name)
                .map(String::as_str)
                .ok_or_else(|| StimgenError::MissingSlot(name.clone()))?,
        };
        tokens.extend(text.split_whitespace().map(str::to_string));
    }
    bounds.push(tokens.len());
    let span = |r: &Range<usize>| bounds[r.start]..bounds[r.end];
    Ok(ConditionSentence {
        condition: variant.condition,
        critical_region: span(&variant.critical_region),
        filler_span: span(&variant.filler_span),
        tokens,
        grammatical: variant.grammatical,
    })
}

/// Expands one bound item into its condition sentences, in condition order.
pub fn generate_paradigm(template: &ConstructionTemplate, binding: &Binding) -> Result<Vec<ConditionSentence>> {
    template.variants.values().map(|v| realize(v, binding)).collect()
}

/// Draws `count` distinct index tuples from the mixed-radix space `radices`.
fn sample_distinct(radices: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let total = radices.iter().fold(1u128, |acc, &r| acc.saturating_mul(r as u128));
    if total < count as u128 {
        return Err(StimgenError::InsufficientLexicon { requested: count, max: total });
    }
    let decode = |mut idx: u128| {
        let mut digits = vec![0usize; radices.len()];
        for (d, &r) in digits.iter_mut().zip(radices).rev() {
            *d = (idx % r as u128) as usize;
            idx /= r as u128;
        }
        digits
    };
    const ENUMERATE_LIMIT: u128 = 1 << 20;
    let picks: Vec<u128> = if total <= ENUMERATE_LIMIT {
        let mut all: Vec<u128> = (0..total).collect();
        let (chosen, _) = all.partial_shuffle(rng, count);
        chosen.to_vec()
    } else {
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let idx = rng.gen_range(0..total);
            if seen.insert(idx) {
                out.push(idx);
            }
        }
        out
    };
    Ok(picks.into_iter().map(decode).collect())
}

fn sample_bindings(slots: &BTreeSet<String>, lexicon: &Lexicon, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Binding>> {
    let columns = slots
        .iter()
        .map(|name| {
            lexicon
                .get(name)
                .map(|s| (name, &s.candidates))
                .ok_or_else(|| StimgenError::MissingSlot(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let radices: Vec<usize> = columns.iter().map(|(_, c)| c.len()).collect();
    let tuples = sample_distinct(&radices, count, rng)?;
    Ok(tuples
        .into_iter()
        .map(|digits| {
            columns
                .iter()
                .zip(digits)
                .map(|((name, cands), d)| ((*name).clone(), cands[d].clone()))
                .collect()
        })
        .collect())
}

/// Draws `count` items with pairwise-distinct bindings; deterministic in
/// `seed`. Item ids run from 1.
pub fn bind_lexicon(template: &ConstructionTemplate, lexicon: &Lexicon, count: usize, seed: u64) -> Result<Vec<ParadigmItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bindings = sample_bindings(&template.slot_names(), lexicon, count, &mut rng)?;
    bindings
        .into_iter()
        .enumerate()
        .map(|(k, binding)| {
            let sentences = generate_paradigm(template, &binding)?;
            Ok(ParadigmItem {
                item_id: k as u32 + 1,
                construction: template.construction,
                binding,
                sentences,
            })
        })
        .collect()
}

/// Closed-class words ignored by the augmentation/test disjointness check.
pub const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "The", "these", "These", "those", "Those", "this", "This", "that", "who", "which", "what", "it",
    "It", "is", "are", "to", "of", "in", "on", "at", "and", "I",
];

fn open_class_words(lexicon: &Lexicon) -> BTreeSet<String> {
    lexicon
        .slots()
        .flat_map(|s| s.candidates.iter())
        .flat_map(|c| c.split_whitespace())
        .filter(|w| !FUNCTION_WORDS.contains(w))
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSentence {
    pub tokens: Vec<String>,
    pub gap: bool,
}

/// Grammatical simple sentences for augmentation: `n/2` of (+filler,+gap)
/// and `n/2` of (-filler,-gap), drawn from `lexicon`, which must share no
/// open-class word with `test_lexicon`.
pub fn generate_training_sentences(
    template: &ConstructionTemplate,
    n: usize,
    lexicon: &Lexicon,
    test_lexicon: &Lexicon,
    seed: u64,
) -> Result<Vec<TrainingSentence>> {
    if n % 2 != 0 {
        return Err(StimgenError::OddCount(n));
    }
    let shared: Vec<String> = open_class_words(lexicon)
        .intersection(&open_class_words(test_lexicon))
        .cloned()
        .collect();
    if !shared.is_empty() {
        return Err(StimgenError::LexiconOverlap { words: shared });
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (filler, gap) in [(Sign::Plus, Sign::Plus), (Sign::Minus, Sign::Minus)] {
        let condition = Condition::new(filler, gap, Sign::Minus);
        let variant = template.variant(condition).ok_or_else(|| StimgenError::Invariant {
            construction: template.construction,
            condition: Some(condition),
            rule: "missing variant".into(),
        })?;
        let slots: BTreeSet<String> = variant.slot_names().map(str::to_string).collect();
        for binding in sample_bindings(&slots, lexicon, n / 2, &mut rng)? {
            out.push(TrainingSentence {
                tokens: realize(variant, &binding)?.tokens,
                gap: gap.is_plus(),
            });
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Out-of-vocabulary words and the items that use them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LexiconReport {
    pub oov: BTreeMap<String, BTreeSet<u32>>,
}

impl LexiconReport {
    pub fn passes(&self) -> bool {
        self.oov.is_empty()
    }
}

pub fn validate_lexicon(items: &[ParadigmItem], vocab: &Vocab) -> LexiconReport {
    let mut report = LexiconReport::default();
    for item in items {
        for sentence in &item.sentences {
            for token in &sentence.tokens {
                if !vocab.contains(token) {
                    report.oov.entry(token.clone()).or_default().insert(item.item_id);
                }
            }
        }
    }
    report
}

/// One JSON record per line.
pub fn write_items_jsonl<W: Write>(items: &[ParadigmItem], mut out: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_items_jsonl<R: BufRead>(input: R) -> Result<Vec<ParadigmItem>> {
    let mut items = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line.map_err(|source| StimgenError::Io {
            path: "<items>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| StimgenError::Parse {
            origin: "<items>".into(),
            line: k + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}
