use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;

use super::{Result, StimgenError};
use crate::condition::{Condition, Construction, Sign};

/// A literal token run or a reference to a lexicon slot (`{name}` in files).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Slot(String),
}

impl Segment {
    fn parse(raw: &str) -> std::result::Result<Segment, String> {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed != raw {
            return Err(format!("segment `{raw}` is empty or has surrounding whitespace"));
        }
        if let Some(inner) = raw.strip_prefix('{') {
            let name = inner
                .strip_suffix('}')
                .ok_or_else(|| format!("unterminated slot reference `{raw}`"))?;
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(format!("bad slot name in `{raw}`"));
            }
            Ok(Segment::Slot(name.to_string()))
        } else {
            Ok(Segment::Literal(raw.to_string()))
        }
    }
}

/// One condition's realization. Spans are in segment indices and resolve
/// to token spans once slots are bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variant {
    pub condition: Condition,
    pub segments: Vec<Segment>,
    pub filler_span: Range<usize>,
    pub critical_region: Range<usize>,
    pub grammatical: bool,
}

impl Variant {
    pub fn slot_names(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(name) => Some(name.as_str()),
            Segment::Literal(_) => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstructionTemplate {
    pub construction: Construction,
    pub variants: BTreeMap<Condition, Variant>,
}

impl ConstructionTemplate {
    /// True when the template carries the four island variants.
    pub fn has_islands(&self) -> bool {
        self.variants.keys().any(|c| c.island.is_plus())
    }

    pub fn variant(&self, condition: Condition) -> Option<&Variant> {
        self.variants.get(&condition)
    }

    /// Every slot name referenced by any variant, sorted.
    pub fn slot_names(&self) -> BTreeSet<String> {
        self.variants
            .values()
            .flat_map(|v| v.slot_names().map(str::to_string))
            .collect()
    }

    fn invariant(&self, condition: Option<Condition>, rule: impl Into<String>) -> StimgenError {
        StimgenError::Invariant {
            construction: self.construction,
            condition,
            rule: rule.into(),
        }
    }

    /// Checks condition completeness, span bounds, grammaticality coding and
    /// the minimal-pair property between each ±filler pair.
    pub fn validate(&self) -> Result<()> {
        let island_bearing = self.has_islands();
        for condition in Condition::all() {
            if !island_bearing && condition.island.is_plus() {
                continue;
            }
            if !self.variants.contains_key(&condition) {
                return Err(self.invariant(Some(condition), "missing variant"));
            }
        }

        for (&condition, v) in &self.variants {
            let n = v.segments.len();
            if v.critical_region.start >= v.critical_region.end || v.critical_region.end > n {
                return Err(self.invariant(
                    Some(condition),
                    format!("critical region {:?} is empty or outside {n} segments", v.critical_region),
                ));
            }
            if v.filler_span.start > v.filler_span.end || v.filler_span.end > n {
                return Err(self.invariant(
                    Some(condition),
                    format!("filler span {:?} outside {n} segments", v.filler_span),
                ));
            }
            let overlap = v.filler_span.start < v.critical_region.end
                && v.critical_region.start < v.filler_span.end;
            if overlap {
                return Err(self.invariant(Some(condition), "critical region overlaps the filler span"));
            }
            if v.grammatical != condition.expected_grammatical() {
                return Err(self.invariant(
                    Some(condition),
                    format!(
                        "grammaticality flag is {} but the condition is {}",
                        v.grammatical,
                        if condition.expected_grammatical() { "grammatical" } else { "ungrammatical" }
                    ),
                ));
            }
        }

        for (&condition, plus) in self.variants.iter().filter(|(c, _)| c.filler == Sign::Plus) {
            let minus = &self.variants[&condition.filler_partner()];
            if plus.segments[plus.critical_region.clone()] != minus.segments[minus.critical_region.clone()] {
                return Err(self.invariant(
                    Some(condition),
                    "critical-region segments differ from the -filler counterpart",
                ));
            }
            let prefix_ok = plus.segments[..plus.filler_span.start] == minus.segments[..minus.filler_span.start];
            let suffix_ok = plus.segments[plus.filler_span.end..] == minus.segments[minus.filler_span.end..];
            if !(prefix_ok && suffix_ok) {
                return Err(self.invariant(
                    Some(condition),
                    "segments outside the filler span differ from the -filler counterpart",
                ));
            }
            // Same offset relative to the filler span on both sides.
            let side = |v: &Variant| {
                if v.critical_region.start >= v.filler_span.end {
                    (1, v.critical_region.start - v.filler_span.end)
                } else {
                    (0, v.critical_region.start)
                }
            };
            if side(plus) != side(minus) {
                return Err(self.invariant(
                    Some(condition),
                    "critical region sits at a different position than in the -filler counterpart",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariant {
    filler: Sign,
    gap: Sign,
    island: Sign,
    segments: Vec<String>,
    filler_span: [usize; 2],
    critical_region: [usize; 2],
    grammatical: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplate {
    construction: Construction,
    variants: Vec<RawVariant>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTemplateFile {
    One(RawTemplate),
    Many(Vec<RawTemplate>),
}

fn convert(raw: RawTemplate) -> Result<ConstructionTemplate> {
    let mut variants = BTreeMap::new();
    for rv in raw.variants {
        let condition = Condition::new(rv.filler, rv.gap, rv.island);
        let segments = rv
            .segments
            .iter()
            .map(|s| Segment::parse(s))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|rule| StimgenError::Invariant {
                construction: raw.construction,
                condition: Some(condition),
                rule,
            })?;
        let variant = Variant {
            condition,
            segments,
            filler_span: rv.filler_span[0]..rv.filler_span[1],
            critical_region: rv.critical_region[0]..rv.critical_region[1],
            grammatical: rv.grammatical,
        };
        if variants.insert(condition, variant).is_some() {
            return Err(StimgenError::Invariant {
                construction: raw.construction,
                condition: Some(condition),
                rule: "duplicate variant".into(),
            });
        }
    }
    let template = ConstructionTemplate {
        construction: raw.construction,
        variants,
    };
    template.validate()?;
    Ok(template)
}

/// Parses a template document holding one template object or an array of
/// them. `origin` names the source in diagnostics.
pub fn parse_templates(text: &str, origin: &str) -> Result<Vec<ConstructionTemplate>> {
    let raw: RawTemplateFile = serde_json::from_str(text).map_err(|e| StimgenError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let raws = match raw {
        RawTemplateFile::One(t) => vec![t],
        RawTemplateFile::Many(ts) => ts,
    };
    raws.into_iter().map(convert).collect()
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<ConstructionTemplate>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| StimgenError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_templates(&text, &path.display().to_string())
}
