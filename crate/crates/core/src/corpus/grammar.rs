//! A small weighted phrase grammar for desk-scale corpora.
//!
//! Symbols on a right-hand side are rule names, lexicon categories, or
//! literal tokens, in that order of lookup. Alternatives tagged with a
//! construction are dropped when that construction is excluded and are
//! scaled by its weight; alternatives tagged with a dependency mode are kept
//! only when the construction is configured with that mode.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{io_err, CorpusError, CorpusSplit, Result, Sentence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyMode {
    /// Fillers co-occur with gaps and only with gaps.
    Enforced,
    /// Filler and gap are drawn independently.
    Absent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionSetting {
    pub include: bool,
    pub weight: f64,
    pub dependency: DependencyMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alternative {
    pub weight: f64,
    pub rhs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependency: Option<DependencyMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrammarConfig {
    pub start: String,
    #[serde(default)]
    pub constructions: BTreeMap<String, ConstructionSetting>,
    pub rules: BTreeMap<String, Vec<Alternative>>,
    pub lexicon: BTreeMap<String, Vec<String>>,
}

impl GrammarConfig {
    /// Turns every construction off.
    pub fn without_constructions(mut self) -> Self {
        for s in self.constructions.values_mut() {
            s.include = false;
        }
        self
    }

    pub fn construction_mut(&mut self, name: &str) -> Option<&mut ConstructionSetting> {
        self.constructions.get_mut(name)
    }

    /// Every word the grammar can emit.
    pub fn words(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for cands in self.lexicon.values() {
            out.extend(cands.iter().flat_map(|c| c.split_whitespace()).map(str::to_string));
        }
        for alts in self.rules.values() {
            for alt in alts {
                for sym in &alt.rhs {
                    if !self.rules.contains_key(sym) && !self.lexicon.contains_key(sym) {
                        out.extend(sym.split_whitespace().map(str::to_string));
                    }
                }
            }
        }
        out
    }
}

pub fn load_grammar(path: &Path) -> Result<GrammarConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CorpusError::InvalidGrammar(format!("{}: {e}", path.display())))
}

/// The grammar shipped with the crate; covers every word of the built-in
/// test and augmentation lexicons.
pub fn builtin_grammar() -> GrammarConfig {
    serde_json::from_str(include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/grammars/desk.json")))
        .expect("shipped grammar is valid")
}

enum Symbol {
    Rule(usize),
    Category(usize),
    Literal(Vec<String>),
}

struct Compiled {
    /// Per rule: cumulative weights and right-hand sides.
    rules: Vec<(Vec<f64>, Vec<Vec<Symbol>>)>,
    categories: Vec<Vec<Vec<String>>>,
    start: usize,
}

const MAX_DEPTH: usize = 64;

fn invalid(msg: impl Into<String>) -> CorpusError {
    CorpusError::InvalidGrammar(msg.into())
}

fn compile(g: &GrammarConfig) -> Result<Compiled> {
    for (name, s) in &g.constructions {
        if !(s.weight.is_finite() && s.weight > 0.0) {
            return Err(invalid(format!("construction `{name}` weight must be positive")));
        }
    }
    let rule_names: Vec<&String> = g.rules.keys().collect();
    let cat_names: Vec<&String> = g.lexicon.keys().collect();
    if let Some(both) = rule_names.iter().find(|r| g.lexicon.contains_key(r.as_str())) {
        return Err(invalid(format!("`{both}` is both a rule and a lexicon category")));
    }
    let mut categories = Vec::new();
    for (name, cands) in &g.lexicon {
        if cands.is_empty() {
            return Err(invalid(format!("lexicon category `{name}` is empty")));
        }
        let toks: Vec<Vec<String>> = cands
            .iter()
            .map(|c| c.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .collect();
        if toks.iter().any(Vec::is_empty) {
            return Err(invalid(format!("lexicon category `{name}` has an empty candidate")));
        }
        categories.push(toks);
    }

    let mut rules = Vec::new();
    for (name, alts) in &g.rules {
        let mut cumulative = Vec::new();
        let mut bodies = Vec::new();
        let mut total = 0.0;
        for alt in alts {
            if !(alt.weight.is_finite() && alt.weight > 0.0) {
                return Err(invalid(format!("rule `{name}` has a non-positive weight")));
            }
            if alt.rhs.is_empty() {
                return Err(invalid(format!("rule `{name}` has an empty alternative")));
            }
            let mut weight = alt.weight;
            if let Some(c) = &alt.construction {
                let setting = g
                    .constructions
                    .get(c)
                    .ok_or_else(|| invalid(format!("rule `{name}` references unknown construction `{c}`")))?;
                if !setting.include {
                    continue;
                }
                weight *= setting.weight;
            }
            if let Some(mode) = alt.dependency {
                // The mode is resolved against the construction that tags
                // this alternative or, failing that, the one that reaches
                // this rule.
                let owner = alt.construction.clone().or_else(|| owning_construction(g, name));
                let owner = owner.ok_or_else(|| {
                    invalid(format!("rule `{name}` has a dependency tag but no construction reaches it"))
                })?;
                if g.constructions[&owner].dependency != mode {
                    continue;
                }
            }
            let body: Vec<Symbol> = alt
                .rhs
                .iter()
                .map(|sym| {
                    if let Some(i) = rule_names.iter().position(|r| *r == sym) {
                        Symbol::Rule(i)
                    } else if let Some(i) = cat_names.iter().position(|c| *c == sym) {
                        Symbol::Category(i)
                    } else {
                        Symbol::Literal(sym.split_whitespace().map(str::to_string).collect())
                    }
                })
                .collect();
            total += weight;
            cumulative.push(total);
            bodies.push(body);
        }
        rules.push((cumulative, bodies));
    }

    let start = rule_names
        .iter()
        .position(|r| **r == g.start)
        .ok_or_else(|| invalid(format!("start rule `{}` is not defined", g.start)))?;

    // every rule reachable under the active alternatives must stay expandable
    let mut seen = vec![false; rules.len()];
    let mut stack = vec![start];
    while let Some(r) = stack.pop() {
        if std::mem::replace(&mut seen[r], true) {
            continue;
        }
        if rules[r].1.is_empty() {
            return Err(invalid(format!("rule `{}` has no active alternative", rule_names[r])));
        }
        for body in &rules[r].1 {
            for sym in body {
                if let Symbol::Rule(i) = sym {
                    stack.push(*i);
                }
            }
        }
    }
    Ok(Compiled { rules, categories, start })
}

/// The construction whose tagged alternative references `rule`, if unique.
fn owning_construction(g: &GrammarConfig, rule: &str) -> Option<String> {
    let owners: BTreeSet<&String> = g
        .rules
        .values()
        .flatten()
        .filter(|alt| alt.rhs.iter().any(|s| s == rule))
        .filter_map(|alt| alt.construction.as_ref())
        .collect();
    if owners.len() == 1 {
        owners.into_iter().next().cloned()
    } else {
        None
    }
}

fn sample_sentence(g: &Compiled, rng: &mut ChaCha8Rng) -> Result<Sentence> {
    let mut out = Vec::new();
    expand(g, g.start, 0, rng, &mut out)?;
    Ok(out)
}

fn expand(g: &Compiled, rule: usize, depth: usize, rng: &mut ChaCha8Rng, out: &mut Sentence) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(invalid("expansion exceeded the recursion limit"));
    }
    let (cumulative, bodies) = &g.rules[rule];
    let total = *cumulative.last().expect("checked non-empty");
    let x = rng.gen::<f64>() * total;
    let k = cumulative.partition_point(|&c| c <= x).min(bodies.len() - 1);
    for sym in &bodies[k] {
        match sym {
            Symbol::Rule(r) => expand(g, *r, depth + 1, rng, out)?,
            Symbol::Category(c) => {
                let cands = &g.categories[*c];
                out.extend(cands[rng.gen_range(0..cands.len())].iter().cloned());
            }
            Symbol::Literal(toks) => out.extend(toks.iter().cloned()),
        }
    }
    Ok(())
}

/// Samples sentences until at least `n_tokens` tokens (end-of-sentence
/// markers included) and splits them 90/5/5 in sampling order.
pub fn synth_corpus(grammar: &GrammarConfig, n_tokens: usize, seed: u64) -> Result<CorpusSplit> {
    let compiled = compile(grammar)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::new();
    let mut total = 0;
    while total < n_tokens {
        let s = sample_sentence(&compiled, &mut rng)?;
        total += s.len() + 1;
        sentences.push(s);
    }
    let n = sentences.len();
    let n_train = (n as f64 * 0.9).round() as usize;
    let n_valid = (n as f64 * 0.05).round() as usize;
    if n_train == 0 {
        return Err(CorpusError::EmptySplit("train"));
    }
    if n_valid == 0 {
        return Err(CorpusError::EmptySplit("valid"));
    }
    if n_train + n_valid >= n {
        return Err(CorpusError::EmptySplit("test"));
    }
    let test = sentences.split_off(n_train + n_valid);
    let valid = sentences.split_off(n_train);
    Ok(CorpusSplit {
        train: sentences,
        valid,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tokens_is_an_error() {
        assert!(matches!(synth_corpus(&builtin_grammar(), 0, 1), Err(CorpusError::EmptySplit(_))));
    }

    #[test]
    fn deterministic_under_seed() {
        let g = builtin_grammar();
        let a = synth_corpus(&g, 5_000, 7).unwrap();
        assert_eq!(a, synth_corpus(&g, 5_000, 7).unwrap());
        assert_ne!(a, synth_corpus(&g, 5_000, 8).unwrap());
        assert!(a.token_count() >= 5_000);
        let n = (a.train.len() + a.valid.len() + a.test.len()) as f64;
        assert!((a.train.len() as f64 / n - 0.9).abs() < 0.01);
    }

    /// Scan oracle: with every construction off, each sentence is a plain
    /// declarative, optionally preceded by an intro phrase and comma.
    #[test]
    fn flags_off_yields_declaratives_only() {
        let g = builtin_grammar().without_constructions();
        let corpus = synth_corpus(&g, 20_000, 3).unwrap();
        let lex = &g.lexicon;
        let starts_with_any = |s: &[String], cat: &str| -> Option<usize> {
            lex[cat]
                .iter()
                .map(|c| c.split_whitespace().collect::<Vec<_>>())
                .filter(|c| s.len() >= c.len() && s[..c.len()].iter().zip(c).all(|(a, b)| a == b))
                .map(|c| c.len())
                .max()
        };
        for s in corpus.train.iter().chain(&corpus.valid).chain(&corpus.test) {
            let mut rest: &[String] = s;
            if let Some(k) = starts_with_any(rest, "INTRO") {
                assert_eq!(rest[k], ",");
                rest = &rest[k + 1..];
            }
            let k = starts_with_any(rest, "SUBJ")
                .or_else(|| starts_with_any(rest, "TOPIC"))
                .unwrap_or_else(|| panic!("not a declarative: {s:?}"));
            rest = &rest[k..];
            let k = starts_with_any(rest, "VERB").unwrap_or_else(|| panic!("no verb: {s:?}"));
            rest = &rest[k..];
            assert!(!rest.iter().any(|t| t == "," || t == "It" || t == "know" || t == "to"), "{s:?}");
            assert_eq!(rest.last().map(String::as_str), Some("."));
        }
    }

    #[test]
    fn dependency_modes_select_alternatives() {
        let mut g = builtin_grammar().without_constructions();
        let setting = g.construction_mut("clefting").unwrap();
        setting.include = true;
        setting.weight = 1000.0;
        let enforced = synth_corpus(&g, 30_000, 1).unwrap();
        let lex = g.lexicon.clone();
        let filler_words: BTreeSet<&str> = lex["FILLER"].iter().flat_map(|c| c.split_whitespace()).collect();
        // Enforced: after a filler cleft the verb is never followed by an object.
        let objects: BTreeSet<&str> = lex["NP_OBJ"].iter().map(|c| c.split_whitespace().next().unwrap()).collect();
        let clefts = |c: &CorpusSplit| -> Vec<(bool, bool)> {
            c.train
                .iter()
                .filter(|s| s[0] == "It" && s.iter().any(|t| t == "that"))
                .map(|s| {
                    let filler = filler_words.contains(s[2].as_str());
                    let verb_at = s.iter().position(|t| lex["VERB"].contains(t)).unwrap();
                    let has_obj = objects.contains(s[verb_at + 1].as_str())
                        || lex["ISLAND"].iter().any(|i| i.starts_with(&s[verb_at + 1]));
                    (filler, !has_obj)
                })
                .collect()
        };
        let pairs = clefts(&enforced);
        assert!(pairs.len() > 500);
        assert!(pairs.iter().all(|&(filler, gap)| filler == gap));

        g.construction_mut("clefting").unwrap().dependency = DependencyMode::Absent;
        let absent = synth_corpus(&g, 30_000, 1).unwrap();
        let pairs = clefts(&absent);
        assert!(pairs.iter().any(|&(f, gap)| f && !gap));
        assert!(pairs.iter().any(|&(f, gap)| !f && gap));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut g = builtin_grammar();
        g.rules.get_mut("S").unwrap()[0].weight = -1.0;
        assert!(matches!(synth_corpus(&g, 100, 1), Err(CorpusError::InvalidGrammar(_))));

        let mut g = builtin_grammar();
        g.start = "NOPE".into();
        assert!(synth_corpus(&g, 100, 1).is_err());

        let mut g = builtin_grammar();
        g.rules.get_mut("S").unwrap()[1].construction = Some("passive".into());
        let err = synth_corpus(&g, 100, 1).unwrap_err().to_string();
        assert!(err.contains("passive"), "{err}");

        let mut g = builtin_grammar();
        g.rules.insert("LOOP".into(), vec![Alternative { weight: 1.0, rhs: vec!["LOOP".into()], construction: None, dependency: None }]);
        g.rules.get_mut("S").unwrap().push(Alternative { weight: 1e9, rhs: vec!["LOOP".into()], construction: None, dependency: None });
        assert!(synth_corpus(&g, 100, 1).is_err());
    }
}
