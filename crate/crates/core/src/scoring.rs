//! Critical-region surprisal, filler effects, per-cell summaries with
//! t-based confidence intervals, and the qualitative pattern verdicts.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::stimgen::ParadigmItem;
use crate::{Condition, Construction, Sign};

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("surprisal profile has {surprisals} values for {tokens} tokens")]
    LengthMismatch { tokens: usize, surprisals: usize },
    #[error("surprisal at position {0} is negative or not finite")]
    BadSurprisal(usize),
    #[error("region {start}..{end} is outside a {len}-token sentence")]
    RegionOutOfBounds { start: usize, end: usize, len: usize },
    #[error("cannot pair {plus} with {minus}: {reason}")]
    MismatchedPair { plus: String, minus: String, reason: &'static str },
    #[error("{construction} item {item_id} {condition}: no -filler partner")]
    MissingPartner {
        construction: Construction,
        item_id: u32,
        condition: Condition,
    },
    #[error("{construction} ({}gap,{}island) has {n} item(s); a confidence interval needs at least 2", gap.symbol(), island.symbol())]
    GroupTooSmall {
        construction: Construction,
        gap: Sign,
        island: Sign,
        n: usize,
    },
    #[error("{construction}: no summary for the ({}gap,{}island) cell", gap.symbol(), island.symbol())]
    MissingCell {
        construction: Construction,
        gap: Sign,
        island: Sign,
    },
    #[error("scoring {construction} item {item_id}: {message}")]
    Scorer {
        construction: Construction,
        item_id: u32,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, ScoringError>;

/// Per-token surprisal (bits) for one sentence of one item.
#[derive(Clone, Debug, PartialEq)]
pub struct SurprisalProfile {
    pub item_id: u32,
    pub condition: Condition,
    pub tokens: Vec<String>,
    pub surprisal: Vec<f64>,
}

impl SurprisalProfile {
    pub fn new(item_id: u32, condition: Condition, tokens: Vec<String>, surprisal: Vec<f64>) -> Result<Self> {
        if tokens.len() != surprisal.len() {
            return Err(ScoringError::LengthMismatch {
                tokens: tokens.len(),
                surprisals: surprisal.len(),
            });
        }
        if let Some(i) = surprisal.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ScoringError::BadSurprisal(i));
        }
        Ok(SurprisalProfile {
            item_id,
            condition,
            tokens,
            surprisal,
        })
    }

    pub fn total(&self) -> f64 {
        self.surprisal.iter().sum()
    }
}

/// Summed surprisal over a sentence's critical region. Field order is the
/// `scores.csv` column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionScore {
    pub construction: Construction,
    pub item_id: u32,
    pub filler: Sign,
    pub gap: Sign,
    pub island: Sign,
    pub region_surprisal_bits: f64,
}

impl RegionScore {
    pub fn condition(&self) -> Condition {
        Condition::new(self.filler, self.gap, self.island)
    }
}

/// `surprisal(+filler) - surprisal(-filler)` for one item and cell. Field
/// order is the `effects.csv` column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectRecord {
    pub construction: Construction,
    pub item_id: u32,
    pub gap: Sign,
    pub island: Sign,
    pub filler_effect_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub construction: Construction,
    pub gap: Sign,
    pub island: Sign,
    pub mean: f64,
    /// Half-width of the 95% t-interval over items.
    pub ci_half_width: f64,
    pub n: usize,
}

impl EffectSummary {
    pub fn ci(&self) -> (f64, f64) {
        (self.mean - self.ci_half_width, self.mean + self.ci_half_width)
    }

    /// True when the interval contains zero (endpoints included).
    pub fn overlaps_zero(&self) -> bool {
        self.mean.abs() <= self.ci_half_width
    }
}

pub fn region_surprisal(profile: &SurprisalProfile, construction: Construction, region: Range<usize>) -> Result<RegionScore> {
    if region.start > region.end || region.end > profile.surprisal.len() {
        return Err(ScoringError::RegionOutOfBounds {
            start: region.start,
            end: region.end,
            len: profile.surprisal.len(),
        });
    }
    Ok(RegionScore {
        construction,
        item_id: profile.item_id,
        filler: profile.condition.filler,
        gap: profile.condition.gap,
        island: profile.condition.island,
        region_surprisal_bits: profile.surprisal[region].iter().sum(),
    })
}

pub fn filler_effect(plus: &RegionScore, minus: &RegionScore) -> Result<EffectRecord> {
    let reason = if plus.construction != minus.construction {
        Some("different constructions")
    } else if plus.item_id != minus.item_id {
        Some("different items")
    } else if plus.gap != minus.gap || plus.island != minus.island {
        Some("different gap/island cells")
    } else if plus.filler != Sign::Plus || minus.filler != Sign::Minus {
        Some("expected a +filler and a -filler score")
    } else {
        None
    };
    if let Some(reason) = reason {
        let describe = |s: &RegionScore| format!("{} item {} {}", s.construction, s.item_id, s.condition());
        return Err(ScoringError::MismatchedPair {
            plus: describe(plus),
            minus: describe(minus),
            reason,
        });
    }
    Ok(EffectRecord {
        construction: plus.construction,
        item_id: plus.item_id,
        gap: plus.gap,
        island: plus.island,
        filler_effect_bits: plus.region_surprisal_bits - minus.region_surprisal_bits,
    })
}

/// Pairs every +filler score with its -filler partner.
pub fn compute_effects(scores: &[RegionScore]) -> Result<Vec<EffectRecord>> {
    let index: BTreeMap<(Construction, u32, Condition), &RegionScore> = scores
        .iter()
        .map(|s| ((s.construction, s.item_id, s.condition()), s))
        .collect();
    let mut out = Vec::new();
    for (&(construction, item_id, condition), plus) in &index {
        if condition.filler != Sign::Plus {
            continue;
        }
        let minus = index
            .get(&(construction, item_id, condition.filler_partner()))
            .ok_or(ScoringError::MissingPartner {
                construction,
                item_id,
                condition,
            })?;
        out.push(filler_effect(plus, minus)?);
    }
    Ok(out)
}

/// Scores every sentence of every item with `surprisal` (per-token bits)
/// and sums its critical region. Each ±filler pair must share its
/// critical-region tokens.
pub fn score_items<E, S>(items: &[ParadigmItem], mut surprisal: S) -> Result<Vec<RegionScore>>
where
    E: Display,
    S: FnMut(&[String]) -> std::result::Result<Vec<f64>, E>,
{
    let mut out = Vec::with_capacity(items.len() * 8);
    for item in items {
        for sentence in &item.sentences {
            if sentence.condition.filler == Sign::Plus {
                if let Some(partner) = item.sentence(sentence.condition.filler_partner()) {
                    if partner.region_tokens() != sentence.region_tokens() {
                        return Err(ScoringError::Scorer {
                            construction: item.construction,
                            item_id: item.item_id,
                            message: format!("critical regions differ across the filler pair in {}", sentence.condition),
                        });
                    }
                }
            }
            let bits = surprisal(&sentence.tokens).map_err(|e| ScoringError::Scorer {
                construction: item.construction,
                item_id: item.item_id,
                message: e.to_string(),
            })?;
            let profile = SurprisalProfile::new(item.item_id, sentence.condition, sentence.tokens.clone(), bits)?;
            out.push(region_surprisal(&profile, item.construction, sentence.critical_region.clone())?);
        }
    }
    Ok(out)
}

/// Mean and 95% t-interval (`t_{0.975, n-1} * sd / sqrt(n)`) per
/// (construction, gap, island) group.
pub fn effect_summary(records: &[EffectRecord]) -> Result<Vec<EffectSummary>> {
    let mut groups: BTreeMap<(Construction, Sign, Sign), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.construction, r.gap, r.island))
            .or_default()
            .push(r.filler_effect_bits);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((construction, gap, island), xs) in groups {
        let n = xs.len();
        if n < 2 {
            return Err(ScoringError::GroupTooSmall {
                construction,
                gap,
                island,
                n,
            });
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("n >= 2")
            .inverse_cdf(0.975);
        out.push(EffectSummary {
            construction,
            gap,
            island,
            mean,
            ci_half_width: t * var.sqrt() / (n as f64).sqrt(),
            n,
        });
    }
    Ok(out)
}

/// Island verdicts for one gap level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IslandCellVerdict {
    /// The island cell's interval contains zero.
    pub stringent: bool,
    /// The island cell's effect is smaller in magnitude than the simple cell's.
    pub relative: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IslandVerdict {
    pub plus_gap: IslandCellVerdict,
    pub minus_gap: IslandCellVerdict,
}

impl IslandVerdict {
    pub fn stringent(&self) -> bool {
        self.plus_gap.stringent && self.minus_gap.stringent
    }

    pub fn relative(&self) -> bool {
        self.plus_gap.relative && self.minus_gap.relative
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternVerdict {
    pub construction: Construction,
    /// Negative filler effect with a gap, positive without, outside islands.
    pub simple_learned: bool,
    /// `None` for constructions tested without islands.
    pub island: Option<IslandVerdict>,
}

/// Qualitative verdicts per construction. Both non-island cells are
/// required; island cells may be absent together, but not singly.
pub fn classify_pattern(summaries: &[EffectSummary]) -> Result<Vec<PatternVerdict>> {
    let mut by: BTreeMap<Construction, BTreeMap<(Sign, Sign), &EffectSummary>> = BTreeMap::new();
    for s in summaries {
        by.entry(s.construction).or_default().insert((s.gap, s.island), s);
    }
    let mut out = Vec::with_capacity(by.len());
    for (construction, cells) in by {
        let get = |gap: Sign, island: Sign| {
            cells
                .get(&(gap, island))
                .copied()
                .ok_or(ScoringError::MissingCell {
                    construction,
                    gap,
                    island,
                })
        };
        let simple_plus = get(Sign::Plus, Sign::Minus)?;
        let simple_minus = get(Sign::Minus, Sign::Minus)?;
        let simple_learned = simple_plus.mean < 0.0 && simple_minus.mean > 0.0;
        let has_island = cells.contains_key(&(Sign::Plus, Sign::Plus)) || cells.contains_key(&(Sign::Minus, Sign::Plus));
        let island = if has_island {
            let cell = |island: &EffectSummary, simple: &EffectSummary| IslandCellVerdict {
                stringent: island.overlaps_zero(),
                relative: island.mean.abs() < simple.mean.abs(),
            };
            Some(IslandVerdict {
                plus_gap: cell(get(Sign::Plus, Sign::Plus)?, simple_plus),
                minus_gap: cell(get(Sign::Minus, Sign::Plus)?, simple_minus),
            })
        } else {
            None
        };
        out.push(PatternVerdict {
            construction,
            simple_learned,
            island,
        });
    }
    Ok(out)
}
