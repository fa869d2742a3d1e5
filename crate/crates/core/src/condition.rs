//! Construction names and the filler × gap × island condition triple.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The five filler-gap constructions under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Clefting,
    WhMovement,
    TopicalizationIntro,
    TopicalizationNoIntro,
    ToughMovement,
}

impl Construction {
    pub const ALL: [Construction; 5] = [
        Construction::WhMovement,
        Construction::Clefting,
        Construction::TopicalizationNoIntro,
        Construction::TopicalizationIntro,
        Construction::ToughMovement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Construction::Clefting => "clefting",
            Construction::WhMovement => "wh_movement",
            Construction::TopicalizationIntro => "topicalization_intro",
            Construction::TopicalizationNoIntro => "topicalization_no_intro",
            Construction::ToughMovement => "tough_movement",
        }
    }

    /// Human-readable label used in charts and reports.
    pub fn label(self) -> &'static str {
        match self {
            Construction::Clefting => "Clefting",
            Construction::WhMovement => "Wh-movement",
            Construction::TopicalizationIntro => "Topicalization (intro)",
            Construction::TopicalizationNoIntro => "Topicalization (no intro)",
            Construction::ToughMovement => "Tough-movement",
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown construction `{given}` (valid: {})", valid_construction_names())]
pub struct UnknownConstruction {
    pub given: String,
}

pub fn valid_construction_names() -> String {
    Construction::ALL.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")
}

impl FromStr for Construction {
    type Err = UnknownConstruction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Construction::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownConstruction { given: s.to_string() })
    }
}

/// Presence (`+`) or absence (`-`) of a factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn is_plus(self) -> bool {
        self == Sign::Plus
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl From<bool> for Sign {
    fn from(present: bool) -> Self {
        if present {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Sign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" => Ok(Sign::Plus),
            "-" => Ok(Sign::Minus),
            other => Err(format!("unknown level `{other}` (expected `+` or `-`)")),
        }
    }
}

/// One cell of the 2×2×2 design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub filler: Sign,
    pub gap: Sign,
    pub island: Sign,
}

impl Condition {
    pub const fn new(filler: Sign, gap: Sign, island: Sign) -> Self {
        Condition { filler, gap, island }
    }

    /// All eight cells, `+` before `-`, filler-major.
    pub fn all() -> [Condition; 8] {
        let mut out = [Condition::new(Sign::Plus, Sign::Plus, Sign::Plus); 8];
        let mut k = 0;
        for filler in [Sign::Plus, Sign::Minus] {
            for gap in [Sign::Plus, Sign::Minus] {
                for island in [Sign::Plus, Sign::Minus] {
                    out[k] = Condition::new(filler, gap, island);
                    k += 1;
                }
            }
        }
        out
    }

    /// Grammatical iff a filler is paired with a gap outside an island, or
    /// neither filler nor gap is present.
    pub fn expected_grammatical(self) -> bool {
        match (self.filler, self.gap, self.island) {
            (Sign::Plus, Sign::Plus, Sign::Minus) => true,
            (Sign::Minus, Sign::Minus, _) => true,
            _ => false,
        }
    }

    /// The same cell with the filler flipped.
    pub fn filler_partner(self) -> Condition {
        Condition { filler: self.filler.flip(), ..self }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}filler,{}gap,{}island)", self.filler, self.gap, self.island)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammatical_cells_are_the_three_expected() {
        let grammatical: Vec<_> = Condition::all()
            .into_iter()
            .filter(|c| c.expected_grammatical())
            .collect();
        assert_eq!(
            grammatical,
            vec![
                Condition::new(Sign::Plus, Sign::Plus, Sign::Minus),
                Condition::new(Sign::Minus, Sign::Minus, Sign::Plus),
                Condition::new(Sign::Minus, Sign::Minus, Sign::Minus),
            ]
        );
    }

    #[test]
    fn construction_names_round_trip() {
        for c in Construction::ALL {
            assert_eq!(c.name().parse::<Construction>().unwrap(), c);
        }
        let err = "passive".parse::<Construction>().unwrap_err();
        assert!(err.to_string().contains("clefting"));
    }
}
