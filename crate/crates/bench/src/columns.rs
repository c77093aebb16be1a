//! Accuracy column names: `clean` and `{attack}@{k}/255`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use zcp_attacks::AttackKind;

use crate::error::{invalid, BenchError};

/// Table name of an attack, as used by the published robustness data.
pub fn attack_column_name(kind: AttackKind) -> &'static str {
    match kind {
        AttackKind::Fgsm => "fgsm",
        AttackKind::Pgd => "pgd",
        AttackKind::Apgd => "aa-apgd-ce",
        AttackKind::Square => "aa-square",
    }
}

/// A perturbation budget written as `k/255`, keyed by its text so grids
/// compare exactly.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Eps255 {
    numerator: String,
}

impl Eps255 {
    pub fn from_numerator(k: f64) -> Self {
        Eps255 {
            numerator: format!("{k}"),
        }
    }

    pub fn numerator(&self) -> f64 {
        self.numerator.parse().expect("validated at construction")
    }

    /// Budget on the [0, 1] pixel scale.
    pub fn value(&self) -> f64 {
        self.numerator() / 255.0
    }
}

impl Default for Eps255 {
    fn default() -> Self {
        Eps255::from_numerator(1.0)
    }
}

impl fmt::Display for Eps255 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/255", self.numerator)
    }
}

impl FromStr for Eps255 {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        let s = s.trim();
        let num = s.strip_suffix("/255").unwrap_or(s);
        let k: f64 = num
            .trim()
            .parse()
            .map_err(|_| invalid(format!("bad epsilon {s:?}, expected k/255")))?;
        if !k.is_finite() || k < 0.0 {
            return Err(invalid(format!("epsilon {s:?} must be non-negative")));
        }
        Ok(Eps255::from_numerator(k))
    }
}

impl TryFrom<String> for Eps255 {
    type Error = BenchError;
    fn try_from(s: String) -> Result<Self, BenchError> {
        s.parse()
    }
}

impl From<Eps255> for String {
    fn from(e: Eps255) -> String {
        e.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AccColumn {
    Clean,
    Robust { attack: AttackKind, eps: Eps255 },
}

impl AccColumn {
    pub fn robust(attack: AttackKind, eps: Eps255) -> Self {
        AccColumn::Robust { attack, eps }
    }

    pub fn attack(&self) -> Option<AttackKind> {
        match self {
            AccColumn::Clean => None,
            AccColumn::Robust { attack, .. } => Some(*attack),
        }
    }

    fn sort_key(&self) -> (usize, f64) {
        match self {
            AccColumn::Clean => (0, 0.0),
            AccColumn::Robust { attack, eps } => (1 + *attack as usize, eps.numerator()),
        }
    }
}

impl PartialOrd for AccColumn {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Clean first, then attacks in canonical order, budgets ascending.
impl Ord for AccColumn {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, x) = self.sort_key();
        let (b, y) = other.sort_key();
        a.cmp(&b).then(x.total_cmp(&y))
    }
}

impl Serialize for AccColumn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AccColumn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for AccColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccColumn::Clean => f.write_str("clean"),
            AccColumn::Robust { attack, eps } => write!(f, "{}@{}", attack_column_name(*attack), eps),
        }
    }
}

impl FromStr for AccColumn {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("clean") {
            return Ok(AccColumn::Clean);
        }
        let (a, e) = s
            .split_once('@')
            .ok_or_else(|| invalid(format!("column {s:?} is neither clean nor attack@k/255")))?;
        let attack = a.parse::<AttackKind>().map_err(invalid)?;
        Ok(AccColumn::Robust {
            attack,
            eps: e.parse()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in ["clean", "fgsm@1/255", "aa-apgd-ce@0.5/255", "aa-square@8/255"] {
            assert_eq!(s.parse::<AccColumn>().unwrap().to_string(), s);
        }
        assert_eq!("apgd@1".parse::<AccColumn>().unwrap().to_string(), "aa-apgd-ce@1/255");
        assert!("pgd@-1/255".parse::<AccColumn>().is_err());
        assert!("foo".parse::<AccColumn>().is_err());
    }

    #[test]
    fn canonical_order() {
        let mut cols: Vec<AccColumn> = ["pgd@0.1/255", "fgsm@8/255", "clean", "fgsm@0.5/255"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        cols.sort();
        let names: Vec<String> = cols.iter().map(ToString::to_string).collect();
        assert_eq!(names, ["clean", "fgsm@0.5/255", "fgsm@8/255", "pgd@0.1/255"]);
    }
}
