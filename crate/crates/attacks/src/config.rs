use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Apgd,
    Square,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::Fgsm,
        AttackKind::Pgd,
        AttackKind::Apgd,
        AttackKind::Square,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::Apgd => "apgd",
            AttackKind::Square => "square",
        }
    }

    /// Perturbation grid in units of 1/255.
    pub fn epsilon_grid_255(self) -> &'static [f64] {
        match self {
            AttackKind::Fgsm => &FGSM_GRID_255,
            _ => &ITERATIVE_GRID_255,
        }
    }
}

pub const FGSM_GRID_255: [f64; 10] = [0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
pub const ITERATIVE_GRID_255: [f64; 7] = [0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 8.0];

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    /// Also accepts the auto-attack column names `aa-apgd-ce` and `aa-square`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "fgsm" => Ok(AttackKind::Fgsm),
            "pgd" => Ok(AttackKind::Pgd),
            "apgd" | "apgd-ce" | "aa-apgd-ce" => Ok(AttackKind::Apgd),
            "square" | "aa-square" => Ok(AttackKind::Square),
            other => Err(format!("unknown attack {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// L∞ radius on the [0, 1] pixel scale.
    pub epsilon: f64,
    /// PGD step size.
    pub alpha: f64,
    pub iters: usize,
    pub seed: u64,
}

pub const PGD_ALPHA: f64 = 0.01 / 0.3;

impl AttackConfig {
    /// Defaults: PGD 40 steps of 0.01/0.3, APGD 100 iterations, Square 5000
    /// queries.
    pub fn new(kind: AttackKind, epsilon: f64) -> Self {
        let iters = match kind {
            AttackKind::Fgsm => 1,
            AttackKind::Pgd => 40,
            AttackKind::Apgd => 100,
            AttackKind::Square => 5000,
        };
        AttackConfig {
            kind,
            epsilon,
            alpha: PGD_ALPHA,
            iters,
            seed: 0,
        }
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.iters = iters;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in AttackKind::ALL {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
        assert_eq!("aa-apgd-ce".parse::<AttackKind>().unwrap(), AttackKind::Apgd);
        assert_eq!("aa-square".parse::<AttackKind>().unwrap(), AttackKind::Square);
    }

    #[test]
    fn defaults() {
        let c = AttackConfig::new(AttackKind::Pgd, 1.0 / 255.0);
        assert_eq!(c.iters, 40);
        assert!((c.alpha - 1.0 / 30.0).abs() < 1e-15);
        assert_eq!(AttackConfig::new(AttackKind::Apgd, 0.0).iters, 100);
        assert_eq!(AttackConfig::new(AttackKind::Square, 0.0).iters, 5000);
        assert_eq!(AttackKind::Fgsm.epsilon_grid_255().len(), 10);
        assert_eq!(AttackKind::Square.epsilon_grid_255(), &[0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 8.0]);
    }
}
