//! Instance-level uncertainty scores over predicted class-probability rows.
//!
//! Every score is oriented so that a larger value means a more uncertain
//! prediction; query strategies take the highest scores first. Entropy uses the
//! natural logarithm.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Margin,
    LeastConfidence,
    Entropy,
}

impl Scorer {
    pub const ALL: [Scorer; 3] = [Scorer::Margin, Scorer::LeastConfidence, Scorer::Entropy];

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Margin => "margin",
            Scorer::LeastConfidence => "least_confidence",
            Scorer::Entropy => "entropy",
        }
    }

    pub fn score(self, probs: &[f64]) -> Result<f64> {
        match self {
            Scorer::Margin => margin_score(probs),
            Scorer::LeastConfidence => Ok(least_confidence_score(probs)),
            Scorer::Entropy => Ok(entropy_score(probs)),
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scorer::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::UnknownName(s.into()))
    }
}

/// Negated gap between the two most probable classes, in `[-1, 0]`.
pub fn margin_score(probs: &[f64]) -> Result<f64> {
    if probs.len() < 2 {
        return Err(Error::TooFewClasses(probs.len()));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    Ok(-(first - second))
}

/// Negated top probability, in `[-1, -1/K]`.
pub fn least_confidence_score(probs: &[f64]) -> f64 {
    -probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Shannon entropy with `0 log 0 = 0`.
pub fn entropy_score(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * libm::log(p))
        .sum::<f64>()
}

/// Scores each probability row with `scorer`.
pub fn score_rows(scorer: Scorer, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.iter().map(|r| scorer.score(r)).collect()
}
