//! Accuracy aggregates, learning curves, data efficiency, oracle strategy
//! selection and the mean/worst Pareto frontier.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ambient,
    MeanGroup,
    WorstGroup,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Ambient, Metric::MeanGroup, Metric::WorstGroup];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ambient => "ambient",
            Metric::MeanGroup => "mean_group",
            Metric::WorstGroup => "worst_group",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownName(s.into()))
    }
}

/// Per-domain accuracies weighted by the round-0 unlabeled composition.
pub fn ambient_accuracy(accuracy: &[f64], initial_sizes: &[usize]) -> Result<f64> {
    if accuracy.len() != initial_sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: initial_sizes.len(),
            got: accuracy.len(),
        });
    }
    if accuracy.is_empty() {
        return Err(Error::Empty("per-domain accuracies"));
    }
    let total: usize = initial_sizes.iter().sum();
    if total == 0 {
        return Err(Error::Empty("unlabeled pool"));
    }
    Ok(accuracy
        .iter()
        .zip(initial_sizes)
        .map(|(a, &n)| a * n as f64)
        .sum::<f64>()
        / total as f64)
}

pub fn mean_group_accuracy(accuracy: &[f64]) -> Result<f64> {
    if accuracy.is_empty() {
        return Err(Error::Empty("per-domain accuracies"));
    }
    Ok(accuracy.iter().sum::<f64>() / accuracy.len() as f64)
}

pub fn worst_group_accuracy(accuracy: &[f64]) -> Result<f64> {
    if accuracy.is_empty() {
        return Err(Error::Empty("per-domain accuracies"));
    }
    Ok(accuracy.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `(round, accuracy)` pairs with strictly increasing rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    points: Vec<(usize, f64)>,
}

impl LearningCurve {
    pub fn new(points: Vec<(usize, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCurve("no points".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidCurve(format!(
                    "round {} follows round {}",
                    w[1].0, w[0].0
                )));
            }
        }
        if let Some(&(r, a)) = points.iter().find(|(_, a)| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidCurve(format!("accuracy {a} at round {r} is outside [0, 1]")));
        }
        Ok(LearningCurve { points })
    }

    pub(crate) fn from_points_unchecked(points: Vec<(usize, f64)>) -> Self {
        LearningCurve { points }
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    pub fn at(&self, round: usize) -> Option<f64> {
        self.points
            .binary_search_by_key(&round, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    pub fn last_round(&self) -> usize {
        self.points.last().map_or(0, |p| p.0)
    }

    /// Running maximum of the accuracies.
    pub fn monotonized(&self) -> LearningCurve {
        let mut best = f64::NEG_INFINITY;
        LearningCurve {
            points: self
                .points
                .iter()
                .map(|&(r, a)| {
                    best = best.max(a);
                    (r, best)
                })
                .collect(),
        }
    }

    /// Pointwise mean of curves sharing the same rounds.
    pub fn average(curves: &[LearningCurve]) -> Result<LearningCurve> {
        let first = curves.first().ok_or(Error::Empty("curves"))?;
        for c in curves {
            if c.points.len() != first.points.len()
                || c.points.iter().zip(&first.points).any(|(a, b)| a.0 != b.0)
            {
                return Err(Error::InvalidCurve("curves cover different rounds".into()));
            }
        }
        let n = curves.len() as f64;
        Ok(LearningCurve {
            points: first
                .points
                .iter()
                .enumerate()
                .map(|(i, &(r, _))| (r, curves.iter().map(|c| c.points[i].1).sum::<f64>() / n))
                .collect(),
        })
    }
}

/// Data efficiency of a strategy against random sampling at one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DataEfficiency {
    Exact(f64),
    /// Random sampling never reaches the strategy's accuracy within its
    /// horizon; the true efficiency is at least this value.
    LowerBound(f64),
}

impl DataEfficiency {
    pub fn value(self) -> f64 {
        match self {
            DataEfficiency::Exact(v) | DataEfficiency::LowerBound(v) => v,
        }
    }

    pub fn is_lower_bound(self) -> bool {
        matches!(self, DataEfficiency::LowerBound(_))
    }
}

/// Ratio of the (fractional) round at which the running-max random curve
/// first reaches the strategy's accuracy at `round`, to `round` itself.
///
/// The crossing is linearly interpolated between the two bracketing rounds.
/// When the random curve, raw or running-max, sits exactly at the target at
/// `round`, the crossing is `round`: a curve compared with itself has
/// efficiency 1 even where it plateaus or dips.
pub fn data_efficiency(strategy: &LearningCurve, random: &LearningCurve, round: usize) -> Result<DataEfficiency> {
    let target = strategy.at(round).ok_or(Error::MissingRound(round))?;
    if round == 0 {
        return Err(Error::InvalidCurve("data efficiency is undefined at round 0".into()));
    }
    let baseline = random.monotonized();
    let r = round as f64;
    if random.at(round) == Some(target) || baseline.at(round) == Some(target) {
        return Ok(DataEfficiency::Exact(1.0));
    }
    let pts = baseline.points();
    let Some(i) = pts.iter().position(|&(_, a)| a >= target) else {
        return Ok(DataEfficiency::LowerBound(baseline.last_round() as f64 / r));
    };
    if i == 0 {
        return Ok(DataEfficiency::Exact(pts[0].0 as f64 / r));
    }
    let (r0, a0) = pts[i - 1];
    let (r1, a1) = pts[i];
    let crossing = r0 as f64 + (target - a0) / (a1 - a0) * (r1 - r0) as f64;
    Ok(DataEfficiency::Exact(crossing / r))
}

/// Winner of the oracle strategy at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChoice<'a> {
    pub strategy: String,
    pub value: f64,
    pub curve: &'a LearningCurve,
}

/// Picks the best curve at `round` among the named `curves`, which must
/// include every name in `canonical_order`; ties go to the earlier name.
pub fn oracle_select<'a>(
    curves: &'a [(String, LearningCurve)],
    canonical_order: &[&str],
    round: usize,
) -> Result<OracleChoice<'a>> {
    let mut best: Option<OracleChoice<'a>> = None;
    for &name in canonical_order {
        let (_, curve) = curves
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::MissingStrategy(name.into()))?;
        let value = curve.at(round).ok_or(Error::MissingRound(round))?;
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(OracleChoice {
                strategy: name.into(),
                value,
                curve,
            });
        }
    }
    best.ok_or(Error::Empty("oracle candidates"))
}

/// Indices of `(mean, worst)` points not dominated by any other point.
/// A point is dominated when another is at least as good in both coordinates
/// and strictly better in one, so exact duplicates all survive.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].0.total_cmp(&points[a].0).then(a.cmp(&b)));
    let mut keep = Vec::new();
    // Best second coordinate among points with a strictly larger first coordinate.
    let mut best_above = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let x = points[order[i]].0;
        let mut j = i;
        let mut group_best = f64::NEG_INFINITY;
        while j < order.len() && points[order[j]].0 == x {
            group_best = group_best.max(points[order[j]].1);
            j += 1;
        }
        for &p in &order[i..j] {
            let y = points[p].1;
            if best_above < y && group_best <= y {
                keep.push(p);
            }
        }
        best_above = best_above.max(group_best);
        i = j;
    }
    keep.sort_unstable();
    keep
}
