//! Query strategies: which unlabeled ids to label next.
//!
//! Selection functions take the unlabeled pool as a slice of [`Candidate`]s,
//! which carry no labels. Every function returns exactly `m` distinct ids,
//! sorted ascending. Score ties are broken toward the lowest id.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::{AllocationVector, Allocator, DomainSignals};
use crate::learner::{argmax, Classifier};
use crate::pool::{LabeledExample, SampleId};
use crate::uncertainty::{margin_score, Scorer};
use crate::{Error, Result};

/// An unlabeled sample as visible to query strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<'a> {
    pub id: SampleId,
    pub domain: usize,
    pub features: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryStrategy {
    Random,
    /// Domain-blind top-m by score.
    Global(Scorer),
    /// Per-domain budgets from the allocator, then top-m_j by score inside each domain.
    TwoStep { allocator: Allocator, scorer: Scorer },
    ThresholdMargin,
    ThresholdGroupMargin,
}

impl QueryStrategy {
    /// The six strategies the oracle strategy chooses from, in tie-break order.
    pub const ORACLE_BASE: [QueryStrategy; 6] = [
        QueryStrategy::Random,
        QueryStrategy::Global(Scorer::Margin),
        QueryStrategy::TwoStep {
            allocator: Allocator::Uniform,
            scorer: Scorer::Margin,
        },
        QueryStrategy::TwoStep {
            allocator: Allocator::ErrorProportional,
            scorer: Scorer::Margin,
        },
        QueryStrategy::TwoStep {
            allocator: Allocator::LossExponential,
            scorer: Scorer::Margin,
        },
        QueryStrategy::TwoStep {
            allocator: Allocator::WorstGroup,
            scorer: Scorer::Margin,
        },
    ];

    /// Config name: `random`, `margin`, `uniform_margin`, `threshold_margin`, ...
    pub fn name(&self) -> String {
        match self {
            QueryStrategy::Random => "random".into(),
            QueryStrategy::Global(s) => s.name().into(),
            QueryStrategy::TwoStep { allocator, scorer } => format!("{allocator}_{scorer}"),
            QueryStrategy::ThresholdMargin => "threshold_margin".into(),
            QueryStrategy::ThresholdGroupMargin => "threshold_group_margin".into(),
        }
    }

    pub fn allocator(&self) -> Option<Allocator> {
        match self {
            QueryStrategy::TwoStep { allocator, .. } => Some(*allocator),
            _ => None,
        }
    }
}

impl fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for QueryStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => return Ok(QueryStrategy::Random),
            "threshold_margin" => return Ok(QueryStrategy::ThresholdMargin),
            "threshold_group_margin" => return Ok(QueryStrategy::ThresholdGroupMargin),
            _ => {}
        }
        if let Ok(scorer) = s.parse() {
            return Ok(QueryStrategy::Global(scorer));
        }
        for allocator in Allocator::ALL {
            if let Some(rest) = s.strip_prefix(allocator.name()).and_then(|r| r.strip_prefix('_')) {
                if let Ok(scorer) = rest.parse() {
                    return Ok(QueryStrategy::TwoStep { allocator, scorer });
                }
            }
        }
        Err(Error::UnknownName(s.into()))
    }
}

impl Serialize for QueryStrategy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for QueryStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How threshold-margin draws its qualifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Score the whole pool, then draw uniformly among qualifiers.
    #[default]
    Reference,
    /// Visit the pool in random order, scoring lazily, and stop once `m`
    /// qualifiers are found.
    Streaming,
}

fn ensure_available(requested: usize, available: usize) -> Result<()> {
    if requested > available {
        Err(Error::InsufficientUnlabeled { requested, available })
    } else {
        Ok(())
    }
}

/// Scores every candidate with `scorer` under `model`.
pub fn score_candidates(model: &Classifier, candidates: &[Candidate<'_>], scorer: Scorer) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|c| scorer.score(&model.predict_proba_row(c.features)?))
        .collect()
}

/// Positions of the `k` highest scores, ties to the lowest id.
fn top_k(candidates: &[Candidate<'_>], scores: &[f64], positions: &mut [usize], k: usize) -> Vec<usize> {
    positions.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(candidates[a].id.cmp(&candidates[b].id))
    });
    positions.iter().take(k).copied().collect()
}

fn ids_of(candidates: &[Candidate<'_>], positions: impl IntoIterator<Item = usize>) -> Vec<SampleId> {
    let mut ids: Vec<SampleId> = positions.into_iter().map(|i| candidates[i].id).collect();
    ids.sort_unstable();
    ids
}

/// Uniform sample of `m` candidates without replacement.
pub fn select_random<R: Rng + ?Sized>(candidates: &[Candidate<'_>], m: usize, rng: &mut R) -> Result<Vec<SampleId>> {
    ensure_available(m, candidates.len())?;
    let mut sorted: Vec<usize> = (0..candidates.len()).collect();
    sorted.sort_by_key(|&i| candidates[i].id);
    Ok(ids_of(
        candidates,
        index::sample(rng, candidates.len(), m).into_iter().map(|i| sorted[i]),
    ))
}

/// The `m` most uncertain candidates, ignoring domains.
pub fn select_global_topk(
    candidates: &[Candidate<'_>],
    model: &Classifier,
    scorer: Scorer,
    m: usize,
) -> Result<Vec<SampleId>> {
    ensure_available(m, candidates.len())?;
    let scores = score_candidates(model, candidates, scorer)?;
    let mut positions: Vec<usize> = (0..candidates.len()).collect();
    Ok(ids_of(candidates, top_k(candidates, &scores, &mut positions, m)))
}

/// Ids chosen by a two-step query and the per-domain budget actually spent.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepSelection {
    pub ids: Vec<SampleId>,
    pub spent: AllocationVector,
}

/// Per-domain budgets actually spendable given per-domain availability.
///
/// Domains that cannot absorb their share give back the shortfall, which is
/// re-allocated over the domains that still have unlabeled samples by running
/// the same allocator on their signals, until the budget is placed.
pub fn allocate_with_redistribution(
    allocator: Allocator,
    signals: &DomainSignals,
    available: &[usize],
    budget: usize,
) -> Result<AllocationVector> {
    let n = available.len();
    if signals.num_domains() != n {
        return Err(Error::InvalidSignal(format!(
            "{} error rates for {n} domains",
            signals.num_domains()
        )));
    }
    ensure_available(budget, available.iter().sum())?;
    let mut taken = vec![0usize; n];
    let first = allocator.allocate(budget, signals)?;
    for j in 0..n {
        taken[j] = first[j].min(available[j]);
    }
    let mut remaining = budget - taken.iter().sum::<usize>();
    while remaining > 0 {
        let live: Vec<usize> = (0..n).filter(|&j| taken[j] < available[j]).collect();
        let share = allocator.allocate(remaining, &signals.subset(&live))?;
        for (pos, &j) in live.iter().enumerate() {
            let add = share[pos].min(available[j] - taken[j]);
            taken[j] += add;
            remaining -= add;
        }
    }
    Ok(taken.into())
}

/// Allocate the round budget across domains, then take the top-scored
/// candidates inside each domain.
pub fn select_two_step(
    candidates: &[Candidate<'_>],
    model: &Classifier,
    allocator: Allocator,
    scorer: Scorer,
    signals: &DomainSignals,
    m: usize,
) -> Result<TwoStepSelection> {
    ensure_available(m, candidates.len())?;
    let n = signals.num_domains();
    let mut by_domain: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, c) in candidates.iter().enumerate() {
        if c.domain >= n {
            return Err(Error::InvalidSignal(format!(
                "candidate {} in domain {} but signals cover {n} domains",
                c.id, c.domain
            )));
        }
        by_domain[c.domain].push(i);
    }
    let available: Vec<usize> = by_domain.iter().map(Vec::len).collect();
    let spent = allocate_with_redistribution(allocator, signals, &available, m)?;
    let scores = score_candidates(model, candidates, scorer)?;
    let mut chosen = Vec::with_capacity(m);
    for (j, positions) in by_domain.iter_mut().enumerate() {
        chosen.extend(top_k(candidates, &scores, positions, spent[j]));
    }
    Ok(TwoStepSelection {
        ids: ids_of(candidates, chosen),
        spent,
    })
}

/// Threshold `t` such that exactly `errors` of `scores` strictly exceed it
/// when scores are distinct: the `(errors + 1)`-th largest score, `+inf` when
/// there are no errors and `-inf` when every prediction is wrong.
pub fn threshold_from_scores(scores: &[f64], errors: usize) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if errors == 0 {
        return Ok(f64::INFINITY);
    }
    if errors >= scores.len() {
        return Ok(f64::NEG_INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[errors])
}

/// Margin threshold matched to the model's error count on `validation`.
pub fn calibrate_threshold(model: &Classifier, validation: &[LabeledExample<'_>]) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut scores = Vec::with_capacity(validation.len());
    let mut errors = 0;
    for e in validation {
        let p = model.predict_proba_row(e.features)?;
        if argmax(&p) != e.label {
            errors += 1;
        }
        scores.push(margin_score(&p)?);
    }
    threshold_from_scores(&scores, errors)
}

/// Tops up `picked` (positions already chosen) with the highest-margin
/// positions among `rest` until `m` are chosen.
fn fill_with_top_margin(
    candidates: &[Candidate<'_>],
    scores: &[f64],
    mut rest: Vec<usize>,
    mut picked: Vec<usize>,
    m: usize,
) -> Vec<usize> {
    let need = m - picked.len();
    picked.extend(top_k(candidates, scores, &mut rest, need));
    picked
}

/// Uniform draw of `m` candidates among those with margin score above `t`;
/// if fewer qualify, all qualifiers plus the highest-margin non-qualifiers.
pub fn select_threshold_margin<R: Rng + ?Sized>(
    candidates: &[Candidate<'_>],
    model: &Classifier,
    threshold: f64,
    m: usize,
    rng: &mut R,
    mode: ThresholdMode,
) -> Result<Vec<SampleId>> {
    ensure_available(m, candidates.len())?;
    let mut sorted: Vec<usize> = (0..candidates.len()).collect();
    sorted.sort_by_key(|&i| candidates[i].id);
    match mode {
        ThresholdMode::Reference => {
            let scores = score_candidates(model, candidates, Scorer::Margin)?;
            let (qualifiers, rest): (Vec<usize>, Vec<usize>) =
                sorted.into_iter().partition(|&i| scores[i] > threshold);
            if qualifiers.len() >= m {
                let drawn = index::sample(rng, qualifiers.len(), m).into_iter().map(|i| qualifiers[i]);
                Ok(ids_of(candidates, drawn))
            } else {
                Ok(ids_of(candidates, fill_with_top_margin(candidates, &scores, rest, qualifiers, m)))
            }
        }
        ThresholdMode::Streaming => {
            // Lazy Fisher-Yates over the id-sorted pool.
            let mut scores = vec![f64::NAN; candidates.len()];
            let mut picked = Vec::with_capacity(m);
            let len = sorted.len();
            for i in 0..len {
                if picked.len() == m {
                    break;
                }
                let j = rng.random_range(i..len);
                sorted.swap(i, j);
                let pos = sorted[i];
                let s = margin_score(&model.predict_proba_row(candidates[pos].features)?)?;
                scores[pos] = s;
                if s > threshold {
                    picked.push(pos);
                }
            }
            if picked.len() == m {
                return Ok(ids_of(candidates, picked));
            }
            // Every candidate was visited; fall back like the reference mode.
            let rest: Vec<usize> = (0..len).filter(|&i| scores[i] <= threshold).collect();
            Ok(ids_of(candidates, fill_with_top_margin(candidates, &scores, rest, picked, m)))
        }
    }
}

/// Like [`select_threshold_margin`], but each qualifier is drawn with weight
/// `1 / N_j`, `N_j` being the unlabeled count of its domain at round start.
pub fn select_threshold_group_margin<R: Rng + ?Sized>(
    candidates: &[Candidate<'_>],
    model: &Classifier,
    threshold: f64,
    m: usize,
    rng: &mut R,
) -> Result<Vec<SampleId>> {
    ensure_available(m, candidates.len())?;
    let num_domains = candidates.iter().map(|c| c.domain + 1).max().unwrap_or(0);
    let mut domain_sizes = vec![0usize; num_domains];
    for c in candidates {
        domain_sizes[c.domain] += 1;
    }
    let scores = score_candidates(model, candidates, Scorer::Margin)?;
    let mut sorted: Vec<usize> = (0..candidates.len()).collect();
    sorted.sort_by_key(|&i| candidates[i].id);
    let (qualifiers, rest): (Vec<usize>, Vec<usize>) = sorted.into_iter().partition(|&i| scores[i] > threshold);

    let first_size = qualifiers.first().map(|&i| domain_sizes[candidates[i].domain]);
    if qualifiers
        .iter()
        .all(|&i| Some(domain_sizes[candidates[i].domain]) == first_size)
    {
        // Equal weights: plain threshold-margin.
        return select_threshold_margin(candidates, model, threshold, m, rng, ThresholdMode::Reference);
    }
    if qualifiers.len() <= m {
        return Ok(ids_of(candidates, fill_with_top_margin(candidates, &scores, rest, qualifiers, m)));
    }

    let weights: Vec<f64> = qualifiers
        .iter()
        .map(|&i| 1.0 / domain_sizes[candidates[i].domain] as f64)
        .collect();
    let mut dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidSignal(format!("{e}")))?;
    let mut picked = Vec::with_capacity(m);
    for drawn in 0..m {
        let k = dist.sample(rng);
        picked.push(qualifiers[k]);
        if drawn + 1 < m {
            dist.update_weights(&[(k, &0.0)])
                .map_err(|e| Error::InvalidSignal(format!("{e}")))?;
        }
    }
    Ok(ids_of(candidates, picked))
}
