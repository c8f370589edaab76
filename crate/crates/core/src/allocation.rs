//! Per-domain labeling budgets for one query round.
//!
//! The four allocators span a range from ignoring domain difficulty
//! ([`Allocator::Uniform`]) to spending everything on the hardest domain
//! ([`Allocator::WorstGroup`]). Real-valued shares are turned into integers by
//! largest remainder: every domain first gets the floor of its quota, then the
//! leftover units go to the largest fractional parts, ties to the lowest
//! domain index. The result always sums to the round budget exactly.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Index;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Integer labeling budget per domain for one round.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AllocationVector(Vec<usize>);

impl AllocationVector {
    pub fn new(budgets: Vec<usize>) -> Self {
        AllocationVector(budgets)
    }

    pub fn zeros(num_domains: usize) -> Self {
        AllocationVector(vec![0; num_domains])
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl Index<usize> for AllocationVector {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

impl From<Vec<usize>> for AllocationVector {
    fn from(v: Vec<usize>) -> Self {
        AllocationVector(v)
    }
}

/// Per-domain signals an allocator may consume.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainSignals {
    /// Validation error rate per domain.
    pub errors: Vec<f64>,
    /// Mean cross-entropy training loss per domain.
    pub losses: Vec<f64>,
}

impl DomainSignals {
    pub fn num_domains(&self) -> usize {
        self.errors.len()
    }

    /// Signals restricted to `domains`, in that order.
    pub fn subset(&self, domains: &[usize]) -> DomainSignals {
        DomainSignals {
            errors: domains.iter().map(|&j| self.errors[j]).collect(),
            losses: domains
                .iter()
                .map(|&j| self.losses.get(j).copied().unwrap_or(0.0))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocator {
    Uniform,
    ErrorProportional,
    LossExponential,
    WorstGroup,
}

impl Allocator {
    pub const ALL: [Allocator; 4] = [
        Allocator::Uniform,
        Allocator::ErrorProportional,
        Allocator::LossExponential,
        Allocator::WorstGroup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Allocator::Uniform => "uniform",
            Allocator::ErrorProportional => "error_proportional",
            Allocator::LossExponential => "loss_exponential",
            Allocator::WorstGroup => "worst_group",
        }
    }

    /// Whether the allocator reads training losses (otherwise validation errors).
    pub fn uses_losses(self) -> bool {
        matches!(self, Allocator::LossExponential)
    }

    pub fn allocate(self, budget: usize, signals: &DomainSignals) -> Result<AllocationVector> {
        match self {
            Allocator::Uniform => Ok(allocate_uniform(budget, signals.num_domains())),
            Allocator::ErrorProportional => allocate_error_proportional(budget, &signals.errors),
            Allocator::LossExponential => allocate_loss_exponential(budget, &signals.losses),
            Allocator::WorstGroup => allocate_worst_group(budget, &signals.errors),
        }
    }
}

impl fmt::Display for Allocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Allocator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Allocator::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownName(s.into()))
    }
}

/// Equal shares; the `budget % n` leftover units go to the lowest indices.
pub fn allocate_uniform(budget: usize, num_domains: usize) -> AllocationVector {
    if num_domains == 0 {
        return AllocationVector::default();
    }
    let base = budget / num_domains;
    let extra = budget % num_domains;
    (0..num_domains)
        .map(|j| base + usize::from(j < extra))
        .collect::<Vec<_>>()
        .into()
}

/// Shares proportional to the error rates. All-zero errors fall back to uniform.
pub fn allocate_error_proportional(budget: usize, errors: &[f64]) -> Result<AllocationVector> {
    if errors.is_empty() {
        return Err(Error::Empty("error rates"));
    }
    if let Some(e) = errors.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(Error::InvalidSignal(alloc::format!(
            "error rates must be finite and non-negative, got {e}"
        )));
    }
    if errors.iter().all(|&e| e == 0.0) {
        return Ok(allocate_uniform(budget, errors.len()));
    }
    Ok(largest_remainder(budget, errors))
}

/// Shares proportional to `exp(loss)`, computed as a shifted softmax.
pub fn allocate_loss_exponential(budget: usize, losses: &[f64]) -> Result<AllocationVector> {
    if losses.is_empty() {
        return Err(Error::Empty("losses"));
    }
    if let Some(l) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::InvalidSignal(alloc::format!("loss must be finite, got {l}")));
    }
    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = losses.iter().map(|&l| libm::exp(l - max)).collect();
    Ok(largest_remainder(budget, &weights))
}

/// The whole budget to the domain with the highest error, ties to the lowest index.
pub fn allocate_worst_group(budget: usize, errors: &[f64]) -> Result<AllocationVector> {
    if errors.is_empty() {
        return Err(Error::Empty("error rates"));
    }
    if let Some(e) = errors.iter().find(|e| e.is_nan()) {
        return Err(Error::InvalidSignal(alloc::format!("error rate is {e}")));
    }
    let mut worst = 0;
    for (j, &e) in errors.iter().enumerate() {
        if e > errors[worst] {
            worst = j;
        }
    }
    let mut out = vec![0; errors.len()];
    out[worst] = budget;
    Ok(out.into())
}

/// Quotas are snapped to multiples of `1 / QUOTA_GRID` so that rounding noise
/// from rescaled or shifted signals cannot break exact ties.
const QUOTA_GRID: f64 = 1e9;

/// Largest-remainder apportionment of `budget` over non-negative `weights`
/// with a positive sum.
pub fn largest_remainder(budget: usize, weights: &[f64]) -> AllocationVector {
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(weights.len());
    let mut fractions = Vec::with_capacity(weights.len());
    for (j, &w) in weights.iter().enumerate() {
        let quota = libm::round(budget as f64 * (w / total) * QUOTA_GRID) / QUOTA_GRID;
        let whole = libm::floor(quota);
        out.push(whole as usize);
        fractions.push((quota - whole, j));
    }
    let assigned: usize = out.iter().sum();
    let mut left = budget.saturating_sub(assigned);
    // Larger fraction first, then lower index.
    fractions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    while left > 0 {
        for &(_, j) in fractions.iter().take(left) {
            out[j] += 1;
        }
        left = left.saturating_sub(fractions.len());
    }
    out.into()
}
