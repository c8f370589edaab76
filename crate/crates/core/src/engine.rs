//! The two-step multi-domain query loop.
//!
//! One run: draw a uniform seed set, train, evaluate on every validation
//! set, then for each round compute per-domain signals, select `m` ids,
//! reveal their labels through the oracle and retrain from scratch.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::allocation::{AllocationVector, DomainSignals};
use crate::learner::{per_domain_error, per_domain_train_loss, Classifier, Hyperparams};
use crate::metrics::{ambient_accuracy, mean_group_accuracy, worst_group_accuracy, LearningCurve, Metric};
use crate::pool::{MultiDomainPool, SampleId, SizeBasis};
use crate::rng::{self, streams};
use crate::selection::{self, QueryStrategy, ThresholdMode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Seed-set size m0.
    pub seed_size: usize,
    /// Labels bought per round, m.
    pub round_budget: usize,
    pub rounds: usize,
    pub strategy: QueryStrategy,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
    #[serde(default)]
    pub learner: Hyperparams,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self, pool: &MultiDomainPool) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if self.seed_size == 0 {
            return bad("seed set size must be at least 1".into());
        }
        if self.round_budget == 0 {
            return bad("round budget must be at least 1".into());
        }
        if self.rounds == 0 {
            return bad("at least one round is required".into());
        }
        let needed = self.seed_size + self.rounds * self.round_budget;
        let have = pool.unlabeled_ids().len();
        if needed > have {
            return bad(alloc::format!(
                "{} seed + {} x {} round labels exceed the {have} unlabeled samples",
                self.seed_size, self.rounds, self.round_budget
            ));
        }
        Ok(())
    }
}

/// Metrics after training on the labeled set of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub n_labeled: usize,
    pub domain_accuracy: Vec<f64>,
    pub ambient: f64,
    pub mean: f64,
    pub worst: f64,
    /// Labels bought per domain in this round (round 0: the seed set).
    pub spent: AllocationVector,
    /// Seconds spent on the round, when a clock was supplied.
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: QueryStrategy,
    pub seed: u64,
    pub rounds: Vec<RoundRecord>,
}

impl RunRecord {
    pub fn curve(&self, metric: Metric) -> LearningCurve {
        LearningCurve::from_points_unchecked(
            self.rounds
                .iter()
                .map(|r| {
                    let v = match metric {
                        Metric::Ambient => r.ambient,
                        Metric::MeanGroup => r.mean,
                        Metric::WorstGroup => r.worst,
                    };
                    (r.round, v)
                })
                .collect(),
        )
    }

    /// Labels spent per domain over all rounds, seed set included.
    pub fn cumulative_spent(&self) -> Vec<usize> {
        let n = self.rounds.first().map_or(0, |r| r.spent.len());
        let mut total = vec![0; n];
        for r in &self.rounds {
            for (t, s) in total.iter_mut().zip(r.spent.as_slice()) {
                *t += s;
            }
        }
        total
    }
}

/// Hooks into a run: a wall clock (the core crate has none of its own) and
/// a view of the pool after every round.
pub trait Monitor {
    /// Monotone seconds since an arbitrary origin, or `None`.
    fn now(&mut self) -> Option<f64> {
        None
    }

    /// Called after round `round` (0 = seed set) with the labels just bought.
    fn on_round(&mut self, _round: usize, _pool: &MultiDomainPool, _selected: &[SampleId]) {}
}

/// No clock, no observation: `wall_time` stays `None`.
impl Monitor for () {}

/// Runs one active-learning experiment on a fresh copy of `pool`.
pub fn run(pool: &MultiDomainPool, config: &RunConfig) -> Result<RunRecord> {
    run_with_monitor(pool, config, &mut ())
}

pub fn run_with_monitor(pool: &MultiDomainPool, config: &RunConfig, monitor: &mut dyn Monitor) -> Result<RunRecord> {
    config.validate(pool)?;
    if !pool.labeled_ids().is_empty() {
        return Err(Error::InvalidConfig("pool already has labeled samples".into()));
    }
    let mut pool = pool.clone();
    let n = pool.num_domains();
    let initial_sizes = pool.domain_sizes(SizeBasis::Initial);
    let hyper = Hyperparams {
        seed: rng::mix(config.seed, config.learner.seed),
        ..config.learner.clone()
    };
    let mut seed_rng = rng::stream(config.seed, streams::SEED_SET);
    let mut select_rng = rng::stream(config.seed, streams::SELECTION);

    let started = monitor.now();
    let seed_ids = {
        let candidates = pool.candidates();
        selection::select_random(&candidates, config.seed_size, &mut seed_rng)?
    };
    let mut spent = vec![0; n];
    for id in &seed_ids {
        pool.label_oracle(*id)?;
        spent[pool.domain_of(*id)?] += 1;
    }
    let mut model = Classifier::train(&pool.training_set(), pool.num_classes(), &hyper)?;
    let mut errors = per_domain_error(&model, &pool)?;
    let mut rounds = Vec::with_capacity(config.rounds + 1);
    rounds.push(round_record(0, &pool, &errors, &initial_sizes, spent.into(), elapsed(monitor, started)));
    monitor.on_round(0, &pool, &seed_ids);

    for round in 1..=config.rounds {
        let started = monitor.now();
        let (ids, spent) = {
            let candidates = pool.candidates();
            if candidates.len() < config.round_budget {
                return Err(Error::PoolExhausted {
                    round,
                    requested: config.round_budget,
                    available: candidates.len(),
                });
            }
            let m = config.round_budget;
            match config.strategy {
                QueryStrategy::Random => (selection::select_random(&candidates, m, &mut select_rng)?, None),
                QueryStrategy::Global(scorer) => {
                    (selection::select_global_topk(&candidates, &model, scorer, m)?, None)
                }
                QueryStrategy::TwoStep { allocator, scorer } => {
                    let losses = if allocator.uses_losses() {
                        per_domain_train_loss(&model, &pool)?
                    } else {
                        vec![0.0; n]
                    };
                    let signals = DomainSignals {
                        errors: errors.clone(),
                        losses,
                    };
                    let sel = selection::select_two_step(&candidates, &model, allocator, scorer, &signals, m)?;
                    (sel.ids, Some(sel.spent))
                }
                QueryStrategy::ThresholdMargin => {
                    let t = selection::calibrate_threshold(&model, &pool.pooled_validation())?;
                    let ids = selection::select_threshold_margin(
                        &candidates,
                        &model,
                        t,
                        m,
                        &mut select_rng,
                        config.threshold_mode,
                    )?;
                    (ids, None)
                }
                QueryStrategy::ThresholdGroupMargin => {
                    let t = selection::calibrate_threshold(&model, &pool.pooled_validation())?;
                    (
                        selection::select_threshold_group_margin(&candidates, &model, t, m, &mut select_rng)?,
                        None,
                    )
                }
            }
        };
        let mut by_domain = vec![0; n];
        for id in &ids {
            pool.label_oracle(*id)?;
            by_domain[pool.domain_of(*id)?] += 1;
        }
        let spent = spent.unwrap_or_else(|| by_domain.into());
        model = Classifier::train(&pool.training_set(), pool.num_classes(), &hyper)?;
        errors = per_domain_error(&model, &pool)?;
        rounds.push(round_record(round, &pool, &errors, &initial_sizes, spent, elapsed(monitor, started)));
        monitor.on_round(round, &pool, &ids);
    }

    Ok(RunRecord {
        strategy: config.strategy,
        seed: config.seed,
        rounds,
    })
}

fn elapsed(monitor: &mut dyn Monitor, started: Option<f64>) -> Option<f64> {
    Some(monitor.now()? - started?)
}

fn round_record(
    round: usize,
    pool: &MultiDomainPool,
    errors: &[f64],
    initial_sizes: &[usize],
    spent: AllocationVector,
    wall_time: Option<f64>,
) -> RoundRecord {
    let acc: Vec<f64> = errors.iter().map(|e| 1.0 - e).collect();
    RoundRecord {
        round,
        n_labeled: pool.labeled_ids().len(),
        ambient: ambient_accuracy(&acc, initial_sizes).expect("one size per domain"),
        mean: mean_group_accuracy(&acc).expect("at least one domain"),
        worst: worst_group_accuracy(&acc).expect("at least one domain"),
        domain_accuracy: acc,
        spent,
        wall_time,
    }
}

/// Cross-domain accuracy matrix: entry `(i, j)` is the validation accuracy on
/// domain `j` of a model trained from scratch on `per_domain` labels drawn
/// uniformly from the unlabeled part of domain `i`.
pub fn transfer_matrix(
    pool: &MultiDomainPool,
    per_domain: usize,
    learner: &Hyperparams,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if per_domain == 0 {
        return Err(Error::InvalidConfig("per-domain transfer budget must be positive".into()));
    }
    let hyper = Hyperparams {
        seed: rng::mix(seed, learner.seed),
        ..learner.clone()
    };
    let mut rng = rng::stream(seed, streams::TRANSFER);
    let mut matrix = Vec::with_capacity(pool.num_domains());
    for source in 0..pool.num_domains() {
        let mut trained = pool.clone();
        let candidates: Vec<_> = pool.candidates().into_iter().filter(|c| c.domain == source).collect();
        if candidates.len() < per_domain {
            return Err(Error::InvalidConfig(format!(
                "domain {source} has {} unlabeled samples, transfer needs {per_domain}",
                candidates.len()
            )));
        }
        for id in selection::select_random(&candidates, per_domain, &mut rng)? {
            trained.label_oracle(id)?;
        }
        let model = Classifier::train(&trained.training_set(), pool.num_classes(), &hyper)?;
        matrix.push(per_domain_error(&model, pool)?.into_iter().map(|e| 1.0 - e).collect());
    }
    Ok(matrix)
}
