//! Experiment configuration: one JSON document, snake_case fields.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mdal_core::learner::Hyperparams;
use mdal_core::pool::{MultiDomainPool, Sample, SplitConfig, SyntheticSpec};
use mdal_core::selection::{QueryStrategy, ThresholdMode};
use mdal_core::uncertainty::Scorer;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, LoadOptions};
use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    File {
        path: PathBuf,
        #[serde(flatten)]
        options: LoadOptions,
    },
}

/// A strategy entry: either a config name (`uniform_margin`) or explicit
/// allocator and scorer fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategySpec {
    Name(QueryStrategy),
    TwoStep {
        allocator: mdal_core::allocation::Allocator,
        scorer: Scorer,
    },
}

impl StrategySpec {
    pub fn strategy(&self) -> QueryStrategy {
        match self {
            StrategySpec::Name(s) => *s,
            StrategySpec::TwoStep { allocator, scorer } => QueryStrategy::TwoStep {
                allocator: *allocator,
                scorer: *scorer,
            },
        }
    }
}

/// Random domain subsets for composition sweeps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionSweep {
    pub count: usize,
    pub min_domains: usize,
    pub max_domains: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Keep only these domains (renumbered in the given order).
    #[serde(default)]
    pub domain_subset: Option<Vec<usize>>,
    #[serde(default)]
    pub compositions: Option<CompositionSweep>,
    pub strategies: Vec<StrategySpec>,
    pub seeds: Vec<u64>,
    pub seed_size: usize,
    pub round_budget: usize,
    pub rounds: usize,
    #[serde(default)]
    pub learner: Hyperparams,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
    pub output_dir: PathBuf,
    /// Rounds at which summaries, efficiencies and oracles are reported;
    /// defaults to the last round.
    #[serde(default)]
    pub eval_rounds: Vec<usize>,
    /// Labeled samples per source domain for transfer matrices.
    #[serde(default = "default_transfer_per_domain")]
    pub transfer_per_domain: usize,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_transfer_per_domain() -> usize {
    200
}

/// One domain composition: the original domain indices it keeps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub name: String,
    pub domains: Vec<usize>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn strategies(&self) -> Vec<QueryStrategy> {
        self.strategies.iter().map(StrategySpec::strategy).collect()
    }

    pub fn eval_rounds(&self) -> Vec<usize> {
        if self.eval_rounds.is_empty() {
            vec![self.rounds]
        } else {
            let set: BTreeSet<usize> = self.eval_rounds.iter().copied().collect();
            set.into_iter().collect()
        }
    }

    /// Schema and value checks that need no data.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.strategies.is_empty() {
            return bad("no strategies".into());
        }
        let names: BTreeSet<String> = self.strategies().iter().map(|s| s.name()).collect();
        if names.len() != self.strategies.len() {
            return bad("duplicate strategies".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.seed_size == 0 || self.round_budget == 0 || self.rounds == 0 {
            return bad("seed_size, round_budget and rounds must be at least 1".into());
        }
        if let Some(r) = self.eval_rounds.iter().find(|&&r| r == 0 || r > self.rounds) {
            return bad(format!("eval round {r} outside 1..={}", self.rounds));
        }
        if let Some(sub) = &self.domain_subset {
            if sub.is_empty() {
                return bad("domain_subset is empty".into());
            }
            if sub.iter().collect::<BTreeSet<_>>().len() != sub.len() {
                return bad("domain_subset has duplicates".into());
            }
        }
        if let Some(c) = &self.compositions {
            if c.count == 0 || c.min_domains == 0 || c.min_domains > c.max_domains {
                return bad("compositions need count >= 1 and 1 <= min_domains <= max_domains".into());
            }
            if self.domain_subset.is_some() {
                return bad("domain_subset and compositions are mutually exclusive".into());
            }
        }
        if self.learner.epochs == 0 || self.learner.batch_size == 0 || self.learner.learning_rate.is_nan() || self.learner.learning_rate <= 0.0 {
            return bad("learner needs epochs, batch_size and learning_rate > 0".into());
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.workers
            .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    /// Resolves a relative dataset path against `base` (the config's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSource::File { path, .. } = &mut self.dataset {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "MDAL_WORKERS";

/// All samples of the configured source plus the split settings.
pub struct SourceData {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub num_domains: usize,
    pub split: SplitConfig,
}

impl SourceData {
    pub fn load(source: &DatasetSource) -> Result<Self, HarnessError> {
        match source {
            DatasetSource::Synthetic(spec) => {
                let pool = mdal_core::pool::generate_synthetic(spec)?;
                Ok(SourceData {
                    samples: pool.export_samples().to_vec(),
                    num_classes: pool.num_classes(),
                    num_domains: pool.num_domains(),
                    split: SplitConfig {
                        seed: spec.seed,
                        validation_per_domain: spec.validation_per_domain,
                    },
                })
            }
            DatasetSource::File { path, options } => {
                let pool = dataset::load_dataset(path, options)?;
                Ok(SourceData {
                    samples: pool.export_samples().to_vec(),
                    num_classes: pool.num_classes(),
                    num_domains: pool.num_domains(),
                    split: SplitConfig {
                        seed: options.seed,
                        validation_per_domain: options.validation_per_domain,
                    },
                })
            }
        }
    }

    /// Pool restricted to `domains`, renumbered `0..domains.len()` in order.
    pub fn pool_for(&self, domains: &[usize]) -> Result<MultiDomainPool, HarnessError> {
        if let Some(d) = domains.iter().find(|&&d| d >= self.num_domains) {
            return Err(HarnessError::Config(format!(
                "domain {d} does not exist ({} domains)",
                self.num_domains
            )));
        }
        let samples: Vec<Sample> = self
            .samples
            .iter()
            .filter_map(|s| {
                domains.iter().position(|&d| d == s.domain).map(|j| Sample {
                    domain: j,
                    ..s.clone()
                })
            })
            .collect();
        Ok(MultiDomainPool::new(samples, self.num_classes, domains.len(), &self.split)?)
    }

    /// The compositions an experiment runs over.
    pub fn compositions(&self, config: &ExperimentConfig) -> Result<Vec<Composition>, HarnessError> {
        if let Some(sweep) = &config.compositions {
            if sweep.max_domains > self.num_domains {
                return Err(HarnessError::Config(format!(
                    "compositions ask for up to {} domains but the dataset has {}",
                    sweep.max_domains, self.num_domains
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sweep.seed);
            return Ok((0..sweep.count)
                .map(|i| {
                    let size = rng.random_range(sweep.min_domains..=sweep.max_domains);
                    let mut domains = index::sample(&mut rng, self.num_domains, size).into_vec();
                    domains.sort_unstable();
                    Composition {
                        name: format!("comp_{i:02}"),
                        domains,
                    }
                })
                .collect());
        }
        let domains = config
            .domain_subset
            .clone()
            .unwrap_or_else(|| (0..self.num_domains).collect());
        Ok(vec![Composition {
            name: "all".into(),
            domains,
        }])
    }
}
