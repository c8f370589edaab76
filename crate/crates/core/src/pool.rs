//! Multi-domain datasets and the labeled/unlabeled/validation split.
//!
//! A [`MultiDomainPool`] shares its samples behind an `Arc`; only the
//! labeled and unlabeled id sets are per-run state, so cloning a pool for a
//! new run is cheap. Validation sets are drawn once, at creation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, streams};
use crate::selection::Candidate;
use crate::{Error, Result};

pub type SampleId = u64;

/// One datapoint with its ground-truth label and domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: SampleId,
    pub features: Vec<f64>,
    pub label: usize,
    pub domain: usize,
}

/// How validation sets are carved out of a fresh dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub seed: u64,
    pub validation_per_domain: usize,
}

/// Whether [`MultiDomainPool::domain_sizes`] reports the current unlabeled
/// set or the one the pool was created with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeBasis {
    Current,
    Initial,
}

/// A labeled example as seen by the learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample<'a> {
    pub id: SampleId,
    pub features: &'a [f64],
    pub label: usize,
    pub domain: usize,
}

#[derive(Debug)]
struct Dataset {
    samples: Vec<Sample>,
    index: BTreeMap<SampleId, usize>,
    num_classes: usize,
    num_domains: usize,
    dim: usize,
    validation: Vec<Vec<SampleId>>,
    validation_ids: BTreeSet<SampleId>,
    initial_sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MultiDomainPool {
    data: Arc<Dataset>,
    unlabeled: BTreeSet<SampleId>,
    labeled: BTreeSet<SampleId>,
}

impl MultiDomainPool {
    /// Builds a pool and draws `validation_per_domain` samples per domain,
    /// uniformly without replacement, as that domain's validation set.
    pub fn new(
        mut samples: Vec<Sample>,
        num_classes: usize,
        num_domains: usize,
        split: &SplitConfig,
    ) -> Result<Self> {
        if num_domains == 0 {
            return Err(Error::InvalidPool("at least one domain is required".into()));
        }
        if num_classes < 2 {
            return Err(Error::TooFewClasses(num_classes));
        }
        if samples.is_empty() {
            return Err(Error::InvalidPool("no samples".into()));
        }
        samples.sort_by_key(|s| s.id);
        let dim = samples[0].features.len();
        if dim == 0 {
            return Err(Error::InvalidPool("samples have no features".into()));
        }
        let mut index = BTreeMap::new();
        let mut by_domain: Vec<Vec<SampleId>> = vec![Vec::new(); num_domains];
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::InvalidPool(format!(
                    "sample {} has {} features, expected {dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if let Some(x) = s.features.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidPool(format!("sample {} has feature {x}", s.id)));
            }
            if s.label >= num_classes {
                return Err(Error::InvalidPool(format!(
                    "sample {} has label {} but there are {num_classes} classes",
                    s.id, s.label
                )));
            }
            if s.domain >= num_domains {
                return Err(Error::InvalidPool(format!(
                    "sample {} has domain {} but there are {num_domains} domains",
                    s.id, s.domain
                )));
            }
            if index.insert(s.id, i).is_some() {
                return Err(Error::InvalidPool(format!("duplicate sample id {}", s.id)));
            }
            by_domain[s.domain].push(s.id);
        }

        let mut rng = rng::stream(split.seed, streams::SPLIT);
        let mut validation = Vec::with_capacity(num_domains);
        let mut validation_ids = BTreeSet::new();
        for (j, ids) in by_domain.iter().enumerate() {
            if split.validation_per_domain >= ids.len() {
                return Err(Error::InvalidPool(format!(
                    "validation size {} is not smaller than domain {j} ({} samples)",
                    split.validation_per_domain,
                    ids.len()
                )));
            }
            let mut chosen: Vec<SampleId> =
                index::sample(&mut rng, ids.len(), split.validation_per_domain)
                    .into_iter()
                    .map(|i| ids[i])
                    .collect();
            chosen.sort_unstable();
            validation_ids.extend(chosen.iter().copied());
            validation.push(chosen);
        }
        let unlabeled: BTreeSet<SampleId> = samples
            .iter()
            .map(|s| s.id)
            .filter(|id| !validation_ids.contains(id))
            .collect();
        let mut initial_sizes = vec![0; num_domains];
        for id in &unlabeled {
            initial_sizes[samples[index[id]].domain] += 1;
        }

        Ok(MultiDomainPool {
            data: Arc::new(Dataset {
                samples,
                index,
                num_classes,
                num_domains,
                dim,
                validation,
                validation_ids,
                initial_sizes,
            }),
            unlabeled,
            labeled: BTreeSet::new(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.data.num_classes
    }

    pub fn num_domains(&self) -> usize {
        self.data.num_domains
    }

    pub fn dim(&self) -> usize {
        self.data.dim
    }

    /// Total number of samples, including validation.
    pub fn len(&self) -> usize {
        self.data.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.samples.is_empty()
    }

    pub fn unlabeled_ids(&self) -> &BTreeSet<SampleId> {
        &self.unlabeled
    }

    pub fn labeled_ids(&self) -> &BTreeSet<SampleId> {
        &self.labeled
    }

    pub fn validation_ids(&self, domain: usize) -> &[SampleId] {
        &self.data.validation[domain]
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.data.index.contains_key(&id)
    }

    fn sample(&self, id: SampleId) -> Result<&Sample> {
        self.data
            .index
            .get(&id)
            .map(|&i| &self.data.samples[i])
            .ok_or(Error::UnknownSample(id))
    }

    pub fn features(&self, id: SampleId) -> Result<&[f64]> {
        self.sample(id).map(|s| s.features.as_slice())
    }

    pub fn domain_of(&self, id: SampleId) -> Result<usize> {
        self.sample(id).map(|s| s.domain)
    }

    /// Ground-truth label of a labeled or validation sample. Asking for the
    /// label of an unlabeled sample is an error: use [`Self::label_oracle`].
    pub fn label(&self, id: SampleId) -> Result<usize> {
        let s = self.sample(id)?;
        if self.labeled.contains(&id) || self.data.validation_ids.contains(&id) {
            Ok(s.label)
        } else {
            Err(Error::LabelAccess(id))
        }
    }

    /// Reveals the label of an unlabeled sample and moves it into the
    /// labeled set.
    pub fn label_oracle(&mut self, id: SampleId) -> Result<usize> {
        let s = self.sample(id)?;
        if self.labeled.contains(&id) {
            return Err(Error::AlreadyLabeled(id));
        }
        if self.data.validation_ids.contains(&id) {
            return Err(Error::ValidationSample(id));
        }
        let label = s.label;
        self.unlabeled.remove(&id);
        self.labeled.insert(id);
        Ok(label)
    }

    /// Unlabeled count per domain.
    pub fn domain_sizes(&self, basis: SizeBasis) -> Vec<usize> {
        match basis {
            SizeBasis::Initial => self.data.initial_sizes.clone(),
            SizeBasis::Current => {
                let mut sizes = vec![0; self.num_domains()];
                for &id in &self.unlabeled {
                    sizes[self.data.samples[self.data.index[&id]].domain] += 1;
                }
                sizes
            }
        }
    }

    /// The unlabeled pool as selection sees it: ids, domains and features.
    pub fn candidates(&self) -> Vec<Candidate<'_>> {
        self.unlabeled
            .iter()
            .map(|id| {
                let s = &self.data.samples[self.data.index[id]];
                Candidate {
                    id: s.id,
                    domain: s.domain,
                    features: &s.features,
                }
            })
            .collect()
    }

    /// The labeled set L, ordered by id.
    pub fn training_set(&self) -> Vec<LabeledExample<'_>> {
        self.labeled.iter().map(|id| self.example(*id)).collect()
    }

    /// Validation set V_j, ordered by id.
    pub fn validation_set(&self, domain: usize) -> Vec<LabeledExample<'_>> {
        self.data.validation[domain].iter().map(|id| self.example(*id)).collect()
    }

    /// Union of all validation sets, ordered by domain then id.
    pub fn pooled_validation(&self) -> Vec<LabeledExample<'_>> {
        (0..self.num_domains()).flat_map(|j| self.validation_set(j)).collect()
    }

    fn example(&self, id: SampleId) -> LabeledExample<'_> {
        let s = &self.data.samples[self.data.index[&id]];
        LabeledExample {
            id: s.id,
            features: &s.features,
            label: s.label,
            domain: s.domain,
        }
    }

    /// Every sample, ordered by id, for serialization. This bypasses the
    /// label gate and must not be handed to selection code.
    pub fn export_samples(&self) -> &[Sample] {
        &self.data.samples
    }

    /// Checks that the split is consistent: the id sets are pairwise
    /// disjoint, refer to existing samples, and validation sets are
    /// domain-pure.
    pub fn check_invariants(&self) -> core::result::Result<(), String> {
        for id in self.unlabeled.iter().chain(&self.labeled) {
            if !self.contains(*id) {
                return Err(format!("unknown id {id}"));
            }
            if self.data.validation_ids.contains(id) {
                return Err(format!("validation id {id} is also in the training pool"));
            }
        }
        if let Some(id) = self.unlabeled.intersection(&self.labeled).next() {
            return Err(format!("id {id} is both labeled and unlabeled"));
        }
        let mut seen = BTreeSet::new();
        for (j, ids) in self.data.validation.iter().enumerate() {
            for id in ids {
                if !seen.insert(*id) {
                    return Err(format!("id {id} is in two validation sets"));
                }
                match self.sample(*id) {
                    Ok(s) if s.domain == j => {}
                    Ok(s) => {
                        return Err(format!("validation set {j} holds id {id} of domain {}", s.domain))
                    }
                    Err(_) => return Err(format!("unknown validation id {id}")),
                }
            }
        }
        let total = self.unlabeled.len() + self.labeled.len() + seen.len();
        if total != self.len() {
            return Err(format!("{total} ids in the split but {} samples", self.len()));
        }
        Ok(())
    }
}

/// Per-domain parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub count: usize,
    /// Standard deviation of the isotropic feature noise.
    pub noise: f64,
    /// Rotation of the class prototypes in the first two coordinates, radians.
    pub angle: f64,
}

/// Parameters of the synthetic multi-domain classification pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub domains: Vec<DomainSpec>,
    #[serde(default = "default_validation_per_domain")]
    pub validation_per_domain: usize,
    pub seed: u64,
}

fn default_validation_per_domain() -> usize {
    50
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSynthetic(msg));
        if self.domains.is_empty() {
            return bad("at least one domain is required".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.dim < 2 {
            return bad(format!("feature dimension must be at least 2, got {}", self.dim));
        }
        for (j, d) in self.domains.iter().enumerate() {
            if d.count == 0 {
                return bad(format!("domain {j} has no samples"));
            }
            if !(d.noise.is_finite() && d.noise > 0.0) {
                return bad(format!("domain {j} noise must be positive, got {}", d.noise));
            }
            if !d.angle.is_finite() {
                return bad(format!("domain {j} angle is {}", d.angle));
            }
        }
        Ok(())
    }
}

/// Draws a pool in which domain `j` holds samples
/// `x = R(angle_j) * prototype[label] + noise_j * z`, with `z` standard
/// normal, `R` a rotation of the first two coordinates and unit-length class
/// prototypes shared by all domains.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MultiDomainPool> {
    spec.validate()?;
    let k = spec.num_classes;
    let d = spec.dim;

    let mut proto_rng = rng::stream(spec.seed, streams::PROTOTYPES);
    let prototypes: Vec<Vec<f64>> = (0..k)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut proto_rng)).collect();
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();

    let mut rng = rng::stream(spec.seed, streams::SAMPLES);
    let mut samples = Vec::with_capacity(spec.domains.iter().map(|d| d.count).sum());
    let mut next_id = 0;
    for (j, dom) in spec.domains.iter().enumerate() {
        let (sin, cos) = (libm::sin(dom.angle), libm::cos(dom.angle));
        for _ in 0..dom.count {
            let label = rng.random_range(0..k);
            let mut x = prototypes[label].clone();
            let (a, b) = (x[0], x[1]);
            x[0] = cos * a - sin * b;
            x[1] = sin * a + cos * b;
            for xi in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xi += dom.noise * z;
            }
            samples.push(Sample {
                id: next_id,
                features: x,
                label,
                domain: j,
            });
            next_id += 1;
        }
    }
    MultiDomainPool::new(
        samples,
        k,
        spec.domains.len(),
        &SplitConfig {
            seed: spec.seed,
            validation_per_domain: spec.validation_per_domain,
        },
    )
}
