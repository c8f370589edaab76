//! Linear softmax classifier trained by mini-batch gradient descent.
//!
//! The model is retrained from scratch every round: weights are drawn from
//! the hyperparameter seed, the labeled set is sorted by id, and each epoch
//! visits it in a seeded random order. Objective: mean cross-entropy plus
//! `l2 / 2 * ||W||^2` (bias unregularized).

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::pool::{LabeledExample, MultiDomainPool};
use crate::rng::{self, streams};
use crate::{Error, Result};

const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 32,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    num_classes: usize,
    dim: usize,
    /// Row-major `num_classes x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Classifier {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Classifier {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn from_parts(num_classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::TooFewClasses(num_classes));
        }
        if weights.len() != num_classes * dim {
            return Err(Error::DimensionMismatch {
                expected: num_classes * dim,
                got: weights.len(),
            });
        }
        if bias.len() != num_classes {
            return Err(Error::DimensionMismatch {
                expected: num_classes,
                got: bias.len(),
            });
        }
        Ok(Classifier {
            num_classes,
            dim,
            weights,
            bias,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Fits a fresh model on `examples`.
    pub fn train(examples: &[LabeledExample<'_>], num_classes: usize, hyper: &Hyperparams) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if num_classes < 2 {
            return Err(Error::TooFewClasses(num_classes));
        }
        let dim = examples[0].features.len();
        if let Some(e) = examples.iter().find(|e| e.features.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: e.features.len(),
            });
        }
        if let Some(e) = examples.iter().find(|e| e.label >= num_classes) {
            return Err(Error::InvalidPool(alloc::format!(
                "sample {} has label {} with {num_classes} classes",
                e.id, e.label
            )));
        }
        let mut order: Vec<&LabeledExample<'_>> = examples.iter().collect();
        order.sort_by_key(|e| e.id);

        let mut rng = rng::stream(hyper.seed, streams::LEARNER);
        let init = Normal::new(0.0, INIT_SCALE).expect("valid normal");
        let mut model = Classifier {
            num_classes,
            dim,
            weights: (0..num_classes * dim).map(|_| init.sample(&mut rng)).collect(),
            bias: vec![0.0; num_classes],
        };

        let batch = hyper.batch_size.max(1);
        let mut grad = Gradient::zeros(num_classes, dim);
        let mut probs = vec![0.0; num_classes];
        for _ in 0..hyper.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                grad.clear();
                for e in chunk {
                    model.accumulate(e.features, e.label, &mut probs, &mut grad);
                }
                let scale = hyper.learning_rate / chunk.len() as f64;
                let decay = hyper.learning_rate * hyper.l2;
                for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                    *w -= scale * g + decay * *w;
                }
                for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                    *b -= scale * g;
                }
            }
        }
        Ok(model)
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.weights[k * self.dim..(k + 1) * self.dim];
            *o = self.bias[k] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            })
        }
    }

    fn proba_into(&self, x: &[f64], out: &mut [f64]) {
        self.logits_into(x, out);
        softmax_in_place(out);
    }

    /// Adds the cross-entropy gradient of one example to `grad`; returns the
    /// example's loss.
    fn accumulate(&self, x: &[f64], y: usize, probs: &mut [f64], grad: &mut Gradient) -> f64 {
        self.logits_into(x, probs);
        let loss = -log_softmax_at(probs, y);
        softmax_in_place(probs);
        for (k, &p) in probs.iter().enumerate() {
            let delta = p - f64::from(u8::from(k == y));
            grad.bias[k] += delta;
            let row = &mut grad.weights[k * self.dim..(k + 1) * self.dim];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += delta * xi;
            }
        }
        loss
    }

    /// Class probabilities for one feature vector.
    pub fn predict_proba_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.num_classes];
        self.proba_into(x, &mut out);
        Ok(out)
    }

    /// Class probabilities, one row per input.
    pub fn predict_proba<'a, I>(&self, rows: I) -> Result<Vec<Vec<f64>>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        rows.into_iter().map(|x| self.predict_proba_row(x)).collect()
    }

    /// Argmax class, ties to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let p = self.predict_proba_row(x)?;
        Ok(argmax(&p))
    }

    /// `-log p(y | x)`.
    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_dim(x)?;
        let mut logits = vec![0.0; self.num_classes];
        self.logits_into(x, &mut logits);
        Ok(-log_softmax_at(&logits, y))
    }

    /// Regularized single-example objective `-log p(y|x) + l2/2 ||W||^2` and its
    /// gradient with respect to the weights and bias.
    pub fn loss_and_gradient(&self, x: &[f64], y: usize, l2: f64) -> Result<(f64, Gradient)> {
        self.check_dim(x)?;
        let mut grad = Gradient::zeros(self.num_classes, self.dim);
        let mut probs = vec![0.0; self.num_classes];
        let mut loss = self.accumulate(x, y, &mut probs, &mut grad);
        loss += 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        for (g, w) in grad.weights.iter_mut().zip(&self.weights) {
            *g += l2 * w;
        }
        Ok((loss, grad))
    }

    /// Fraction of `examples` misclassified under argmax prediction.
    pub fn error_rate(&self, examples: &[LabeledExample<'_>]) -> Result<f64> {
        let mut wrong = 0usize;
        for e in examples {
            if self.predict(e.features)? != e.label {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / examples.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradient {
    fn zeros(num_classes: usize, dim: usize) -> Self {
        Gradient {
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().for_each(|g| *g = 0.0);
        self.bias.iter_mut().for_each(|g| *g = 0.0);
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = libm::exp(*x - max);
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
    logits[k] - lse
}

/// Validation error rate of each domain.
pub fn per_domain_error(model: &Classifier, pool: &MultiDomainPool) -> Result<Vec<f64>> {
    (0..pool.num_domains())
        .map(|j| {
            let v = pool.validation_set(j);
            if v.is_empty() {
                return Err(Error::EmptyValidation(j));
            }
            model.error_rate(&v)
        })
        .collect()
}

/// Mean training cross-entropy of the labeled samples of each domain. A
/// domain with no labeled samples gets the mean over all of L.
pub fn per_domain_train_loss(model: &Classifier, pool: &MultiDomainPool) -> Result<Vec<f64>> {
    let train = pool.training_set();
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let n = pool.num_domains();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    let mut total = 0.0;
    for e in &train {
        let l = model.loss(e.features, e.label)?;
        sums[e.domain] += l;
        counts[e.domain] += 1;
        total += l;
    }
    let global = total / train.len() as f64;
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { global } else { s / c as f64 })
        .collect())
}
