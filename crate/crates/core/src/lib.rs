//! Multi-domain pool-based active learning.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every piece of the
//! query loop that does not touch the filesystem:
//!
//! - [`pool`]: samples, the labeled/unlabeled/validation split, the synthetic
//!   multi-domain generator and the label oracle.
//! - [`learner`]: a linear softmax classifier retrained from scratch each round.
//! - [`uncertainty`]: margin, least-confidence and entropy scores.
//! - [`allocation`]: per-domain budget allocators with largest-remainder rounding.
//! - [`selection`]: random, global top-k, two-step and threshold-calibrated queries.
//! - [`engine`]: the seed/train/evaluate/allocate/select/label loop.
//! - [`metrics`]: ambient, mean-group and worst-group accuracy, data efficiency,
//!   oracle strategy selection and the mean/worst Pareto frontier.
//!
//! Selection code only ever sees [`selection::Candidate`]s, which carry features
//! and domain but no label. Labels of unlabeled samples are reachable only
//! through [`pool::MultiDomainPool::label_oracle`].

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod allocation;
pub mod engine;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod pool;
pub mod selection;
pub mod uncertainty;

mod rng;

pub use error::{Error, Result};
