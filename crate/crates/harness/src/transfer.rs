//! Cross-domain transfer matrices: one per seed plus their mean.
//!
//! Files, under `<output_dir>/transfer/`: `seed<k>.csv` and `mean.csv`,
//! each with a `source` column followed by `d0..d{N-1}`.

use std::fmt::Write as _;
use std::fs;

use mdal_core::engine;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SourceData};
use crate::error::HarnessError;

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub domains: Vec<usize>,
    /// `(seed, matrix)` in config order.
    pub per_seed: Vec<(u64, Matrix)>,
    pub mean: Matrix,
}

impl TransferResult {
    /// Fraction of rows, over all seeds, whose diagonal entry is the row maximum.
    pub fn diagonal_max_rate(&self) -> f64 {
        let mut rows = 0usize;
        let mut hits = 0usize;
        for (_, m) in &self.per_seed {
            for (i, row) in m.iter().enumerate() {
                rows += 1;
                if row.iter().all(|&v| v <= row[i]) {
                    hits += 1;
                }
            }
        }
        hits as f64 / rows.max(1) as f64
    }
}

pub fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::from("source");
    for j in 0..m.len() {
        write!(out, ",d{j}").unwrap();
    }
    out.push('\n');
    for (i, row) in m.iter().enumerate() {
        write!(out, "d{i}").unwrap();
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Uses the config's dataset, domain subset, learner, seeds and
/// `transfer_per_domain`; composition sweeps are not applicable.
pub fn run_transfer(config: &ExperimentConfig) -> Result<TransferResult, HarnessError> {
    config.validate()?;
    if config.compositions.is_some() {
        return Err(HarnessError::Config(
            "transfer runs on one composition; remove `compositions`".into(),
        ));
    }
    let source = SourceData::load(&config.dataset)?;
    let domains = source.compositions(config)?.remove(0).domains;
    let pool = source.pool_for(&domains)?;

    let thread_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers())
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let per_seed = thread_pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                engine::transfer_matrix(&pool, config.transfer_per_domain, &config.learner, seed)
                    .map(|m| (seed, m))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let n = domains.len();
    let mut mean = vec![vec![0.0; n]; n];
    for (_, m) in &per_seed {
        for (acc, row) in mean.iter_mut().zip(m) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    for row in &mut mean {
        for v in row {
            *v /= per_seed.len() as f64;
        }
    }

    let dir = config.output_dir.join("transfer");
    fs::create_dir_all(&dir)?;
    for (seed, m) in &per_seed {
        fs::write(dir.join(format!("seed{seed}.csv")), matrix_csv(m))?;
    }
    fs::write(dir.join("mean.csv"), matrix_csv(&mean))?;
    Ok(TransferResult {
        domains,
        per_seed,
        mean,
    })
}
