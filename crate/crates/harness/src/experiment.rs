//! Grid runner: compositions x strategies x seeds, persisted as record
//! files, a manifest, a summary and (for sweeps) a DE histogram file.
//!
//! Layout of the output directory:
//!
//! ```text
//! manifest.json                      every cell, its status and record file
//! summary.json                       per-composition aggregates
//! records/<composition>/<strategy>__seed<seed>.csv
//! baselines/<composition>.csv        random baseline: seed mean and running max
//! de_histogram.csv                   composition sweeps only
//! ```
//!
//! Every file is a pure function of the config: wall times are not written
//! and cells are merged in (composition, strategy, seed) order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mdal_core::engine::{self, Monitor, RunConfig, RunRecord};
use mdal_core::metrics::{self, DataEfficiency, LearningCurve, Metric};
use mdal_core::selection::QueryStrategy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Composition, ExperimentConfig, SourceData};
use crate::error::HarnessError;

pub const RANDOM: &str = "random";

/// Names of the six strategies the oracle strategy chooses among, in tie-break order.
pub fn oracle_base_names() -> Vec<String> {
    QueryStrategy::ORACLE_BASE.iter().map(|s| s.name()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub composition: String,
    pub strategy: String,
    pub seed: u64,
    pub status: CellStatus,
    /// Record file relative to the output directory.
    pub record: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub complete: bool,
    pub compositions: Vec<Composition>,
    pub cells: Vec<ManifestCell>,
}

/// Seed-mean accuracies of one strategy at one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub ambient: f64,
    pub mean_group: f64,
    pub worst_group: f64,
}

impl MetricTriple {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Ambient => self.ambient,
            Metric::MeanGroup => self.mean_group,
            Metric::WorstGroup => self.worst_group,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub seeds: Vec<u64>,
    /// Seed-mean curve per metric, indexed by round.
    pub mean_curves: BTreeMap<Metric, Vec<f64>>,
    pub at_round: BTreeMap<usize, MetricTriple>,
    /// Data efficiency against the random baseline, when `random` was run.
    pub data_efficiency: BTreeMap<usize, BTreeMap<Metric, DataEfficiency>>,
    /// Fraction of shared seeds on which this strategy is best (ties count for all).
    pub win_rate: BTreeMap<usize, BTreeMap<Metric, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub strategy: String,
    pub value: f64,
    pub data_efficiency: Option<DataEfficiency>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionSummary {
    pub name: String,
    pub domains: Vec<usize>,
    pub strategies: BTreeMap<String, StrategySummary>,
    /// Oracle winner per evaluation round and metric (all six base strategies needed).
    pub oracle: BTreeMap<usize, BTreeMap<Metric, OracleSummary>>,
    /// Strategies on the mean-group/worst-group Pareto frontier per evaluation round.
    pub pareto: BTreeMap<usize, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategies: Vec<String>,
    pub seeds: Vec<u64>,
    pub eval_rounds: Vec<usize>,
    pub compositions: Vec<CompositionSummary>,
}

struct InstantClock(Instant);

impl Monitor for InstantClock {
    fn now(&mut self) -> Option<f64> {
        Some(self.0.elapsed().as_secs_f64())
    }
}

pub fn record_file_name(strategy: &str, seed: u64) -> String {
    format!("{strategy}__seed{seed}.csv")
}

/// `round,n_labeled,ambient,mean,worst,acc_d0..,budget_d0..`
pub fn record_csv(record: &RunRecord) -> String {
    let n = record.rounds.first().map_or(0, |r| r.domain_accuracy.len());
    let mut out = String::from("round,n_labeled,ambient,mean,worst");
    for j in 0..n {
        write!(out, ",acc_d{j}").unwrap();
    }
    for j in 0..n {
        write!(out, ",budget_d{j}").unwrap();
    }
    out.push('\n');
    for r in &record.rounds {
        write!(out, "{},{},{},{},{}", r.round, r.n_labeled, r.ambient, r.mean, r.worst).unwrap();
        for a in &r.domain_accuracy {
            write!(out, ",{a}").unwrap();
        }
        for b in r.spent.as_slice() {
            write!(out, ",{b}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parsed record file row.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub round: usize,
    pub n_labeled: usize,
    pub ambient: f64,
    pub mean: f64,
    pub worst: f64,
    pub domain_accuracy: Vec<f64>,
    pub budget: Vec<usize>,
}

pub fn read_record(path: &Path) -> Result<Vec<RecordRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let n = (reader.headers()?.len() - 5) / 2;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64, HarnessError> {
            rec[i]
                .parse()
                .map_err(|_| HarnessError::Report(format!("{}: bad number `{}`", path.display(), &rec[i])))
        };
        rows.push(RecordRow {
            round: f(0)? as usize,
            n_labeled: f(1)? as usize,
            ambient: f(2)?,
            mean: f(3)?,
            worst: f(4)?,
            domain_accuracy: (0..n).map(|j| f(5 + j)).collect::<Result<_, _>>()?,
            budget: (0..n).map(|j| f(5 + n + j).map(|v| v as usize)).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Runs the whole grid and writes every result file. Returns the summary;
/// failed cells are recorded in the manifest and reported as an error after
/// all files are written.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary, HarnessError> {
    config.validate()?;
    let source = SourceData::load(&config.dataset)?;
    let compositions = source.compositions(config)?;
    let pools = compositions
        .iter()
        .map(|c| source.pool_for(&c.domains))
        .collect::<Result<Vec<_>, _>>()?;
    let strategies = config.strategies();
    let out = &config.output_dir;
    fs::create_dir_all(out)?;

    let cells: Vec<(usize, QueryStrategy, u64)> = (0..compositions.len())
        .flat_map(|c| {
            strategies
                .iter()
                .flat_map(move |s| config.seeds.iter().map(move |&seed| (c, *s, seed)))
        })
        .collect();

    let thread_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers())
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let results: Vec<(ManifestCell, Option<RunRecord>)> = thread_pool.install(|| {
        cells
            .par_iter()
            .map(|&(c, strategy, seed)| run_cell(config, out, &compositions[c], &pools[c], strategy, seed))
            .collect()
    });

    let failed = results.iter().filter(|(cell, _)| cell.status == CellStatus::Failed).count();
    let manifest = Manifest {
        complete: failed == 0,
        compositions: compositions.clone(),
        cells: results.iter().map(|(cell, _)| cell.clone()).collect(),
    };
    write_file(&out.join("manifest.json"), &to_json(&manifest)?)?;

    let mut by_comp: Vec<BTreeMap<String, Vec<RunRecord>>> = vec![BTreeMap::new(); compositions.len()];
    for ((c, _, _), (_, rec)) in cells.iter().zip(results) {
        if let Some(rec) = rec {
            by_comp[*c].entry(rec.strategy.name()).or_default().push(rec);
        }
    }
    let eval_rounds = config.eval_rounds();
    let mut summaries = Vec::with_capacity(compositions.len());
    for (comp, records) in compositions.iter().zip(&by_comp) {
        let summary = summarize(comp, records, &eval_rounds)?;
        if let Some(baseline) = records.get(RANDOM) {
            write_file(
                &out.join("baselines").join(format!("{}.csv", comp.name)),
                &baseline_csv(baseline)?,
            )?;
        }
        summaries.push(summary);
    }
    let summary = Summary {
        strategies: strategies.iter().map(|s| s.name()).collect(),
        seeds: config.seeds.clone(),
        eval_rounds,
        compositions: summaries,
    };
    write_file(&out.join("summary.json"), &to_json(&summary)?)?;
    if config.compositions.is_some() {
        write_file(&out.join("de_histogram.csv"), &de_histogram_csv(&summary))?;
    }

    if failed > 0 {
        return Err(HarnessError::IncompleteRuns {
            failed,
            total: cells.len(),
        });
    }
    Ok(summary)
}

fn run_cell(
    config: &ExperimentConfig,
    out: &Path,
    comp: &Composition,
    pool: &mdal_core::pool::MultiDomainPool,
    strategy: QueryStrategy,
    seed: u64,
) -> (ManifestCell, Option<RunRecord>) {
    let run_config = RunConfig {
        seed_size: config.seed_size,
        round_budget: config.round_budget,
        rounds: config.rounds,
        strategy,
        threshold_mode: config.threshold_mode,
        learner: config.learner.clone(),
        seed,
    };
    let rel: PathBuf = ["records", &comp.name, &record_file_name(&strategy.name(), seed)]
        .iter()
        .collect();
    let result = engine::run_with_monitor(pool, &run_config, &mut InstantClock(Instant::now()))
        .map_err(HarnessError::from)
        .and_then(|rec| write_file(&out.join(&rel), &record_csv(&rec)).map(|_| rec));
    let mut cell = ManifestCell {
        composition: comp.name.clone(),
        strategy: strategy.name(),
        seed,
        status: CellStatus::Complete,
        record: Some(rel.to_string_lossy().replace('\\', "/")),
        error: None,
    };
    match result {
        Ok(rec) => (cell, Some(rec)),
        Err(e) => {
            cell.status = CellStatus::Failed;
            cell.record = None;
            cell.error = Some(e.to_string());
            (cell, None)
        }
    }
}

fn mean_curve(records: &[RunRecord], metric: Metric) -> Result<LearningCurve, HarnessError> {
    let curves: Vec<LearningCurve> = records.iter().map(|r| r.curve(metric)).collect();
    Ok(LearningCurve::average(&curves)?)
}

fn summarize(
    comp: &Composition,
    records: &BTreeMap<String, Vec<RunRecord>>,
    eval_rounds: &[usize],
) -> Result<CompositionSummary, HarnessError> {
    let mut curves: BTreeMap<Metric, Vec<(String, LearningCurve)>> = BTreeMap::new();
    for (name, recs) in records {
        for metric in Metric::ALL {
            curves
                .entry(metric)
                .or_default()
                .push((name.clone(), mean_curve(recs, metric)?));
        }
    }
    let curve_of = |metric: Metric, name: &str| -> Option<&LearningCurve> {
        curves.get(&metric)?.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    };

    let mut strategies = BTreeMap::new();
    for (name, recs) in records {
        let mut mean_curves = BTreeMap::new();
        let mut at_round = BTreeMap::new();
        let mut data_efficiency = BTreeMap::new();
        let mut win_rate = BTreeMap::new();
        for metric in Metric::ALL {
            let c = curve_of(metric, name).expect("curve computed above");
            mean_curves.insert(metric, c.points().iter().map(|p| p.1).collect());
        }
        for &r in eval_rounds {
            let value = |m: Metric| curve_of(m, name).and_then(|c| c.at(r));
            if let (Some(ambient), Some(mean_group), Some(worst_group)) =
                (value(Metric::Ambient), value(Metric::MeanGroup), value(Metric::WorstGroup))
            {
                at_round.insert(
                    r,
                    MetricTriple {
                        ambient,
                        mean_group,
                        worst_group,
                    },
                );
            }
            if records.contains_key(RANDOM) {
                let mut des = BTreeMap::new();
                for metric in Metric::ALL {
                    let own = curve_of(metric, name).expect("curve computed above");
                    let random = curve_of(metric, RANDOM).expect("random present");
                    des.insert(metric, metrics::data_efficiency(own, random, r)?);
                }
                data_efficiency.insert(r, des);
            }
            let mut rates = BTreeMap::new();
            for metric in Metric::ALL {
                rates.insert(metric, win_rate_of(name, recs, records, metric, r));
            }
            win_rate.insert(r, rates);
        }
        strategies.insert(
            name.clone(),
            StrategySummary {
                seeds: recs.iter().map(|r| r.seed).collect(),
                mean_curves,
                at_round,
                data_efficiency,
                win_rate,
            },
        );
    }

    let base = oracle_base_names();
    let base_refs: Vec<&str> = base.iter().map(String::as_str).collect();
    let mut oracle = BTreeMap::new();
    if base.iter().all(|b| records.contains_key(b)) {
        for &r in eval_rounds {
            let mut per_metric = BTreeMap::new();
            for metric in Metric::ALL {
                let choice = metrics::oracle_select(&curves[&metric], &base_refs, r)?;
                let de = curve_of(metric, RANDOM)
                    .map(|random| metrics::data_efficiency(choice.curve, random, r))
                    .transpose()?;
                per_metric.insert(
                    metric,
                    OracleSummary {
                        strategy: choice.strategy.clone(),
                        value: choice.value,
                        data_efficiency: de,
                    },
                );
            }
            oracle.insert(r, per_metric);
        }
    }

    let mut pareto = BTreeMap::new();
    for &r in eval_rounds {
        let names: Vec<&String> = strategies.keys().collect();
        let points: Vec<(f64, f64)> = names
            .iter()
            .map(|n| {
                let t = strategies[*n].at_round[&r];
                (t.mean_group, t.worst_group)
            })
            .collect();
        pareto.insert(
            r,
            metrics::pareto_frontier(&points)
                .into_iter()
                .map(|i| names[i].clone())
                .collect(),
        );
    }

    Ok(CompositionSummary {
        name: comp.name.clone(),
        domains: comp.domains.clone(),
        strategies,
        oracle,
        pareto,
    })
}

fn win_rate_of(
    name: &str,
    own: &[RunRecord],
    all: &BTreeMap<String, Vec<RunRecord>>,
    metric: Metric,
    round: usize,
) -> f64 {
    let value = |rec: &RunRecord| rec.curve(metric).at(round);
    let mut shared = 0usize;
    let mut wins = 0usize;
    for rec in own {
        let Some(mine) = value(rec) else { continue };
        let mut best = f64::NEG_INFINITY;
        let mut everyone = true;
        for (other, recs) in all {
            match recs.iter().find(|r| r.seed == rec.seed).and_then(value) {
                Some(v) => best = best.max(v),
                None if other != name => everyone = false,
                None => {}
            }
        }
        if everyone {
            shared += 1;
            if mine >= best {
                wins += 1;
            }
        }
    }
    if shared == 0 {
        0.0
    } else {
        wins as f64 / shared as f64
    }
}

/// Random baseline per metric: raw seed mean and its running maximum.
fn baseline_csv(records: &[RunRecord]) -> Result<String, HarnessError> {
    let mut out = String::from("round");
    let mut columns = Vec::new();
    for metric in Metric::ALL {
        let raw = mean_curve(records, metric)?;
        let mono = raw.monotonized();
        write!(out, ",{metric}_mean,{metric}_monotone").unwrap();
        columns.push(raw);
        columns.push(mono);
    }
    out.push('\n');
    for (i, &(round, _)) in columns[0].points().iter().enumerate() {
        write!(out, "{round}").unwrap();
        for c in &columns {
            write!(out, ",{}", c.points()[i].1).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// `composition,round,metric,method,data_efficiency,lower_bound` for margin
/// and the oracle strategy.
pub fn de_histogram_csv(summary: &Summary) -> String {
    let mut out = String::from("composition,round,metric,method,data_efficiency,lower_bound\n");
    for comp in &summary.compositions {
        for &r in &summary.eval_rounds {
            for metric in Metric::ALL {
                let margin = comp
                    .strategies
                    .get("margin")
                    .and_then(|s| s.data_efficiency.get(&r))
                    .and_then(|d| d.get(&metric));
                if let Some(de) = margin {
                    writeln!(out, "{},{r},{metric},margin,{},{}", comp.name, de.value(), de.is_lower_bound()).unwrap();
                }
                let oracle = comp
                    .oracle
                    .get(&r)
                    .and_then(|o| o.get(&metric))
                    .and_then(|o| o.data_efficiency);
                if let Some(de) = oracle {
                    writeln!(out, "{},{r},{metric},oracle,{},{}", comp.name, de.value(), de.is_lower_bound()).unwrap();
                }
            }
        }
    }
    out
}
