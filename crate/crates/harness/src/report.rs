//! Figures and a text table from a results directory.
//!
//! Reads `summary.json` and writes into `<results>/report/`:
//! `curves_<composition>_<metric>.svg`, `pareto_<composition>_r<round>.svg`,
//! `de_<metric>.svg` (when a random baseline was run) and `table.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mdal_core::metrics::{self, Metric};

use crate::error::HarnessError;
use crate::experiment::{MetricTriple, Summary, RANDOM};
use crate::svg::{self, Series};

pub const REPORT_DIR: &str = "report";

pub fn load_summary(results: &Path) -> Result<Summary, HarnessError> {
    let path = results.join("summary.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes every figure and the table; returns the written paths in order.
pub fn emit_report(results: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let summary = load_summary(results)?;
    if summary.compositions.iter().all(|c| c.strategies.is_empty()) {
        return Err(HarnessError::Report(format!("{}: no completed runs", results.display())));
    }
    let dir = results.join(REPORT_DIR);
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut write = |name: String, contents: String| -> Result<(), HarnessError> {
        let path = dir.join(name);
        fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };

    for comp in &summary.compositions {
        if comp.strategies.is_empty() {
            continue;
        }
        for metric in Metric::ALL {
            let series: Vec<Series<'_>> = comp
                .strategies
                .iter()
                .map(|(name, s)| Series {
                    name,
                    points: s.mean_curves[&metric]
                        .iter()
                        .enumerate()
                        .map(|(r, &v)| (r as f64, v))
                        .collect(),
                })
                .collect();
            let title = format!("{} accuracy ({})", metric_label(metric), comp.name);
            write(
                format!("curves_{}_{metric}.svg", comp.name),
                svg::line_chart(&title, "round", "accuracy", &series),
            )?;
        }
        for &r in &summary.eval_rounds {
            let points: Vec<(&str, f64, f64)> = comp
                .strategies
                .iter()
                .filter_map(|(name, s)| s.at_round.get(&r).map(|t| (name.as_str(), t.mean_group, t.worst_group)))
                .collect();
            let frontier = metrics::pareto_frontier(&points.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>());
            write(
                format!("pareto_{}_r{r}.svg", comp.name),
                svg::pareto_chart(
                    &format!("mean vs worst group, round {r} ({})", comp.name),
                    "mean group accuracy",
                    "worst group accuracy",
                    &points,
                    &frontier,
                ),
            )?;
        }
    }

    let round = *summary
        .eval_rounds
        .last()
        .ok_or_else(|| HarnessError::Report("summary has no evaluation rounds".into()))?;
    for metric in Metric::ALL {
        let groups = de_values(&summary, round, metric);
        if groups.is_empty() {
            continue;
        }
        let refs: Vec<(&str, Vec<f64>)> = groups.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
        write(
            format!("de_{metric}.svg"),
            svg::histogram(
                &format!("data efficiency, {} accuracy, round {round}", metric_label(metric)),
                "data efficiency",
                &refs,
                12,
            ),
        )?;
    }
    write("table.txt".into(), table(&summary, round))?;
    Ok(written)
}

fn metric_label(metric: Metric) -> &'static str {
    match metric {
        Metric::Ambient => "ambient",
        Metric::MeanGroup => "mean group",
        Metric::WorstGroup => "worst group",
    }
}

/// DE per non-random strategy (and the oracle), one value per composition.
fn de_values(summary: &Summary, round: usize, metric: Metric) -> BTreeMap<String, Vec<f64>> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for comp in &summary.compositions {
        for (name, s) in &comp.strategies {
            if name == RANDOM {
                continue;
            }
            if let Some(de) = s.data_efficiency.get(&round).and_then(|d| d.get(&metric)) {
                groups.entry(name.clone()).or_default().push(de.value());
            }
        }
        if let Some(de) = comp.oracle.get(&round).and_then(|o| o.get(&metric)).and_then(|o| o.data_efficiency) {
            groups.entry("oracle".into()).or_default().push(de.value());
        }
    }
    groups
}

/// Accuracy in percent at `round`, averaged over compositions.
pub fn table(summary: &Summary, round: usize) -> String {
    let mut rows: Vec<(String, Vec<MetricTriple>)> = Vec::new();
    for name in &summary.strategies {
        let triples: Vec<MetricTriple> = summary
            .compositions
            .iter()
            .filter_map(|c| c.strategies.get(name)?.at_round.get(&round).copied())
            .collect();
        if !triples.is_empty() {
            rows.push((name.clone(), triples));
        }
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("method".len());
    let mut out = String::new();
    writeln!(out, "Aggregate accuracy (%) at round {round}").unwrap();
    writeln!(out, "{:<width$} | {:>7} | {:>10} | {:>11}", "method", "ambient", "mean group", "worst group").unwrap();
    writeln!(out, "{}-+-{}-+-{}-+-{}", "-".repeat(width), "-".repeat(7), "-".repeat(10), "-".repeat(11)).unwrap();
    for (name, triples) in rows {
        let avg = |m: Metric| 100.0 * triples.iter().map(|t| t.get(m)).sum::<f64>() / triples.len() as f64;
        writeln!(
            out,
            "{name:<width$} | {:>7.2} | {:>10.2} | {:>11.2}",
            avg(Metric::Ambient),
            avg(Metric::MeanGroup),
            avg(Metric::WorstGroup)
        )
        .unwrap();
    }
    out
}
