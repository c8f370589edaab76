//! Dataset files: UTF-8 CSV with header `id,domain,label,f0,...,f{d-1}`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use mdal_core::pool::{MultiDomainPool, Sample, SplitConfig};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// How a loaded file is split, and optional declared class/domain counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub seed: u64,
    pub validation_per_domain: usize,
    /// Declared number of domains; inferred as `max(domain) + 1` when absent.
    #[serde(default)]
    pub num_domains: Option<usize>,
    /// Declared number of classes; inferred as `max(label) + 1` (at least 2) when absent.
    #[serde(default)]
    pub num_classes: Option<usize>,
}

pub fn load_dataset(path: &Path, options: &LoadOptions) -> Result<MultiDomainPool, HarnessError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| HarnessError::Dataset(format!("{}: {e}", path.display())))?;
    parse_dataset(&text, options).map_err(|e| match e {
        HarnessError::Dataset(m) => HarnessError::Dataset(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses dataset text. Row numbers in errors count the header as row 1.
pub fn parse_dataset(text: &str, options: &LoadOptions) -> Result<MultiDomainPool, HarnessError> {
    let err = |msg: String| HarnessError::Dataset(msg);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| err(format!("header: {e}")))?.clone();
    let dim = check_header(&header).map_err(err)?;

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| err(format!("row {row}: {e}")))?;
        if record.len() != dim + 3 {
            return Err(err(format!("row {row}: expected {} fields, found {}", dim + 3, record.len())));
        }
        let int = |col: usize, name: &str| -> Result<u64, HarnessError> {
            record[col]
                .parse::<u64>()
                .map_err(|_| err(format!("row {row}: {name} `{}` is not a non-negative integer", &record[col])))
        };
        let id = int(0, "id")?;
        let domain = int(1, "domain")? as usize;
        let label = int(2, "label")? as usize;
        if let Some(n) = options.num_domains {
            if domain >= n {
                return Err(err(format!("row {row}: domain {domain} out of range for {n} domains")));
            }
        }
        if let Some(k) = options.num_classes {
            if label >= k {
                return Err(err(format!("row {row}: label {label} out of range for {k} classes")));
            }
        }
        let mut features = Vec::with_capacity(dim);
        for c in 3..record.len() {
            let v: f64 = record[c]
                .parse()
                .map_err(|_| err(format!("row {row}: feature `{}` is not a number", &record[c])))?;
            if !v.is_finite() {
                return Err(err(format!("row {row}: feature {} is not finite", &record[c])));
            }
            features.push(v);
        }
        samples.push(Sample {
            id,
            features,
            label,
            domain,
        });
    }
    if samples.is_empty() {
        return Err(err("no rows".into()));
    }
    let num_domains = options
        .num_domains
        .unwrap_or_else(|| samples.iter().map(|s| s.domain + 1).max().unwrap_or(1));
    let num_classes = options
        .num_classes
        .unwrap_or_else(|| samples.iter().map(|s| s.label + 1).max().unwrap_or(2).max(2));
    let split = SplitConfig {
        seed: options.seed,
        validation_per_domain: options.validation_per_domain,
    };
    Ok(MultiDomainPool::new(samples, num_classes, num_domains, &split)?)
}

fn check_header(header: &csv::StringRecord) -> Result<usize, String> {
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 4 || cols[..3] != ["id", "domain", "label"] {
        return Err(format!("header must start with `id,domain,label,f0`, got `{}`", cols.join(",")));
    }
    for (i, c) in cols[3..].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(format!("header column {} should be `f{i}`, got `{c}`", i + 4));
        }
    }
    Ok(cols.len() - 3)
}

/// Writes every sample of `pool` in the dataset file format, ordered by id.
pub fn write_dataset<W: Write>(pool: &MultiDomainPool, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "domain".into(), "label".into()];
    header.extend((0..pool.dim()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for s in pool.export_samples() {
        let mut row = vec![s.id.to_string(), s.domain.to_string(), s.label.to_string()];
        row.extend(s.features.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
