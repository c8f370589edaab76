#![allow(dead_code)]

use mdal_core::pool::{generate_synthetic, DomainSpec, MultiDomainPool, Sample, SplitConfig, SyntheticSpec};

/// Samples with sequential ids; `rows` are `(domain, label, features)`.
pub fn samples(rows: &[(usize, usize, &[f64])]) -> Vec<Sample> {
    rows.iter()
        .enumerate()
        .map(|(i, &(domain, label, features))| Sample {
            id: i as u64,
            features: features.to_vec(),
            label,
            domain,
        })
        .collect()
}

pub fn pool(samples: Vec<Sample>, classes: usize, domains: usize, validation: usize) -> MultiDomainPool {
    MultiDomainPool::new(
        samples,
        classes,
        domains,
        &SplitConfig {
            seed: 0,
            validation_per_domain: validation,
        },
    )
    .unwrap()
}

pub fn domain(count: usize, noise: f64, angle: f64) -> DomainSpec {
    DomainSpec { count, noise, angle }
}

pub fn synthetic(domains: Vec<DomainSpec>, classes: usize, dim: usize, validation: usize, seed: u64) -> MultiDomainPool {
    generate_synthetic(&SyntheticSpec {
        num_classes: classes,
        dim,
        domains,
        validation_per_domain: validation,
        seed,
    })
    .unwrap()
}
