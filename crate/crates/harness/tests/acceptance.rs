//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release --test acceptance` (or as part of the
//! workspace run). Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mdal::config::{DatasetSource, ExperimentConfig, StrategySpec};
use mdal::dataset::{parse_dataset, LoadOptions};
use mdal::experiment::{read_record, run_experiment};
use mdal::svg::{line_chart, Series};
use mdal::transfer::run_transfer;
use mdal_core::allocation::{
    allocate_error_proportional, allocate_loss_exponential, allocate_uniform, allocate_worst_group, Allocator,
    DomainSignals,
};
use mdal_core::engine::{run, run_with_monitor, Monitor, RunConfig};
use mdal_core::learner::{per_domain_error, per_domain_train_loss, Classifier, Hyperparams};
use mdal_core::metrics::{
    ambient_accuracy, data_efficiency, mean_group_accuracy, oracle_select, pareto_frontier, worst_group_accuracy,
    DataEfficiency, LearningCurve, Metric,
};
use mdal_core::pool::{
    generate_synthetic, DomainSpec, LabeledExample, MultiDomainPool, Sample, SampleId, SizeBasis, SplitConfig,
    SyntheticSpec,
};
use mdal_core::selection::{
    select_global_topk, select_random, select_threshold_group_margin, select_threshold_margin, select_two_step,
    threshold_from_scores, Candidate, QueryStrategy, ThresholdMode,
};
use mdal_core::uncertainty::{entropy_score, least_confidence_score, margin_score, Scorer};
use mdal_core::Error;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Collects named checks; the first failure is reported with its name.
#[derive(Default)]
struct Checks {
    count: usize,
    failures: Vec<String>,
}

impl Checks {
    fn ok(&mut self, name: &str, cond: bool) {
        self.count += 1;
        if !cond {
            self.failures.push(name.to_string());
        }
    }

    fn close(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        let pass = (got - want).abs() <= tol || got == want;
        self.count += 1;
        if !pass {
            self.failures.push(format!("{name}: got {got}, want {want}"));
        }
    }

    fn finish(self) -> Outcome {
        if self.failures.is_empty() {
            Ok(format!("{} checks", self.count))
        } else {
            Err(format!("{}/{} failed: {}", self.failures.len(), self.count, self.failures.join("; ")))
        }
    }
}

const ARITH: f64 = 1e-9;
const SOFT: f64 = 1e-6;

fn samples(rows: &[(usize, usize, Vec<f64>)]) -> Vec<Sample> {
    rows.iter()
        .enumerate()
        .map(|(i, (domain, label, features))| Sample {
            id: i as u64,
            features: features.clone(),
            label: *label,
            domain: *domain,
        })
        .collect()
}

fn pool(rows: &[(usize, usize, Vec<f64>)], classes: usize, domains: usize, validation: usize) -> MultiDomainPool {
    MultiDomainPool::new(
        samples(rows),
        classes,
        domains,
        &SplitConfig {
            seed: 0,
            validation_per_domain: validation,
        },
    )
    .unwrap()
}

fn spec(domains: &[(usize, f64, f64)], classes: usize, dim: usize, validation: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_classes: classes,
        dim,
        domains: domains
            .iter()
            .map(|&(count, noise, angle)| DomainSpec { count, noise, angle })
            .collect(),
        validation_per_domain: validation,
        seed,
    }
}

fn curve(points: &[(usize, f64)]) -> LearningCurve {
    LearningCurve::new(points.to_vec()).unwrap()
}

fn binary_model() -> Classifier {
    Classifier::from_parts(2, 1, vec![0.0, 1.0], vec![0.0, 0.0]).unwrap()
}

fn one_dim_candidates(xs: &[[f64; 1]], domains: &[usize]) -> Vec<Candidate<'static>> {
    let leaked: &'static [[f64; 1]] = Box::leak(xs.to_vec().into_boxed_slice());
    leaked
        .iter()
        .zip(domains)
        .enumerate()
        .map(|(i, (f, &d))| Candidate {
            id: i as u64,
            domain: d,
            features: f,
        })
        .collect()
}

fn experiment(out: &Path, dataset: SyntheticSpec, strategies: &[&str], seeds: &[u64]) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Synthetic(dataset),
        domain_subset: None,
        compositions: None,
        strategies: strategies
            .iter()
            .map(|s| StrategySpec::Name(s.parse().unwrap()))
            .collect(),
        seeds: seeds.to_vec(),
        seed_size: 20,
        round_budget: 5,
        rounds: 2,
        learner: Hyperparams {
            epochs: 15,
            ..Hyperparams::default()
        },
        threshold_mode: ThresholdMode::Reference,
        output_dir: out.to_path_buf(),
        eval_rounds: vec![],
        transfer_per_domain: 40,
        workers: None,
    }
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn pool_and_model_examples(c: &mut Checks) {
    let six: Vec<(usize, usize, Vec<f64>)> = (0..6).map(|i| (i / 3, i % 2, vec![i as f64])).collect();
    let opts = |v| LoadOptions {
        seed: 0,
        validation_per_domain: v,
        num_domains: None,
        num_classes: None,
    };
    let text: String = std::iter::once("id,domain,label,f0".to_string())
        .chain(six.iter().enumerate().map(|(i, r)| format!("{i},{},{},{}", r.0, r.1, r.2[0])))
        .collect::<Vec<_>>()
        .join("\n");
    let p = parse_dataset(&text, &opts(1)).unwrap();
    c.ok("6 rows, 2 domains -> |U| = 4", p.unlabeled_ids().len() == 4);
    c.ok("|V_1| = |V_2| = 1", p.validation_ids(0).len() == 1 && p.validation_ids(1).len() == 1);
    let one = parse_dataset("id,domain,label,f0\n0,0,0,1\n1,0,1,2\n2,0,0,3\n", &opts(1)).unwrap();
    c.ok("one domain -> N = 1", one.num_domains() == 1);
    let pinned = LoadOptions {
        num_domains: Some(3),
        ..opts(0)
    };
    let bad = parse_dataset("id,domain,label,f0\n0,0,0,1\n1,5,1,2\n", &pinned);
    c.ok("domain 5 of 3 names its row", bad.is_err_and(|e| e.to_string().contains("row 3")));

    let twin = generate_synthetic(&spec(&[(3000, 0.5, 0.0), (3000, 0.5, 0.0)], 3, 2, 10, 4)).unwrap();
    let mut sums = [[0.0f64; 2]; 2];
    for s in twin.export_samples() {
        sums[s.domain][0] += s.features[0] / 3000.0;
        sums[s.domain][1] += s.features[1] / 3000.0;
    }
    c.ok(
        "theta = 0, equal sigma -> same feature means",
        (sums[0][0] - sums[1][0]).abs() < 0.1 && (sums[0][1] - sums[1][1]).abs() < 0.1,
    );
    let s = spec(&[(50, 0.5, 0.3), (40, 0.8, 1.0)], 3, 4, 5, 8);
    let (a, b) = (generate_synthetic(&s).unwrap(), generate_synthetic(&s).unwrap());
    c.ok("same synthetic spec -> identical pools", a.export_samples() == b.export_samples());

    let ten: Vec<(usize, usize, Vec<f64>)> = (0..10).map(|i| (usize::from(i >= 3), i % 2, vec![i as f64])).collect();
    let mut p = pool(&ten, 2, 2, 0);
    c.ok("domain sizes [3, 7]", p.domain_sizes(SizeBasis::Current) == [3, 7]);
    let single: Vec<(usize, usize, Vec<f64>)> = (0..10).map(|i| (0, i % 2, vec![i as f64])).collect();
    c.ok("single domain of 10", pool(&single, 2, 1, 0).domain_sizes(SizeBasis::Current) == [10]);
    p.label_oracle(0).unwrap();
    c.ok("label twice -> error", p.label_oracle(0).is_err());
    c.ok("one label decrements its domain", p.domain_sizes(SizeBasis::Current) == [2, 7]);
    p.label_oracle(1).unwrap();
    c.ok("current [1, 7]", p.domain_sizes(SizeBasis::Current) == [1, 7]);
    c.ok("initial [3, 7]", p.domain_sizes(SizeBasis::Initial) == [3, 7]);

    let mut fuzz = generate_synthetic(&spec(&[(4000, 0.5, 0.0), (3000, 0.5, 1.0)], 3, 2, 200, 1)).unwrap();
    let val: Vec<SampleId> = (0..2).flat_map(|d| fuzz.validation_ids(d).to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut intact = true;
    for _ in 0..10_000 {
        let id = if rng.random_bool(0.7) && !fuzz.unlabeled_ids().is_empty() {
            fuzz.unlabeled_ids().iter().nth(rng.random_range(0..fuzz.unlabeled_ids().len())).copied()
        } else {
            val.choose(&mut rng).copied()
        };
        if let Some(id) = id {
            let _ = fuzz.label_oracle(id);
        }
        intact &= val.iter().all(|v| !fuzz.labeled_ids().contains(v));
    }
    c.ok("10^4 labelings never touch validation", intact && fuzz.check_invariants().is_ok());

    let hp = Hyperparams {
        epochs: 20,
        ..Hyperparams::default()
    };
    let rows: Vec<(Vec<f64>, usize)> = (0..60).map(|i| (vec![(i as f64).sin(), (i as f64 * 0.7).cos()], i % 3)).collect();
    let ex: Vec<LabeledExample<'_>> = rows
        .iter()
        .enumerate()
        .map(|(i, (x, y))| LabeledExample {
            id: i as u64,
            features: x,
            label: *y,
            domain: 0,
        })
        .collect();
    c.ok(
        "train twice -> identical weights",
        Classifier::train(&ex, 3, &hp).unwrap() == Classifier::train(&ex, 3, &hp).unwrap(),
    );
    let zero = Classifier::zeros(4, 3).predict_proba_row(&[0.3, -2.0, 7.0]).unwrap();
    c.ok("zero model -> uniform row", zero.iter().all(|&p| (p - 0.25).abs() <= SOFT));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(2..7);
        let d = rng.random_range(1..6);
        let model = Classifier::from_parts(
            k,
            d,
            (0..k * d).map(|_| rng.random_range(-5.0..5.0)).collect(),
            (0..k).map(|_| rng.random_range(-5.0..5.0)).collect(),
        )
        .unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        worst = worst.max((model.predict_proba_row(&x).unwrap().iter().sum::<f64>() - 1.0).abs());
    }
    c.close("row sums on 10^3 inputs", worst, 0.0, ARITH);

    let sign = Classifier::from_parts(2, 1, vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
    let rows: Vec<(usize, usize, Vec<f64>)> = [1.0, 2.0, -1.0, -2.0, 3.0]
        .iter()
        .map(|&x: &f64| (0, usize::from(x > 0.0), vec![x]))
        .collect();
    c.close("perfect model -> eps 0", per_domain_error(&sign, &pool(&rows, 2, 1, 4)).unwrap()[0], 0.0, ARITH);
    let held_out = *pool(&rows, 2, 1, 4).unlabeled_ids().iter().next().unwrap() as usize;
    let mut flipped = rows.clone();
    let flip = (0..5).find(|&i| i != held_out).unwrap();
    flipped[flip].1 = 1 - flipped[flip].1;
    c.close("4 validation, 1 wrong -> 0.25", per_domain_error(&sign, &pool(&flipped, 2, 1, 4)).unwrap()[0], 0.25, ARITH);

    let mut lp = pool(&rows, 2, 1, 0);
    lp.label_oracle(0).unwrap();
    lp.label_oracle(2).unwrap();
    let confident = Classifier::from_parts(2, 1, vec![-60.0, 60.0], vec![0.0, 0.0]).unwrap();
    c.close("confident correct -> loss 0", per_domain_train_loss(&confident, &lp).unwrap()[0], 0.0, SOFT);
    let four: Vec<(usize, usize, Vec<f64>)> = (0..4).map(|i| (0, i, vec![i as f64])).collect();
    let mut up = pool(&four, 4, 1, 0);
    up.label_oracle(1).unwrap();
    c.close("uniform K=4 -> ln 4", per_domain_train_loss(&Classifier::zeros(4, 1), &up).unwrap()[0], 4f64.ln(), SOFT);
}

fn score_and_allocation_examples(c: &mut Checks) {
    c.close("margin [0.5,0.3,0.2]", margin_score(&[0.5, 0.3, 0.2]).unwrap(), -0.2, ARITH);
    c.close("margin [0.5,0.5]", margin_score(&[0.5, 0.5]).unwrap(), 0.0, ARITH);
    c.close("margin [1,0]", margin_score(&[1.0, 0.0]).unwrap(), -1.0, ARITH);
    c.close("least confidence [0.5,0.3,0.2]", least_confidence_score(&[0.5, 0.3, 0.2]), -0.5, ARITH);
    c.close("least confidence uniform 4", least_confidence_score(&[0.25; 4]), -0.25, ARITH);
    c.close("least confidence [1,0,0]", least_confidence_score(&[1.0, 0.0, 0.0]), -1.0, ARITH);
    c.close("entropy uniform 4", entropy_score(&[0.25; 4]), 4f64.ln(), SOFT);
    c.close("entropy [1,0,0]", entropy_score(&[1.0, 0.0, 0.0]), 0.0, SOFT);
    c.close("entropy [0.5,0.5,0]", entropy_score(&[0.5, 0.5, 0.0]), 2f64.ln(), SOFT);

    c.ok("uniform m=50 N=5", allocate_uniform(50, 5).as_slice() == [10; 5]);
    c.ok("uniform m=0", allocate_uniform(0, 3).as_slice() == [0; 3]);
    let ep = |m, e: &[f64]| allocate_error_proportional(m, e).unwrap().into_inner();
    c.ok("error proportional [0.1,0.3,0.6] m=10", ep(10, &[0.1, 0.3, 0.6]) == [1, 3, 6]);
    c.ok("error proportional all zero", ep(9, &[0.0; 3]) == [3, 3, 3]);
    let le = |m, l: &[f64]| allocate_loss_exponential(m, l).unwrap().into_inner();
    c.ok("loss exponential [0,0,ln 2] m=4", le(4, &[0.0, 0.0, 2f64.ln()]) == [1, 1, 2]);
    c.ok("loss exponential equal", le(9, &[0.7; 3]) == allocate_uniform(9, 3).into_inner());
    let wg = |m, e: &[f64]| allocate_worst_group(m, e).unwrap().into_inner();
    c.ok("worst group [0.2,0.5,0.3] m=7", wg(7, &[0.2, 0.5, 0.3]) == [0, 7, 0]);
    c.ok("worst group tie", wg(6, &[0.4, 0.4]) == [6, 0]);
    c.ok("worst group N=1", wg(6, &[0.9]) == [6]);
}

fn selection_examples(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<[f64; 1]> = (0..12).map(|i| [i as f64 - 5.5]).collect();
    let cands = one_dim_candidates(&xs, &[0; 12]);
    let all: Vec<u64> = (0..12).collect();
    c.ok("random m = |U| -> everything", select_random(&cands, 12, &mut rng).unwrap() == all);
    c.ok("random m = 0 -> empty", select_random(&cands, 0, &mut rng).unwrap().is_empty());
    let flat = Classifier::zeros(2, 1);
    c.ok(
        "uniform model topk -> lowest ids",
        select_global_topk(&cands, &flat, Scorer::Margin, 4).unwrap() == [0, 1, 2, 3],
    );
    c.ok("topk m = 0", select_global_topk(&cands, &binary_model(), Scorer::Margin, 0).unwrap().is_empty());

    let halves = one_dim_candidates(&xs, &[0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);
    let signals = DomainSignals {
        errors: vec![0.2, 0.4],
        losses: vec![1.0, 2.0],
    };
    let two = select_two_step(&halves, &binary_model(), Allocator::Uniform, Scorer::Margin, &signals, 4).unwrap();
    c.ok("uniform two-step N=2 m=4 -> 2 + 2", two.spent.as_slice() == [2, 2]);
    let one_signal = DomainSignals {
        errors: vec![0.3],
        losses: vec![0.5],
    };
    let mut same = true;
    for a in Allocator::ALL {
        let t = select_two_step(&cands, &binary_model(), a, Scorer::Margin, &one_signal, 5).unwrap();
        same &= t.ids == select_global_topk(&cands, &binary_model(), Scorer::Margin, 5).unwrap();
    }
    c.ok("N=1 two-step = global topk", same);

    c.ok("k = 0 -> +inf", threshold_from_scores(&[-0.5, -0.1], 0).unwrap() == f64::INFINITY);
    c.ok("k = n -> -inf", threshold_from_scores(&[-0.5, -0.1], 2).unwrap() == f64::NEG_INFINITY);
    let (mut a, mut b) = (ChaCha8Rng::seed_from_u64(9), ChaCha8Rng::seed_from_u64(9));
    c.ok(
        "t = -inf -> select_random",
        select_threshold_margin(&cands, &binary_model(), f64::NEG_INFINITY, 5, &mut a, ThresholdMode::Reference)
            .unwrap()
            == select_random(&cands, 5, &mut b).unwrap(),
    );
    let topk = select_global_topk(&cands, &binary_model(), Scorer::Margin, 5).unwrap();
    for mode in [ThresholdMode::Reference, ThresholdMode::Streaming] {
        c.ok(
            "t = +inf -> global topk",
            select_threshold_margin(&cands, &binary_model(), f64::INFINITY, 5, &mut a, mode).unwrap() == topk,
        );
    }
    let (mut a, mut b) = (ChaCha8Rng::seed_from_u64(4), ChaCha8Rng::seed_from_u64(4));
    c.ok(
        "equal domains -> group margin = threshold margin",
        select_threshold_group_margin(&halves, &binary_model(), -0.9, 3, &mut a).unwrap()
            == select_threshold_margin(&halves, &binary_model(), -0.9, 3, &mut b, ThresholdMode::Reference).unwrap(),
    );
    let (mut a, mut b) = (ChaCha8Rng::seed_from_u64(6), ChaCha8Rng::seed_from_u64(6));
    c.ok(
        "one domain -> group margin = threshold margin",
        select_threshold_group_margin(&cands, &binary_model(), -0.9, 4, &mut a).unwrap()
            == select_threshold_margin(&cands, &binary_model(), -0.9, 4, &mut b, ThresholdMode::Reference).unwrap(),
    );
}

fn engine_and_metric_examples(c: &mut Checks) {
    let p = generate_synthetic(&spec(&[(100, 0.4, 0.0), (80, 0.6, 1.0)], 3, 2, 10, 2)).unwrap();
    let cfg = RunConfig {
        seed_size: 20,
        round_budget: 5,
        rounds: 3,
        strategy: QueryStrategy::Random,
        threshold_mode: ThresholdMode::Reference,
        learner: Hyperparams {
            epochs: 10,
            ..Hyperparams::default()
        },
        seed: 1,
    };
    let rec = run(&p, &cfg).unwrap();
    c.ok("m0=20 m=5 R=3 -> |L| = 35", rec.rounds.last().unwrap().n_labeled == 35);
    c.ok("random twice -> identical records", rec == run(&p, &cfg).unwrap());

    c.close("ambient [10,30] [0.8,0.6]", ambient_accuracy(&[0.8, 0.6], &[10, 30]).unwrap(), 0.65, ARITH);
    c.close(
        "ambient equal sizes = mean group",
        ambient_accuracy(&[0.8, 0.6, 0.3], &[5, 5, 5]).unwrap(),
        mean_group_accuracy(&[0.8, 0.6, 0.3]).unwrap(),
        ARITH,
    );
    c.close("ambient N=1", ambient_accuracy(&[0.7], &[9]).unwrap(), 0.7, ARITH);
    c.close("mean group [0.8,0.6]", mean_group_accuracy(&[0.8, 0.6]).unwrap(), 0.7, ARITH);
    c.close("mean group all equal", mean_group_accuracy(&[0.4; 5]).unwrap(), 0.4, ARITH);
    c.close(
        "mean group permutation",
        mean_group_accuracy(&[0.9, 0.1, 0.5]).unwrap(),
        mean_group_accuracy(&[0.5, 0.9, 0.1]).unwrap(),
        ARITH,
    );
    c.close("worst group [0.8,0.6,0.9]", worst_group_accuracy(&[0.8, 0.6, 0.9]).unwrap(), 0.6, ARITH);
    c.close("worst group N=1", worst_group_accuracy(&[0.3]).unwrap(), 0.3, ARITH);
    let a = [0.8, 0.6, 0.9];
    let (w, m, amb) = (
        worst_group_accuracy(&a).unwrap(),
        mean_group_accuracy(&a).unwrap(),
        ambient_accuracy(&a, &[3, 50, 7]).unwrap(),
    );
    c.ok("worst <= mean <= max, ambient <= max", w <= m && m <= 0.9 && amb <= 0.9 && amb >= w);

    let r = curve(&[(1, 0.5), (2, 0.6), (3, 0.7), (4, 0.8)]);
    let self_de = (1..=4).all(|k| data_efficiency(&r, &r, k).unwrap() == DataEfficiency::Exact(1.0));
    c.ok("DE of a curve against itself", self_de);
    let g = curve(&[(1, 0.6), (2, 0.7), (3, 0.75), (4, 0.8)]);
    c.close("DE worked example", data_efficiency(&g, &r, 2).unwrap().value(), 1.5, ARITH);

    let names = ["a", "b", "c"];
    let dominant = vec![
        ("a".to_string(), curve(&[(1, 0.5), (2, 0.6)])),
        ("b".to_string(), curve(&[(1, 0.9), (2, 0.95)])),
        ("c".to_string(), curve(&[(1, 0.4), (2, 0.5)])),
    ];
    c.ok(
        "dominant strategy wins every round",
        (1..=2).all(|k| oracle_select(&dominant, &names, k).unwrap().strategy == "b"),
    );
    let tied = vec![
        ("a".to_string(), curve(&[(1, 0.5)])),
        ("b".to_string(), curve(&[(1, 0.7)])),
        ("c".to_string(), curve(&[(1, 0.7)])),
    ];
    c.ok("tie -> canonical order", oracle_select(&tied, &["c", "b", "a"], 1).unwrap().strategy == "c");
    let best = oracle_select(&tied, &names, 1).unwrap().value;
    c.ok("oracle >= every base strategy", tied.iter().all(|(_, cv)| best >= cv.at(1).unwrap()));
    c.ok("pareto single point", pareto_frontier(&[(0.4, 0.2)]) == [0]);
    c.ok("pareto duplicates", pareto_frontier(&[(0.5, 0.5), (0.5, 0.5), (0.4, 0.1)]) == [0, 1]);
}

fn harness_examples(c: &mut Checks) {
    let base = spec(&[(200, 0.4, 0.0), (150, 0.8, 1.0), (120, 0.5, -1.0)], 3, 2, 30, 3);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&experiment(a.path(), base.clone(), &["uniform_margin"], &[4])).unwrap();
    let written = files(a.path());
    let names: Vec<String> = written.keys().map(|p| p.to_string_lossy().into_owned()).collect();
    c.ok(
        "1 x 1 x R=2 -> one record and a summary",
        names == ["manifest.json", "records/all/uniform_margin__seed4.csv", "summary.json"],
    );
    run_experiment(&experiment(b.path(), base.clone(), &["uniform_margin"], &[4])).unwrap();
    c.ok("rerun -> byte-identical files", written == files(b.path()));

    let same = spec(&[(700, 0.5, 0.0), (700, 0.5, 0.0), (700, 0.5, 0.0)], 3, 2, 300, 3);
    let mut cfg = experiment(a.path(), same, &["random"], &[0]);
    cfg.transfer_per_domain = 200;
    let t = run_transfer(&cfg).unwrap();
    let flat = t.mean.iter().all(|row| {
        let (lo, hi) = row.iter().fold((1.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo < 0.08
    });
    c.ok("identical domains -> near-constant transfer rows", flat);
    let mut one = experiment(a.path(), base, &["random"], &[0]);
    one.domain_subset = Some(vec![0]);
    let t = run_transfer(&one).unwrap();
    c.ok("N=1 -> 1x1 transfer matrix", t.mean.len() == 1 && t.mean[0].len() == 1);

    let svg = line_chart(
        "t",
        "round",
        "accuracy",
        &[Series {
            name: "random",
            points: vec![(0.0, 0.5), (1.0, 0.6)],
        }],
    );
    c.ok("one run -> single series", svg.matches(r#"class="series""#).count() == 1);
}

fn formula_units() -> Outcome {
    let mut c = Checks::default();
    pool_and_model_examples(&mut c);
    score_and_allocation_examples(&mut c);
    selection_examples(&mut c);
    engine_and_metric_examples(&mut c);
    harness_examples(&mut c);
    c.finish()
}

/// Error rates drawn as counts over a shared validation size, so exact ties
/// in the quotas are common.
fn draw_errors(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..4) {
        0 => (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
        1 => {
            let v = rng.random_range(1..200) as f64;
            (0..n).map(|_| f64::from(rng.random_range(0..=v as u32)) / v).collect()
        }
        2 => vec![0.0; n],
        _ => {
            let e = rng.random_range(0.0..1.0);
            (0..n).map(|j| if j % 2 == 0 { e } else { e / 2.0 }).collect()
        }
    }
}

fn allocation_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for case in 0..10_000 {
        let n = rng.random_range(1..9);
        let m = rng.random_range(0..300);
        let errors = draw_errors(&mut rng, n);
        let losses: Vec<f64> = match rng.random_range(0..3) {
            0 => (0..n).map(|_| rng.random_range(0.0..5.0)).collect(),
            1 => (0..n).map(|j| (j % 3) as f64 * 2f64.ln()).collect(),
            _ => vec![rng.random_range(0.0..3.0); n],
        };
        let signals = DomainSignals {
            errors: errors.clone(),
            losses: losses.clone(),
        };
        for a in Allocator::ALL {
            let got = a.allocate(m, &signals).map_err(|e| format!("case {case}: {a}: {e}"))?;
            if got.len() != n || got.total() != m {
                return Err(format!("case {case}: {a} gave {:?} for m={m}", got.as_slice()));
            }
        }
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: Vec<f64> = errors.iter().map(|e| e * c).collect();
        if allocate_error_proportional(m, &errors).unwrap() != allocate_error_proportional(m, &scaled).unwrap() {
            return Err(format!("case {case}: scale {c} changed error-proportional on {errors:?}, m={m}"));
        }
        let shift = rng.random_range(-50.0..50.0);
        let shifted: Vec<f64> = losses.iter().map(|l| l + shift).collect();
        if allocate_loss_exponential(m, &losses).unwrap() != allocate_loss_exponential(m, &shifted).unwrap() {
            return Err(format!("case {case}: shift {shift} changed loss-exponential on {losses:?}, m={m}"));
        }
        checked += 1;
    }
    Ok(format!("{checked} inputs, 4 allocators, scale and shift invariance"))
}

#[derive(Default)]
struct Audit {
    labeled: Vec<usize>,
    failure: Option<String>,
}

impl Monitor for Audit {
    fn on_round(&mut self, round: usize, pool: &MultiDomainPool, selected: &[SampleId]) {
        if self.failure.is_some() {
            return;
        }
        if let Err(e) = pool.check_invariants() {
            self.failure = Some(format!("round {round}: {e}"));
        } else if !selected.iter().all(|id| pool.labeled_ids().contains(id)) {
            self.failure = Some(format!("round {round}: selected ids not labeled"));
        } else if let Some(id) = pool
            .unlabeled_ids()
            .iter()
            .find(|id| !matches!(pool.label(**id), Err(Error::LabelAccess(_))))
        {
            self.failure = Some(format!("round {round}: label of unlabeled id {id} was readable"));
        }
        self.labeled.push(pool.labeled_ids().len());
    }
}

fn all_strategies() -> Vec<QueryStrategy> {
    let mut v = vec![QueryStrategy::ThresholdMargin, QueryStrategy::ThresholdGroupMargin];
    v.extend(QueryStrategy::ORACLE_BASE);
    for s in Scorer::ALL {
        v.push(QueryStrategy::Global(s));
        for a in Allocator::ALL {
            v.push(QueryStrategy::TwoStep { allocator: a, scorer: s });
        }
    }
    v
}

fn engine_fuzz() -> Outcome {
    // Interface level: a candidate is exactly (id, domain, features).
    let features = [0.0];
    let Candidate { id: _, domain: _, features: _ } = Candidate {
        id: 0,
        domain: 0,
        features: &features,
    };
    let strategies = all_strategies();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut rounds = 0;
    for case in 0..100 {
        let n = rng.random_range(1..5);
        let domains: Vec<(usize, f64, f64)> = (0..n)
            .map(|_| (rng.random_range(60..200), rng.random_range(0.1..1.5), rng.random_range(-2.0..2.0)))
            .collect();
        let classes = rng.random_range(2..5);
        let dim = rng.random_range(2..6);
        let pool = generate_synthetic(&spec(&domains, classes, dim, rng.random_range(3..15), case)).unwrap();
        let m0 = rng.random_range(1..20);
        let m = rng.random_range(1..15);
        let r = rng.random_range(1..6).min((pool.unlabeled_ids().len() - m0) / m);
        let cfg = RunConfig {
            seed_size: m0,
            round_budget: m,
            rounds: r,
            strategy: *strategies.choose(&mut rng).unwrap(),
            threshold_mode: if rng.random_bool(0.5) {
                ThresholdMode::Reference
            } else {
                ThresholdMode::Streaming
            },
            learner: Hyperparams {
                epochs: 8,
                ..Hyperparams::default()
            },
            seed: rng.random(),
        };
        let mut audit = Audit::default();
        run_with_monitor(&pool, &cfg, &mut audit).map_err(|e| format!("case {case}: {e}"))?;
        if let Some(f) = audit.failure {
            return Err(format!("case {case} ({}): {f}", cfg.strategy));
        }
        let want: Vec<usize> = (0..=r).map(|k| m0 + k * m).collect();
        if audit.labeled != want {
            return Err(format!("case {case}: |L| per round {:?}, want {want:?}", audit.labeled));
        }
        rounds += r + 1;
    }
    Ok(format!("100 configs, {rounds} audited rounds"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let k = rng.random_range(2..6);
        let d = rng.random_range(1..6);
        let w: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = rng.random_range(0..k);
        let l2 = 1e-2;
        let model = Classifier::from_parts(k, d, w.clone(), b.clone()).unwrap();
        let (_, grad) = model.loss_and_gradient(&x, y, l2).map_err(|e| e.to_string())?;
        let objective = |w: &[f64], b: &[f64]| {
            let m = Classifier::from_parts(k, d, w.to_vec(), b.to_vec()).unwrap();
            m.loss(&x, y).unwrap() + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
        };
        let h = 1e-5;
        let mut analytic = grad.weights.clone();
        analytic.extend(&grad.bias);
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..k * d + k {
            let (mut wp, mut wm, mut bp, mut bm) = (w.clone(), w.clone(), b.clone(), b.clone());
            if i < k * d {
                wp[i] += h;
                wm[i] -= h;
            } else {
                bp[i - k * d] += h;
                bm[i - k * d] -= h;
            }
            numeric.push((objective(&wp, &bp) - objective(&wm, &bm)) / (2.0 * h));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        worst = worst.max(diff / scale.max(1e-12));
    }
    if worst < 1e-5 {
        Ok(format!("max relative error {worst:.2e} over 10 triples"))
    } else {
        Err(format!("max relative error {worst:.2e}"))
    }
}

fn threshold_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for draw in 0..1000 {
        let n = rng.random_range(1..200);
        let k = rng.random_range(0..=n);
        let distinct: Vec<f64> = (0..n).map(|_| -rng.random_range(0.0..1.0)).collect();
        let t = threshold_from_scores(&distinct, k).map_err(|e| e.to_string())?;
        let above = distinct.iter().filter(|&&s| s > t).count();
        if above != k {
            return Err(format!("draw {draw}: distinct scores, {above} exceed t, k = {k}"));
        }
        let tied: Vec<f64> = (0..n).map(|_| -f64::from(rng.random_range(0..5u8)) / 4.0).collect();
        let t = threshold_from_scores(&tied, k).map_err(|e| e.to_string())?;
        let above = tied.iter().filter(|&&s| s > t).count();
        if above > k {
            return Err(format!("draw {draw}: tied scores, {above} exceed t, k = {k}"));
        }
    }
    Ok("1000 distinct and 1000 tied draws".into())
}

const DE_ROUNDS: usize = 40;

fn de_self_consistency() -> Outcome {
    let pool = generate_synthetic(&spec(&[(3000, 0.3, 0.0), (3000, 0.39, 0.8)], 5, 200, 1000, 77)).unwrap();
    let cfg = |seed| RunConfig {
        seed_size: 20,
        round_budget: 20,
        rounds: DE_ROUNDS,
        strategy: QueryStrategy::Random,
        threshold_mode: ThresholdMode::Reference,
        learner: Hyperparams::default(),
        seed,
    };
    let runs: Vec<_> = (0..40).map(|s| run(&pool, &cfg(s))).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for metric in Metric::ALL {
        for r in &runs {
            let c = r.curve(metric);
            if let Some(k) = (1..=DE_ROUNDS).find(|&k| data_efficiency(&c, &c, k).unwrap() != DataEfficiency::Exact(1.0)) {
                return Err(format!("{metric}: self DE at round {k} is not 1"));
            }
        }
        let a: Vec<LearningCurve> = runs.iter().step_by(2).map(|r| r.curve(metric)).collect();
        let b: Vec<LearningCurve> = runs.iter().skip(1).step_by(2).map(|r| r.curve(metric)).collect();
        let mean_a = LearningCurve::average(&a).unwrap();
        let mean_b = LearningCurve::average(&b).unwrap();
        let de = data_efficiency(&mean_a, &mean_b, DE_ROUNDS).unwrap().value();
        let per_pair: f64 =
            a.iter().zip(&b).map(|(x, y)| data_efficiency(x, y, DE_ROUNDS).unwrap().value()).sum::<f64>() / 20.0;
        notes.push(format!("{metric} {de:.3} (single-run pairs {per_pair:.3})"));
        if !(0.9..=1.1).contains(&de) {
            return Err(format!("paired DE out of [0.9, 1.1]: {}", notes.join(", ")));
        }
    }
    Ok(format!("self DE = 1 at every round; paired 20-run DE: {}", notes.join(", ")))
}

const MARGIN_STRATEGIES: [&str; 5] = [
    "margin",
    "uniform_margin",
    "error_proportional_margin",
    "loss_exponential_margin",
    "worst_group_margin",
];

/// Final-round (mean, worst) per margin-based strategy for each of 20 seeds.
fn minority_pool_results() -> Result<Vec<[(f64, f64); 5]>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for seed in 0..20u64 {
        let dataset = spec(&[(4000, 0.4, 0.0), (800, 0.3, 1.0), (1400, 0.9, -1.4)], 4, 4, 200, 1000 + seed);
        let root = dir.path().join(format!("seed{seed}"));
        let mut cfg = experiment(&root, dataset, &MARGIN_STRATEGIES, &[seed]);
        cfg.seed_size = 100;
        cfg.round_budget = 20;
        cfg.rounds = 40;
        cfg.learner = Hyperparams::default();
        run_experiment(&cfg).map_err(|e| e.to_string())?;
        let mut row = [(0.0, 0.0); 5];
        for (i, s) in MARGIN_STRATEGIES.iter().enumerate() {
            let rec = read_record(&root.join(format!("records/all/{s}__seed{seed}.csv"))).map_err(|e| e.to_string())?;
            let last = rec.last().ok_or("empty record")?;
            row[i] = (last.mean, last.worst);
        }
        out.push(row);
    }
    Ok(out)
}

fn rate(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

fn worst_group_trend(results: &[[(f64, f64); 5]]) -> Outcome {
    let best_worst = results
        .iter()
        .filter(|r| r[..4].iter().all(|o| r[4].1 > o.1))
        .count();
    let mean_below = results.iter().filter(|r| r[4].0 < r[1].0).count();
    let n = results.len();
    let msg = format!("worst_group_margin best worst-group {best_worst}/{n}, mean-group below uniform_margin {mean_below}/{n}");
    if rate(best_worst, n) >= 0.7 && rate(mean_below, n) >= 0.7 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn uniform_vs_margin(results: &[[(f64, f64); 5]]) -> Outcome {
    let wins = results.iter().filter(|r| r[1].0 >= r[0].0).count();
    let msg = format!("uniform_margin mean-group >= margin in {wins}/{}", results.len());
    if rate(wins, results.len()) >= 0.7 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn transfer_structure() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dataset = spec(&[(600, 0.2, 0.0), (600, 0.2, 0.8), (600, 0.2, 1.6), (600, 0.2, 2.4)], 3, 2, 200, 12);
    let mut cfg = experiment(dir.path(), dataset, &["random"], &(0..20).collect::<Vec<_>>());
    cfg.transfer_per_domain = 200;
    cfg.learner = Hyperparams::default();
    let t = run_transfer(&cfg).map_err(|e| e.to_string())?;
    let r = t.diagonal_max_rate();
    let msg = format!("diagonal is the row maximum in {:.1}% of {} rows", 100.0 * r, 4 * t.per_seed.len());
    if r >= 0.9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Outcome {
    let base = spec(&[(300, 0.4, 0.0), (200, 0.8, 1.0), (150, 0.5, -1.0)], 3, 3, 30, 5);
    let strategies = [
        "random",
        "margin",
        "uniform_margin",
        "error_proportional_margin",
        "loss_exponential_margin",
        "worst_group_margin",
        "threshold_margin",
        "threshold_group_margin",
    ];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut ca = experiment(a.path(), base.clone(), &strategies, &[0, 1, 2]);
    ca.rounds = 4;
    ca.workers = Some(1);
    let mut cb = experiment(b.path(), base, &strategies, &[0, 1, 2]);
    cb.rounds = 4;
    cb.workers = Some(4);
    run_experiment(&ca).map_err(|e| e.to_string())?;
    run_experiment(&cb).map_err(|e| e.to_string())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    if fa.keys().ne(fb.keys()) {
        return Err("different file sets".into());
    }
    if let Some(k) = fa.keys().find(|k| fa[*k] != fb[*k]) {
        return Err(format!("{} differs", k.display()));
    }
    let records = fa.keys().filter(|k| k.starts_with("records")).count();
    Ok(format!("{} files identical ({records} records)", fa.len()))
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit: Duration,
}

fn report(c: &Criterion, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let took = start.elapsed();
    let outcome = match outcome {
        Ok(msg) if took > c.limit => Err(format!("{msg}; took {took:.1?}, limit {:?}", c.limit)),
        other => other,
    };
    let pass = outcome.is_ok();
    let detail = outcome.unwrap_or_else(|e| e);
    println!(
        "[{}] {:>2} {}: {detail} ({took:.1?})",
        if pass { "PASS" } else { "FAIL" },
        c.id,
        c.name
    );
    pass
}

fn criterion(id: &'static str, name: &'static str, secs: u64) -> Criterion {
    Criterion {
        id,
        name,
        limit: Duration::from_secs(secs),
    }
}

fn main() {
    let mut pass = true;
    pass &= report(&criterion("1", "formula unit suite", 10), formula_units);
    pass &= report(&criterion("2", "allocation fuzz", 30), allocation_fuzz);
    pass &= report(&criterion("3", "engine bookkeeping fuzz", 300), engine_fuzz);
    pass &= report(&criterion("4", "gradient check", 10), gradient_check);
    pass &= report(&criterion("5", "threshold calibration", 10), threshold_property);
    pass &= report(&criterion("6", "data efficiency self-consistency", 300), de_self_consistency);

    let start = Instant::now();
    let results = minority_pool_results();
    let shared = start.elapsed();
    let c7 = criterion("7", "worst-group trend", 600);
    let c8 = criterion("8", "uniform vs global margin trend", 600);
    match results {
        Ok(r) => {
            pass &= report(&c7, || {
                if shared > c7.limit {
                    Err(format!("runs took {shared:.1?}"))
                } else {
                    worst_group_trend(&r)
                }
            });
            pass &= report(&c8, || uniform_vs_margin(&r));
        }
        Err(e) => {
            pass &= report(&c7, || Err(e.clone()));
            pass &= report(&c8, || Err(e));
        }
    }
    println!("     (criteria 7 and 8 share {shared:.1?} of runs)");
    pass &= report(&criterion("9", "transfer matrix structure", 300), transfer_structure);
    pass &= report(&criterion("10", "determinism", 300), determinism);
    if !pass {
        std::process::exit(1);
    }
}
