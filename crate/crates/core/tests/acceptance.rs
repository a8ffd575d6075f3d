//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process exits nonzero if
//! any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use klda::classify::{IncrementalClassifier, KldaEnsembleLearner, KldaLearner, LdaLearner, Ridge};
use klda::featstore::{decode_features, encode_features, Dtype};
use klda::harness::{
    accuracy, run_cil, synth_gaussians, synth_rings, GaussianSpec, Method, MethodConfig, RingSpec,
    TaskStream,
};
use klda::rng::SeededStream;
use klda::{ClassId, FeatureBatch, GaussianAccumulator, RffConfig, RffProjector};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use statrs::distribution::{ContinuousCDF, Normal};

use common::{gaussian_matrix, max_entry_rel, pooled_covariance, unit_vector};

// Tolerances and budgets, one block per criterion.
const C1_MAX_ERR: f64 = 0.05;
const C1_MEAN_ERR: f64 = 0.012;
const C1_BUDGET: Duration = Duration::from_secs(10);

const C2_REL_TOL: f64 = 1e-10;
const C2_BUDGET: Duration = Duration::from_secs(5);

const C3_GAP: f64 = 0.01;
const C3_BUDGET: Duration = Duration::from_secs(5);

const C4_LDA_MAX: f64 = 0.60;
const C4_KLDA_MIN: f64 = 0.95;
const C4_ORACLE_MIN: f64 = 0.98;
const C4_BUDGET: Duration = Duration::from_secs(30);

const C5_SUM_TOL: f64 = 1e-12;

const C8_BUDGET: Duration = Duration::from_secs(180);

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

/// Random features approximate the RBF kernel on unit-norm pairs.
fn kernel_fidelity() -> Outcome {
    let started = Instant::now();
    let (d, big_d, sigma, pairs) = (16, 5000, 1.0, 1000);
    let mut rng = SeededStream::new(101);
    let mut rows = Array2::zeros((2 * pairs, d));
    for i in 0..2 * pairs {
        rows.row_mut(i).assign(&unit_vector(&mut rng, d));
    }
    let batch = FeatureBatch::new(rows.clone(), vec![0; 2 * pairs]).unwrap();
    let proj = RffProjector::build(RffConfig::new(d, big_d, sigma, 7)).unwrap();
    let z = proj.transform(&batch).unwrap();
    let (mut max_err, mut sum_err) = (0.0f64, 0.0);
    for p in 0..pairs {
        let (x, y) = (rows.row(2 * p), rows.row(2 * p + 1));
        let diff = &x - &y;
        let exact = (-diff.dot(&diff) / (2.0 * sigma * sigma)).exp();
        let approx = z.row(2 * p).dot(&z.row(2 * p + 1));
        let err = (approx - exact).abs();
        max_err = max_err.max(err);
        sum_err += err;
    }
    let mean_err = sum_err / pairs as f64;
    let elapsed = started.elapsed();
    check(
        max_err <= C1_MAX_ERR && mean_err <= C1_MEAN_ERR && elapsed < C1_BUDGET,
        format!(
            "max err {max_err:.4} (<= {C1_MAX_ERR}), mean err {mean_err:.5} (<= {C1_MEAN_ERR}), {}",
            secs(elapsed)
        ),
    )
}

/// Incremental covariance equals the pooled definition and is order-free.
fn incremental_equivalence() -> Outcome {
    let started = Instant::now();
    let (num_classes, per_class, d, big_d) = (10, 100, 6, 64);
    let mut rng = SeededStream::new(202);
    let proj = RffProjector::build(RffConfig::new(d, big_d, 1.0, 3)).unwrap();
    let mut kernelized: BTreeMap<ClassId, FeatureBatch> = BTreeMap::new();
    for c in 0..num_classes as ClassId {
        let offset = Array1::from_shape_simple_fn(d, || rng.standard_normal());
        let raw = gaussian_matrix(&mut rng, per_class, d, 0.7) + &offset;
        let raw = FeatureBatch::single_class(raw, c).unwrap();
        kernelized.insert(c, proj.transform(&raw).unwrap());
    }
    let oracle = pooled_covariance(
        &kernelized
            .iter()
            .map(|(&c, b)| (c, b.values().to_owned()))
            .collect(),
    );

    let accumulate = |order: &[ClassId]| {
        let mut acc = GaussianAccumulator::new(big_d).unwrap();
        for c in order {
            acc.update_class(&kernelized[c], *c).unwrap();
        }
        acc
    };
    let natural: Vec<ClassId> = (0..num_classes as ClassId).collect();
    let reference = accumulate(&natural);
    let vs_oracle = max_entry_rel(reference.covariance(), &oracle);

    let mut vs_order = 0.0f64;
    for seed in 0..5 {
        let mut order = natural.clone();
        SeededStream::new(seed).shuffle(&mut order);
        let other = accumulate(&order);
        vs_order = vs_order.max(max_entry_rel(other.covariance(), reference.covariance()));
        for (c, mean) in reference.means() {
            let m = &other.means()[c];
            let rel = mean
                .iter()
                .zip(m)
                .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() / a.abs() })
                .fold(0.0, f64::max);
            vs_order = vs_order.max(rel);
        }
        assert_eq!(other.total_count(), reference.total_count());
    }
    let elapsed = started.elapsed();
    check(
        vs_oracle <= C2_REL_TOL && vs_order <= C2_REL_TOL && elapsed < C2_BUDGET,
        format!(
            "vs direct oracle {vs_oracle:.2e}, across orders {vs_order:.2e} (<= {C2_REL_TOL:e}), {}",
            secs(elapsed)
        ),
    )
}

/// LDA on two shared-covariance Gaussians reaches the Bayes accuracy.
fn bayes_recovery() -> Outcome {
    let started = Instant::now();
    let separation = 4.0;
    let data = synth_gaussians(&GaussianSpec {
        num_classes: 2,
        dim: 2,
        separation,
        noise: 1.0,
        train_per_class: 2000,
        test_per_class: 5000,
        seed: 303,
    })
    .unwrap();
    let mut lda = LdaLearner::new(2, Ridge::Absolute(0.0)).unwrap();
    for (c, b) in data.train_by_class() {
        lda.learn_class(c, &b).unwrap();
    }
    let acc = accuracy(&lda.predict(&data.test).unwrap(), data.test.labels());
    let bayes = Normal::new(0.0, 1.0).unwrap().cdf(separation / 2.0);
    let elapsed = started.elapsed();
    check(
        (acc - bayes).abs() <= C3_GAP && elapsed < C3_BUDGET,
        format!(
            "LDA {acc:.4} vs Bayes {bayes:.4} on {} points (gap <= {C3_GAP}), {}",
            data.test.nrows(),
            secs(elapsed)
        ),
    )
}

/// Kernel ridge with the exact RBF Gram matrix on the training set.
fn exact_kernel_oracle(train: &FeatureBatch, test: &FeatureBatch, sigma: f64) -> f64 {
    let gram = |a: &FeatureBatch, b: &FeatureBatch| {
        DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
            let diff = &a.row(i) - &b.row(j);
            (-diff.dot(&diff) / (2.0 * sigma * sigma)).exp()
        })
    };
    let n = train.nrows();
    let k = gram(train, train) + DMatrix::identity(n, n) * 1e-3;
    let chol = k.cholesky().expect("regularized Gram is positive definite");
    let classes: Vec<ClassId> = train.split_by_class().keys().copied().collect();
    let cross = gram(test, train);
    let mut scores = DMatrix::zeros(test.nrows(), classes.len());
    for (j, &c) in classes.iter().enumerate() {
        let y = DVector::from_iterator(n, train.labels().iter().map(|&l| f64::from(l == c)));
        let alpha = chol.solve(&y);
        scores.set_column(j, &(&cross * alpha));
    }
    let predicted: Vec<ClassId> = (0..test.nrows())
        .map(|i| {
            let row = scores.row(i);
            let best = (0..classes.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            classes[best]
        })
        .collect();
    accuracy(&predicted, test.labels())
}

/// Rings defeat linear LDA, KLDA separates them, and an exact kernel method
/// confirms the task is kernel-separable.
fn nonlinearity_gain() -> Outcome {
    let started = Instant::now();
    let data = synth_rings(&RingSpec {
        seed: 404,
        ..RingSpec::default()
    })
    .unwrap();
    let stream = TaskStream::from_batches("rings", &data.train, data.test.clone(), 2, 0).unwrap();
    let lda = run_cil(&stream, &MethodConfig::new(Method::Lda)).unwrap();
    let klda = run_cil(
        &stream,
        &MethodConfig::new(Method::Klda)
            .with_rff(1024, 1.0)
            .with_seed(0),
    )
    .unwrap();
    let lda_acc = lda.final_accuracy.unwrap();
    let klda_acc = klda.final_accuracy.unwrap();
    let oracle = exact_kernel_oracle(&data.train, &data.test, 1.0);
    let elapsed = started.elapsed();
    check(
        lda_acc <= C4_LDA_MAX
            && klda_acc >= C4_KLDA_MIN
            && oracle >= C4_ORACLE_MIN
            && elapsed < C4_BUDGET,
        format!(
            "LDA {lda_acc:.4} (<= {C4_LDA_MAX}), KLDA {klda_acc:.4} (>= {C4_KLDA_MIN}), \
             exact kernel {oracle:.4} (>= {C4_ORACLE_MIN}), {}",
            secs(elapsed)
        ),
    )
}

/// A one-member ensemble is single-model KLDA; averaged rows sum to one.
fn ensemble_degeneracy() -> Outcome {
    let data = synth_rings(&RingSpec {
        seed: 505,
        ..RingSpec::default()
    })
    .unwrap();
    let config = RffConfig::new(2, 512, 1.0, 11);
    let mut single = KldaLearner::new(config, Ridge::default(), false).unwrap();
    let mut one = KldaEnsembleLearner::new(config, 1, Ridge::default(), false).unwrap();
    let mut five = KldaEnsembleLearner::new(config, 5, Ridge::default(), false).unwrap();
    for (c, b) in data.train_by_class() {
        single.learn_class(c, &b).unwrap();
        one.learn_class(c, &b).unwrap();
        five.learn_class(c, &b).unwrap();
    }
    let a = single.predict(&data.test).unwrap();
    let b = one.predict(&data.test).unwrap();
    let mismatches = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    let mut worst = 0.0f64;
    for model in [one.export().unwrap(), five.export().unwrap()] {
        let probs = model.probabilities(&data.test).unwrap();
        for s in probs.sum_axis(Axis(1)) {
            worst = worst.max((s - 1.0).abs());
        }
    }
    check(
        a.len() == 1000 && mismatches == 0 && worst <= C5_SUM_TOL,
        format!(
            "{mismatches} mismatches over {} points, max |row sum - 1| {worst:.1e} (<= {C5_SUM_TOL:e})",
            a.len()
        ),
    )
}

/// Prototype methods do not depend on how classes are grouped into tasks.
fn task_count_invariance() -> Outcome {
    let data = synth_gaussians(&GaussianSpec {
        num_classes: 12,
        dim: 8,
        separation: 2.5,
        noise: 1.0,
        train_per_class: 60,
        test_per_class: 40,
        seed: 606,
    })
    .unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for method in [Method::Ncm, Method::Lda, Method::Klda] {
        let config = MethodConfig::new(method).with_rff(256, 4.0).with_seed(5);
        let mut reference: Option<(Vec<ClassId>, f64)> = None;
        let mut same = true;
        for tasks in [1, 3, 6, 12] {
            let stream =
                TaskStream::from_batches("gauss12", &data.train, data.test.clone(), tasks, 9)
                    .unwrap();
            let report = run_cil(&stream, &config).unwrap();
            same &= report.complete && report.trace.len() == tasks;
            let got = (report.predictions, report.final_accuracy.unwrap());
            match &reference {
                None => reference = Some(got),
                Some(r) => same &= *r == got,
            }
        }
        pass &= same;
        let acc = reference.map_or(f64::NAN, |r| r.1);
        details.push(format!(
            "{method} {acc:.4} {}",
            if same { "identical" } else { "DIFFERS" }
        ));
    }
    check(pass, format!("T in {{1,3,6,12}}: {}", details.join(", ")))
}

/// Feature files round-trip bit-exactly and reject every one-byte corruption.
fn format_robustness() -> Outcome {
    let mut rng = SeededStream::new(707);
    let values = gaussian_matrix(&mut rng, 3, 4, 1.0).mapv(|v| v as f32 as f64);
    let batch = FeatureBatch::new(values, vec![0, 5, 2]).unwrap();
    let mut round_trip = true;
    for dtype in [Dtype::F32, Dtype::F64] {
        let bytes = encode_features(&batch, dtype).unwrap();
        let back = decode_features(&bytes).unwrap();
        round_trip &= back.labels() == batch.labels()
            && back
                .values()
                .iter()
                .zip(batch.values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let bytes = encode_features(&batch, Dtype::F32).unwrap();
    let mut undetected = 0usize;
    let mut trials = 0usize;
    for pos in 0..bytes.len() {
        for delta in 1..=255u8 {
            let mut corrupt = bytes.clone();
            corrupt[pos] ^= delta;
            trials += 1;
            if decode_features(&corrupt).is_ok() {
                undetected += 1;
            }
        }
    }
    check(
        round_trip && undetected == 0,
        format!(
            "round trip {}, {undetected} of {trials} single-byte corruptions undetected ({} byte file)",
            if round_trip { "bit-exact" } else { "MISMATCH" },
            bytes.len()
        ),
    )
}

/// Full-size training: transform, statistics and one factorization.
fn scale_check() -> Outcome {
    let (n, d, big_d, num_classes) = (10_000, 768, 5000, 150);
    let mut rng = SeededStream::new(808);
    let values = gaussian_matrix(&mut rng, n, d, 1.0);
    let labels: Vec<ClassId> = (0..n).map(|i| (i % num_classes) as ClassId).collect();
    let data = FeatureBatch::new(values, labels).unwrap();
    let classes = data.split_by_class();
    drop(data);

    let started = Instant::now();
    let mut learner =
        KldaLearner::new(RffConfig::new(d, big_d, 0.05, 0), Ridge::default(), false).unwrap();
    for (c, b) in &classes {
        learner.learn_class(*c, b).unwrap();
    }
    let solved = learner.model().map(|m| m.num_classes()).unwrap_or(0);
    let elapsed = started.elapsed();
    check(
        solved == num_classes && elapsed < C8_BUDGET,
        format!(
            "{n}x{d} -> D={big_d}, {solved} classes solved in {} (< {}s) on {} thread(s)",
            secs(elapsed),
            C8_BUDGET.as_secs(),
            rayon::current_num_threads()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("kernel approximation fidelity", kernel_fidelity),
        ("incremental vs batch covariance", incremental_equivalence),
        ("Bayes recovery", bayes_recovery),
        ("nonlinearity gain", nonlinearity_gain),
        ("ensemble degeneracy", ensemble_degeneracy),
        ("task-count invariance", task_count_invariance),
        ("format robustness", format_robustness),
        ("scale check", scale_check),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict}: {name}: {}", outcome.detail);
        if !outcome.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}
