//! Oracles and data helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use klda::rng::SeededStream;
use klda::{ClassId, FeatureBatch};
use ndarray::{Array1, Array2};

/// Shared covariance straight from the definition: pooled within-class
/// scatter divided by the total count. Two passes, naive loops.
pub fn pooled_covariance(classes: &BTreeMap<ClassId, Array2<f64>>) -> Array2<f64> {
    let dim = classes.values().next().expect("at least one class").ncols();
    let mut scatter = Array2::<f64>::zeros((dim, dim));
    let mut total = 0usize;
    for x in classes.values() {
        let n = x.nrows();
        total += n;
        let mut mean = vec![0.0; dim];
        for i in 0..n {
            for j in 0..dim {
                mean[j] += x[[i, j]];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        for i in 0..n {
            for a in 0..dim {
                let ca = x[[i, a]] - mean[a];
                for b in 0..dim {
                    scatter[[a, b]] += ca * (x[[i, b]] - mean[b]);
                }
            }
        }
    }
    scatter / total as f64
}

/// Largest entry-wise relative difference `|a - b| / |b|`.
pub fn max_entry_rel(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b)
        .map(
            |(&x, &y)| {
                if x == y {
                    0.0
                } else {
                    (x - y).abs() / y.abs()
                }
            },
        )
        .fold(0.0, f64::max)
}

pub fn gaussian_matrix(rng: &mut SeededStream, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || std * rng.standard_normal())
}

pub fn unit_vector(rng: &mut SeededStream, dim: usize) -> Array1<f64> {
    let v = Array1::from_shape_simple_fn(dim, || rng.standard_normal());
    let n = v.dot(&v).sqrt();
    v / n
}

/// Random class batches with a per-class offset so the means differ.
pub fn random_classes(
    seed: u64,
    num_classes: usize,
    per_class: usize,
    dim: usize,
) -> BTreeMap<ClassId, FeatureBatch> {
    let mut rng = SeededStream::new(seed);
    (0..num_classes as ClassId)
        .map(|c| {
            let offset = Array1::from_shape_simple_fn(dim, || 2.0 * rng.standard_normal());
            let x = gaussian_matrix(&mut rng, per_class, dim, 1.0) + &offset;
            (c, FeatureBatch::single_class(x, c).unwrap())
        })
        .collect()
}
