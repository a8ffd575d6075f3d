//! Synthetic datasets with known structure.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::batch::{ClassId, FeatureBatch};
use crate::error::{KldaError, Result};
use crate::featstore::{
    write_features, DatasetManifest, Dtype, Provenance, SplitEntry, TEST_SPLIT, TRAIN_SPLIT,
};
use crate::rng::SeededStream;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub name: String,
    pub train: FeatureBatch,
    pub test: FeatureBatch,
}

impl SynthDataset {
    pub fn train_by_class(&self) -> BTreeMap<ClassId, FeatureBatch> {
        self.train.split_by_class()
    }

    pub fn num_classes(&self) -> usize {
        self.train_by_class().len()
    }

    /// Writes `train.kldf`, `test.kldf` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, dtype: Dtype, seed: u64) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir).map_err(|e| KldaError::io(dir, e))?;
        write_features(&self.train, &dir.join("train.kldf"), dtype)?;
        write_features(&self.test, &dir.join("test.kldf"), dtype)?;
        let classes = self
            .train_by_class()
            .keys()
            .map(|&c| (c, format!("{}_{c}", self.name)))
            .collect();
        let splits = [
            (TRAIN_SPLIT, "train.kldf", self.train.nrows()),
            (TEST_SPLIT, "test.kldf", self.test.nrows()),
        ]
        .into_iter()
        .map(|(name, path, rows)| {
            (
                name.to_string(),
                SplitEntry {
                    path: path.into(),
                    rows: rows as u64,
                },
            )
        })
        .collect();
        let provenance = Provenance {
            model: format!("synthetic:{}", self.name),
            pooling: "none".into(),
            seed,
        };
        let manifest = DatasetManifest::new(self.name.clone(), classes, splits, provenance);
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        DatasetManifest::load(&path)
    }
}

/// Isotropic Gaussian classes sharing one covariance `noise^2 I`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub num_classes: usize,
    pub dim: usize,
    /// Distance between class means, in units of `noise`.
    pub separation: f64,
    pub noise: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            num_classes: 2,
            dim: 2,
            separation: 4.0,
            noise: 1.0,
            train_per_class: 500,
            test_per_class: 500,
            seed: 0,
        }
    }
}

/// Class means sit at `separation * noise / sqrt(2)` along mutually
/// orthonormal random directions (random unit directions when there are more
/// classes than dimensions), so every pair of means is `separation * noise`
/// apart in the orthonormal case. Samples add `N(0, noise^2 I)`.
pub fn synth_gaussians(spec: &GaussianSpec) -> Result<SynthDataset> {
    if spec.dim < 1 {
        return Err(KldaError::Config("dimension must be at least 1".into()));
    }
    if spec.num_classes < 1 || spec.train_per_class < 1 || spec.test_per_class < 1 {
        return Err(KldaError::Config(
            "class and sample counts must be positive".into(),
        ));
    }
    if !spec.noise.is_finite()
        || spec.noise <= 0.0
        || !spec.separation.is_finite()
        || spec.separation < 0.0
    {
        return Err(KldaError::Config(
            "noise must be positive and separation non-negative".into(),
        ));
    }
    let mut rng = SeededStream::new(spec.seed);
    let radius = spec.separation * spec.noise / std::f64::consts::SQRT_2;
    let directions = random_directions(&mut rng, spec.num_classes, spec.dim);
    let means: Vec<Array1<f64>> = directions.into_iter().map(|d| d * radius).collect();

    let draw = |per_class: usize, rng: &mut SeededStream| {
        let n = per_class * spec.num_classes;
        let mut values = Array2::zeros((n, spec.dim));
        let mut labels = Vec::with_capacity(n);
        for (c, mean) in means.iter().enumerate() {
            for i in 0..per_class {
                let row = c * per_class + i;
                for k in 0..spec.dim {
                    values[[row, k]] = rng.normal(mean[k], spec.noise);
                }
                labels.push(c as ClassId);
            }
        }
        FeatureBatch::new(values, labels)
    };
    let train = draw(spec.train_per_class, &mut rng)?;
    let test = draw(spec.test_per_class, &mut rng)?;
    Ok(SynthDataset {
        name: "gaussians".into(),
        train,
        test,
    })
}

fn random_directions(rng: &mut SeededStream, count: usize, dim: usize) -> Vec<Array1<f64>> {
    let mut out: Vec<Array1<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = Array1::from_shape_simple_fn(dim, || rng.standard_normal());
        if out.len() < dim {
            for u in &out {
                let proj = v.dot(u);
                v.scaled_add(-proj, u);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            out.push(v / norm);
        }
    }
    out
}

/// Concentric noisy rings in the plane, one class per ring.
#[derive(Debug, Clone, PartialEq)]
pub struct RingSpec {
    pub radii: Vec<f64>,
    pub noise: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for RingSpec {
    fn default() -> Self {
        Self {
            radii: vec![1.0, 3.0],
            noise: 0.1,
            train_per_class: 500,
            test_per_class: 500,
            seed: 0,
        }
    }
}

/// Points `r (cos t, sin t) + N(0, noise^2 I)` with `t` uniform on `[0, 2 pi)`.
pub fn synth_rings(spec: &RingSpec) -> Result<SynthDataset> {
    if spec.radii.is_empty() {
        return Err(KldaError::Config("at least one radius is required".into()));
    }
    if spec.radii[0] <= 0.0 || spec.radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KldaError::Config(format!(
            "radii must be positive and strictly increasing, got {:?}",
            spec.radii
        )));
    }
    if !spec.noise.is_finite()
        || spec.noise < 0.0
        || spec.train_per_class < 1
        || spec.test_per_class < 1
    {
        return Err(KldaError::Config(
            "noise must be non-negative and counts positive".into(),
        ));
    }
    let mut rng = SeededStream::new(spec.seed);
    let draw = |per_class: usize, rng: &mut SeededStream| {
        let n = per_class * spec.radii.len();
        let mut values = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for (c, &r) in spec.radii.iter().enumerate() {
            for i in 0..per_class {
                let row = c * per_class + i;
                let (s, co) = (TAU * rng.uniform()).sin_cos();
                values[[row, 0]] = r * co + spec.noise * rng.standard_normal();
                values[[row, 1]] = r * s + spec.noise * rng.standard_normal();
                labels.push(c as ClassId);
            }
        }
        FeatureBatch::new(values, labels)
    };
    let train = draw(spec.train_per_class, &mut rng)?;
    let test = draw(spec.test_per_class, &mut rng)?;
    Ok(SynthDataset {
        name: "rings".into(),
        train,
        test,
    })
}
