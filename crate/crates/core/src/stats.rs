//! Incremental class means and shared within-class covariance.
//!
//! Each class arrives exactly once with all of its samples. On arrival the
//! class mean is computed from the batch and the shared covariance is
//! rescaled and extended:
//!
//! ```text
//! N_prev  = N_total
//! N_total = N_total + n_m
//! Sigma   = (N_prev / N_total) Sigma + (1 / N_total) sum_i (z_i - mu_m)(z_i - mu_m)^T
//! ```
//!
//! which keeps `Sigma` equal to the pooled within-class scatter divided by
//! the total number of samples seen.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::batch::{ClassId, FeatureBatch};
use crate::codec::{self, Decoder, Encoder, CRC_LEN};
use crate::error::{KldaError, Result};
use crate::linalg;
use crate::rff::to_usize;

const MAGIC: &[u8; 4] = b"KACC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAccumulator {
    dim: usize,
    class_means: BTreeMap<ClassId, Array1<f64>>,
    class_counts: BTreeMap<ClassId, u64>,
    covariance: Array2<f64>,
    total_count: u64,
}

/// Owned copy of the accumulated statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub means: BTreeMap<ClassId, Array1<f64>>,
    pub covariance: Array2<f64>,
    pub counts: BTreeMap<ClassId, u64>,
}

impl GaussianAccumulator {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(KldaError::Config(
                "accumulator dimension must be at least 1".into(),
            ));
        }
        Ok(Self {
            dim,
            class_means: BTreeMap::new(),
            class_counts: BTreeMap::new(),
            covariance: Array2::zeros((dim, dim)),
            total_count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn num_classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn contains(&self, class_id: ClassId) -> bool {
        self.class_means.contains_key(&class_id)
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.class_means.keys().copied()
    }

    pub fn means(&self) -> &BTreeMap<ClassId, Array1<f64>> {
        &self.class_means
    }

    pub fn counts(&self) -> &BTreeMap<ClassId, u64> {
        &self.class_counts
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    /// Folds in every sample of a new class.
    pub fn update_class(&mut self, batch: &FeatureBatch, class_id: ClassId) -> Result<()> {
        if batch.is_empty() {
            return Err(KldaError::Input(format!(
                "empty batch for class {class_id}"
            )));
        }
        if batch.width() != self.dim {
            return Err(KldaError::Dimension {
                expected: self.dim,
                found: batch.width(),
            });
        }
        if let Some(other) = batch.labels().iter().find(|&&l| l != class_id) {
            return Err(KldaError::Protocol(format!(
                "batch for class {class_id} contains a row labelled {other}"
            )));
        }
        if self.contains(class_id) {
            return Err(KldaError::DuplicateClass(class_id));
        }

        let n = batch.nrows() as u64;
        let prev = self.total_count;
        let total = prev
            .checked_add(n)
            .ok_or_else(|| KldaError::Input("sample count overflow".into()))?;

        let z = batch.values();
        let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = &z - &mean.view().insert_axis(Axis(0));

        let keep = prev as f64 / total as f64;
        linalg::gram_update(
            &mut self.covariance,
            centered.view(),
            1.0 / total as f64,
            keep,
        );

        self.class_means.insert(class_id, mean);
        self.class_counts.insert(class_id, n);
        self.total_count = total;
        Ok(())
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        if self.class_means.is_empty() {
            return Err(KldaError::EmptyAccumulator);
        }
        Ok(Snapshot {
            means: self.class_means.clone(),
            covariance: self.covariance.clone(),
            counts: self.class_counts.clone(),
        })
    }

    /// Encodes as `KACC`: magic, version u32, D u64, N_total u64, class
    /// count u64, then per class (ascending id) id u32, n_m u64, mean f64 x D,
    /// then the covariance row-major f64, then CRC-32 of all preceding bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.class_means.len();
        let mut e = Encoder::with_capacity(
            32 + m * (12 + 8 * self.dim) + 8 * self.dim * self.dim + CRC_LEN,
        );
        e.magic(MAGIC);
        e.u32(VERSION);
        e.u64(self.dim as u64);
        e.u64(self.total_count);
        e.u64(m as u64);
        for (id, mean) in &self.class_means {
            e.u32(*id);
            e.u64(self.class_counts[id]);
            e.f64s(mean.iter());
        }
        e.f64s(self.covariance.iter());
        e.finish_with_crc()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        codec::check_crc(bytes).map_err(corrupt)?;
        let body = &bytes[..bytes.len() - CRC_LEN];
        Self::decode_body(body).map_err(corrupt)
    }

    fn decode_body(body: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(body);
        d.expect_magic(MAGIC)?;
        d.expect_version(VERSION)?;
        let dim = to_usize(d.u64()?)?;
        let total_count = d.u64()?;
        let m = to_usize(d.u64()?)?;
        if dim == 0 {
            return Err(KldaError::CorruptState("zero dimension".into()));
        }
        let per_class = dim
            .checked_mul(8)
            .and_then(|v| v.checked_add(12))
            .ok_or_else(codec::overflow)?;
        let expected = m
            .checked_mul(per_class)
            .and_then(|v| v.checked_add(dim.checked_mul(dim)?.checked_mul(8)?))
            .ok_or_else(codec::overflow)?;
        if d.remaining() != expected {
            return Err(KldaError::Truncated {
                expected: (d.position() + expected) as u64,
                found: body.len() as u64,
            });
        }
        let mut class_means = BTreeMap::new();
        let mut class_counts = BTreeMap::new();
        let mut sum = 0u64;
        for _ in 0..m {
            let id = d.u32()?;
            let n = d.u64()?;
            let mean = Array1::from(d.f64_vec(dim)?);
            if n == 0 || class_means.insert(id, mean).is_some() {
                return Err(KldaError::CorruptState(format!("bad entry for class {id}")));
            }
            class_counts.insert(id, n);
            sum = sum.checked_add(n).ok_or_else(codec::overflow)?;
        }
        if sum != total_count {
            return Err(KldaError::CorruptState(
                "total count differs from sum of class counts".into(),
            ));
        }
        let covariance =
            Array2::from_shape_vec((dim, dim), d.f64_vec(dim * dim)?).expect("shape checked");
        d.finish()?;
        Ok(Self {
            dim,
            class_means,
            class_counts,
            covariance,
            total_count,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }
}

fn corrupt(e: KldaError) -> KldaError {
    match e {
        KldaError::CorruptState(_) => e,
        other => KldaError::CorruptState(other.to_string()),
    }
}
