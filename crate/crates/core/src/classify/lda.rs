use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use super::argmax_first;
use crate::batch::{ClassId, FeatureBatch};
use crate::codec::{self, Decoder, Encoder, CRC_LEN};
use crate::error::{KldaError, Result};
use crate::linalg::Cholesky;
use crate::rff::to_usize;
use crate::stats::GaussianAccumulator;

const MAGIC: &[u8; 4] = b"KMDL";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8;

/// Ridge factor used when none is given, relative to `trace(Sigma) / D`.
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-4;

/// Diagonal loading added to the shared covariance before solving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `lambda = factor * trace(Sigma) / D`, unit-free.
    Relative(f64),
    /// `lambda` used as given.
    Absolute(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(DEFAULT_RELATIVE_RIDGE)
    }
}

impl Ridge {
    pub fn resolve(&self, covariance: &Array2<f64>) -> Result<f64> {
        let (Ridge::Relative(v) | Ridge::Absolute(v)) = *self;
        if !v.is_finite() || v < 0.0 {
            return Err(KldaError::Config(format!(
                "ridge must be non-negative, got {v}"
            )));
        }
        Ok(match self {
            Ridge::Relative(f) => f * covariance.diag().sum() / covariance.nrows() as f64,
            Ridge::Absolute(l) => *l,
        })
    }
}

/// Solved linear discriminant: column `m` of `weights` is `w_m` and
/// `biases[m]` is `b_m` for `class_ids[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminantModel {
    weights: Array2<f64>,
    biases: Array1<f64>,
    class_ids: Vec<ClassId>,
    ridge: f64,
}

/// Solves `(Sigma + lambda I) w_m = mu_m` for every class with one Cholesky
/// factorization and sets `b_m = -mu_m . w_m / 2`.
pub fn solve_lda(acc: &GaussianAccumulator, ridge: Ridge) -> Result<DiscriminantModel> {
    if acc.num_classes() < 2 {
        return Err(KldaError::Protocol(format!(
            "discriminant needs at least 2 classes, have {}",
            acc.num_classes()
        )));
    }
    let dim = acc.dim();
    let lambda = ridge.resolve(acc.covariance())?;
    let mut system = acc.covariance().clone();
    for i in 0..dim {
        system[[i, i]] += lambda;
    }
    let factor = Cholesky::factor(system)?;

    let class_ids: Vec<ClassId> = acc.class_ids().collect();
    let mut means = Array2::<f64>::zeros((dim, class_ids.len()));
    for (m, mean) in acc.means().values().enumerate() {
        means.column_mut(m).assign(mean);
    }
    let weights = factor.solve(means.view())?;
    let biases = Array1::from_iter(
        (0..class_ids.len()).map(|m| -0.5 * means.column(m).dot(&weights.column(m))),
    );
    Ok(DiscriminantModel {
        weights,
        biases,
        class_ids,
        ridge: lambda,
    })
}

impl DiscriminantModel {
    pub fn new(
        weights: Array2<f64>,
        biases: Array1<f64>,
        class_ids: Vec<ClassId>,
        ridge: f64,
    ) -> Result<Self> {
        if weights.ncols() != biases.len() || biases.len() != class_ids.len() {
            return Err(KldaError::ModelCorruption(format!(
                "{} weight columns, {} biases, {} class ids",
                weights.ncols(),
                biases.len(),
                class_ids.len()
            )));
        }
        if class_ids.is_empty() {
            return Err(KldaError::ModelCorruption("model has no classes".into()));
        }
        if class_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(KldaError::ModelCorruption(
                "class ids must be strictly ascending".into(),
            ));
        }
        Ok(Self {
            weights,
            biases,
            class_ids,
            ridge,
        })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f64> {
        &self.biases
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    /// Absolute ridge that was added to the covariance diagonal.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn input_width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// `n x M` matrix of `z_i . w_m + b_m`.
    pub fn score(&self, batch: &FeatureBatch) -> Result<Array2<f64>> {
        if batch.width() != self.input_width() {
            return Err(KldaError::Dimension {
                expected: self.input_width(),
                found: batch.width(),
            });
        }
        Ok(batch.values().dot(&self.weights) + self.biases.view().insert_axis(Axis(0)))
    }

    pub fn predict(&self, batch: &FeatureBatch) -> Result<Vec<ClassId>> {
        let scores = self.score(batch)?;
        Ok(scores
            .rows()
            .into_iter()
            .map(|r| self.class_ids[argmax_first(r)])
            .collect())
    }

    fn encoded_len(k: usize, m: usize) -> Option<usize> {
        let body = m
            .checked_mul(4)?
            .checked_add(k.checked_mul(m)?.checked_mul(8)?)?
            .checked_add(m.checked_mul(8)?)?;
        HEADER_LEN.checked_add(body)?.checked_add(CRC_LEN)
    }

    /// Encodes as `KMDL`: magic, version u32, k u64, M u64, lambda f64,
    /// class ids u32 x M, W row-major f64 (k x M), b f64 x M, CRC-32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (k, m) = self.weights.dim();
        let mut e = Encoder::with_capacity(Self::encoded_len(k, m).unwrap_or(0));
        e.magic(MAGIC);
        e.u32(VERSION);
        e.u64(k as u64);
        e.u64(m as u64);
        e.f64(self.ridge);
        for &id in &self.class_ids {
            e.u32(id);
        }
        e.f64s(self.weights.iter());
        e.f64s(self.biases.iter());
        e.finish_with_crc()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        let model = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(model)
    }

    /// Reads one KMDL block from the front of the decoder.
    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self> {
        let rest = d.rest();
        let mut head = Decoder::new(rest);
        head.expect_magic(MAGIC)?;
        head.expect_version(VERSION)?;
        let k = to_usize(head.u64()?)?;
        let m = to_usize(head.u64()?)?;
        let len = Self::encoded_len(k, m).ok_or_else(codec::overflow)?;
        if rest.len() < len {
            return Err(KldaError::Truncated {
                expected: (d.position() + len) as u64,
                found: (d.position() + rest.len()) as u64,
            });
        }
        let block = &rest[..len];
        codec::check_len_and_crc(block, len as u64)?;
        let mut body = Decoder::new(&block[..len - CRC_LEN]);
        body.skip(4 + 4 + 8 + 8)?;
        let ridge = body.f64()?;
        let mut class_ids = Vec::with_capacity(m);
        for _ in 0..m {
            class_ids.push(body.u32()?);
        }
        let weights = Array2::from_shape_vec((k, m), body.f64_vec(k * m)?).expect("shape checked");
        let biases = Array1::from(body.f64_vec(m)?);
        body.finish()?;
        if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) || !ridge.is_finite() {
            return Err(KldaError::ModelCorruption("non-finite model entry".into()));
        }
        d.skip(len)?;
        Self::new(weights, biases, class_ids, ridge)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }
}
