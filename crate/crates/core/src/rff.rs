//! Random Fourier feature approximation of the RBF kernel.
//!
//! A projector holds a `d x D` frequency matrix with i.i.d. `N(0, 1/sigma^2)`
//! entries and `D` phases drawn uniformly from `[0, 2 pi)`. It maps a raw
//! feature row `x` to
//!
//! ```text
//! z(x)_j = sqrt(2 / D) * cos(x . omega_j + beta_j)
//! ```
//!
//! so that `z(x) . z(y)` approximates `exp(-|x - y|^2 / (2 sigma^2))`.
//!
//! Sampling order: the frequency matrix is filled row-major first, then the
//! phase vector, all from one [`SeededStream`] seeded with `config.seed`.

use std::path::Path;

use ndarray::parallel::prelude::*;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewMut2, Axis};

use crate::batch::FeatureBatch;
use crate::codec::{self, Decoder, Encoder};
use crate::error::{KldaError, Result};
use crate::rng::SeededStream;

/// Bandwidth used when none is given.
pub const DEFAULT_SIGMA: f64 = 1e-3;
/// Number of random features used when none is given.
pub const DEFAULT_TRANSFORM_DIM: usize = 5000;

const MAGIC: &[u8; 4] = b"KRFF";
const VERSION: u32 = 1;

// Row tile and column tile for the projection. Each output entry is still a
// single left-to-right sum over the input coordinates.
const ROW_TILE: usize = 16;
const COL_TILE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RffConfig {
    pub input_dim: usize,
    pub transform_dim: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl RffConfig {
    pub fn new(input_dim: usize, transform_dim: usize, sigma: f64, seed: u64) -> Self {
        Self {
            input_dim,
            transform_dim,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(KldaError::Config(
                "input dimension must be at least 1".into(),
            ));
        }
        if self.transform_dim == 0 {
            return Err(KldaError::Config(
                "transform dimension must be at least 1".into(),
            ));
        }
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(KldaError::Config(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Frozen random feature map. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct RffProjector {
    config: RffConfig,
    omega: Array2<f64>,
    beta: Array1<f64>,
    scale: f64,
}

impl RffProjector {
    pub fn build(config: RffConfig) -> Result<Self> {
        config.validate()?;
        let mut stream = SeededStream::new(config.seed);
        let std = 1.0 / config.sigma;
        let omega = Array2::from_shape_simple_fn((config.input_dim, config.transform_dim), || {
            std * stream.standard_normal()
        });
        let beta = Array1::from_shape_simple_fn(config.transform_dim, || stream.phase());
        Ok(Self::from_parts(config, omega, beta))
    }

    fn from_parts(config: RffConfig, omega: Array2<f64>, beta: Array1<f64>) -> Self {
        let scale = (2.0 / config.transform_dim as f64).sqrt();
        Self {
            config,
            omega,
            beta,
            scale,
        }
    }

    pub fn config(&self) -> &RffConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn transform_dim(&self) -> usize {
        self.config.transform_dim
    }

    pub fn omega(&self) -> &Array2<f64> {
        &self.omega
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.beta
    }

    /// The constant `sqrt(2 / D)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Maps every row of `features` into the random feature space. Labels are
    /// carried over unchanged.
    pub fn transform(&self, features: &FeatureBatch) -> Result<FeatureBatch> {
        if features.width() != self.input_dim() {
            return Err(KldaError::Dimension {
                expected: self.input_dim(),
                found: features.width(),
            });
        }
        let x = features.values();
        let mut out = Array2::<f64>::zeros((x.nrows(), self.transform_dim()));
        out.axis_chunks_iter_mut(Axis(0), ROW_TILE)
            .into_par_iter()
            .enumerate()
            .for_each(|(t, tile)| {
                let r0 = t * ROW_TILE;
                let rows = x.slice(s![r0..r0 + tile.nrows(), ..]);
                self.project_tile(rows, tile);
            });
        Ok(FeatureBatch::from_parts_unchecked(
            out,
            features.labels().to_vec(),
        ))
    }

    /// As [`transform`](Self::transform), narrowed to 32-bit floats for storage.
    pub fn transform_f32(&self, features: &FeatureBatch) -> Result<Array2<f32>> {
        Ok(self.transform(features)?.values().mapv(|v| v as f32))
    }

    /// Transforms a single raw row.
    pub fn transform_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(KldaError::Dimension {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut out = Array2::<f64>::zeros((1, self.transform_dim()));
        self.project_tile(x.insert_axis(Axis(0)), out.view_mut());
        Ok(out.row(0).to_owned())
    }

    fn project_tile(&self, rows: ndarray::ArrayView2<'_, f64>, mut out: ArrayViewMut2<'_, f64>) {
        let d = self.input_dim();
        let width = self.transform_dim();
        let mut c0 = 0;
        while c0 < width {
            let c1 = (c0 + COL_TILE).min(width);
            for (r, x) in rows.outer_iter().enumerate() {
                let mut acc = out.slice_mut(s![r, c0..c1]);
                for k in 0..d {
                    let xk = x[k];
                    let w = self.omega.slice(s![k, c0..c1]);
                    acc.zip_mut_with(&w, |a, &wk| *a += xk * wk);
                }
                let phase = self.beta.slice(s![c0..c1]);
                acc.zip_mut_with(&phase, |a, &b| *a = self.scale * (*a + b).cos());
            }
            c0 = c1;
        }
    }

    /// Encodes as `KRFF`: magic, version u32, d u64, D u64, sigma f64,
    /// seed u64, omega row-major f64, beta f64. Little-endian throughout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::with_capacity(40 + 8 * (self.omega.len() + self.beta.len()));
        self.encode_into(&mut e);
        e.finish()
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.magic(MAGIC);
        e.u32(VERSION);
        e.u64(self.input_dim() as u64);
        e.u64(self.transform_dim() as u64);
        e.f64(self.config.sigma);
        e.u64(self.config.seed);
        e.f64s(self.omega.iter());
        e.f64s(self.beta.iter());
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        let p = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(p)
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self> {
        d.expect_magic(MAGIC)?;
        d.expect_version(VERSION)?;
        let input_dim = to_usize(d.u64()?)?;
        let transform_dim = to_usize(d.u64()?)?;
        let sigma = d.f64()?;
        let seed = d.u64()?;
        let config = RffConfig {
            input_dim,
            transform_dim,
            sigma,
            seed,
        };
        config
            .validate()
            .map_err(|e| KldaError::CorruptState(format!("projector header: {e}")))?;
        let n = input_dim
            .checked_mul(transform_dim)
            .ok_or_else(codec::overflow)?;
        let needed = n
            .checked_add(transform_dim)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(codec::overflow)?;
        if d.remaining() < needed {
            return Err(KldaError::Truncated {
                expected: (d.position() + needed) as u64,
                found: (d.position() + d.remaining()) as u64,
            });
        }
        let omega = Array2::from_shape_vec((input_dim, transform_dim), d.f64_vec(n)?)
            .expect("shape checked");
        let beta = Array1::from(d.f64_vec(transform_dim)?);
        if omega.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
            return Err(KldaError::CorruptState("non-finite projector entry".into()));
        }
        Ok(Self::from_parts(config, omega, beta))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }

    /// Number of fixed parameters held by the map: `D * (d + 1)`.
    pub fn parameter_count(&self) -> usize {
        self.transform_dim() * (self.input_dim() + 1)
    }
}

pub(crate) fn to_usize(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| codec::overflow())
}

/// `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn exact_rbf_kernel(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(KldaError::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(KldaError::Config(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let sq: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-sq / (2.0 * sigma * sigma)).exp())
}
