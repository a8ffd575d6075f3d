//! The `KLDF` feature file.
//!
//! ```text
//! offset  size   field
//! 0       4      magic "KLDF"
//! 4       4      version (u32) = 1
//! 8       8      n, row count (u64)
//! 16      4      d, width (u32)
//! 20      4      dtype (u32): 0 = f32, 1 = f64
//! 24      n*d*s  payload, row-major, s = 4 or 8
//! ..      n*4    labels (i32), all >= 0
//! ..      4      CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! All fields little-endian.

use std::path::Path;

use ndarray::Array2;

use crate::batch::{ClassId, FeatureBatch};
use crate::codec::{self, Decoder, Encoder, CRC_LEN};
use crate::error::{KldaError, Result};

const MAGIC: &[u8; 4] = b"KLDF";
const VERSION: u32 = 1;

/// Bytes before the payload.
pub const KLDF_HEADER_LEN: u64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> u64 {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Exact file size for `n` rows of width `d`.
pub fn kldf_file_len(n: u64, d: u64, dtype: Dtype) -> Option<u64> {
    let payload = n.checked_mul(d)?.checked_mul(dtype.size())?;
    let labels = n.checked_mul(4)?;
    KLDF_HEADER_LEN
        .checked_add(payload)?
        .checked_add(labels)?
        .checked_add(CRC_LEN as u64)
}

pub fn encode_features(batch: &FeatureBatch, dtype: Dtype) -> Result<Vec<u8>> {
    let n = batch.nrows() as u64;
    let d = u32::try_from(batch.width())
        .map_err(|_| KldaError::Input(format!("width {} exceeds u32", batch.width())))?;
    if d == 0 {
        return Err(KldaError::Input("feature width must be at least 1".into()));
    }
    let len = kldf_file_len(n, d as u64, dtype)
        .ok_or_else(|| KldaError::Input("batch too large".into()))?;
    let mut e = Encoder::with_capacity(len as usize);
    e.magic(MAGIC);
    e.u32(VERSION);
    e.u64(n);
    e.u32(d);
    e.u32(dtype.code());
    for ((row, col), &v) in batch.values().indexed_iter() {
        match dtype {
            Dtype::F64 => e.f64(v),
            Dtype::F32 => {
                let narrow = v as f32;
                if !narrow.is_finite() {
                    return Err(KldaError::NonFinite { row, col });
                }
                e.f32(narrow);
            }
        }
    }
    for &label in batch.labels() {
        let l = i32::try_from(label)
            .map_err(|_| KldaError::Input(format!("label {label} exceeds i32")))?;
        e.i32(l);
    }
    Ok(e.finish_with_crc())
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureBatch> {
    let mut d = Decoder::new(bytes);
    d.expect_magic(MAGIC)?;
    d.expect_version(VERSION)?;
    let n = d.u64()?;
    let width = d.u32()?;
    let code = d.u32()?;
    let dtype = Dtype::from_code(code)
        .ok_or_else(|| KldaError::CorruptState(format!("unknown dtype code {code}")))?;
    if width == 0 {
        return Err(KldaError::CorruptState("zero feature width".into()));
    }
    let expected = kldf_file_len(n, width as u64, dtype).ok_or_else(codec::overflow)?;
    codec::check_len_and_crc(bytes, expected)?;

    let (rows, cols) = (n as usize, width as usize);
    let mut values = Vec::with_capacity(rows * cols);
    match dtype {
        Dtype::F64 => values.extend(d.f64_vec(rows * cols)?),
        Dtype::F32 => {
            for _ in 0..rows * cols {
                values.push(d.f32()? as f64);
            }
        }
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(KldaError::NonFinite {
            row: i / cols,
            col: i % cols,
        });
    }
    let mut labels: Vec<ClassId> = Vec::with_capacity(rows);
    for row in 0..rows {
        let l = d.i32()?;
        if l < 0 {
            return Err(KldaError::NegativeLabel {
                row,
                label: l as i64,
            });
        }
        labels.push(l as ClassId);
    }
    d.skip(CRC_LEN)?;
    d.finish()?;
    let values = Array2::from_shape_vec((rows, cols), values).expect("shape checked");
    FeatureBatch::new(values, labels)
}

/// Writes atomically through a temporary file in the target directory.
pub fn write_features(batch: &FeatureBatch, path: &Path, dtype: Dtype) -> Result<()> {
    codec::write_atomic(path, &encode_features(batch, dtype)?)
}

pub fn read_features(path: &Path) -> Result<FeatureBatch> {
    decode_features(&codec::read_file(path)?)
}
