//! Little-endian binary encoding shared by the on-disk formats.
//!
//! All multi-byte quantities are little-endian regardless of host. Formats
//! that carry a checksum end with the CRC-32 (IEEE) of every preceding byte.

use std::io::Write;
use std::path::Path;

use crate::error::{KldaError, Result};

pub(crate) const CRC_LEN: usize = 4;

#[derive(Debug, Default)]
pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn with_capacity(cap: usize) -> Self {
        Self {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn magic(&mut self, m: &[u8; 4]) {
        self.buf.extend_from_slice(m);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.f64(*v);
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// Appends the CRC-32 of everything written so far and returns the buffer.
    pub fn finish_with_crc(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub(crate) struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }

    pub fn skip(&mut self, n: usize) -> Result<()> {
        self.take(n).map(|_| ())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(KldaError::Truncated {
                expected: (self.pos + n) as u64,
                found: self.buf.len() as u64,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn expect_magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found = self.array::<4>()?;
        if &found != expected {
            return Err(KldaError::Magic {
                expected: *expected,
                found,
            });
        }
        Ok(())
    }

    pub fn expect_version(&mut self, supported: u32) -> Result<()> {
        let v = self.u32()?;
        if v != supported {
            return Err(KldaError::Version(v));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(overflow)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(KldaError::Truncated {
                expected: self.pos as u64,
                found: self.buf.len() as u64,
            });
        }
        Ok(())
    }
}

pub(crate) fn overflow() -> KldaError {
    KldaError::CorruptState("declared sizes overflow".into())
}

/// Verifies that `buf` has exactly `expected_len` bytes and that its trailing
/// CRC-32 matches the preceding content.
pub(crate) fn check_len_and_crc(buf: &[u8], expected_len: u64) -> Result<()> {
    if buf.len() as u64 != expected_len {
        return Err(KldaError::Truncated {
            expected: expected_len,
            found: buf.len() as u64,
        });
    }
    check_crc(buf)
}

pub(crate) fn check_crc(buf: &[u8]) -> Result<()> {
    if buf.len() < CRC_LEN {
        return Err(KldaError::Truncated {
            expected: CRC_LEN as u64,
            found: buf.len() as u64,
        });
    }
    let (body, tail) = buf.split_at(buf.len() - CRC_LEN);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(KldaError::Checksum { stored, computed });
    }
    Ok(())
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| KldaError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| KldaError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| KldaError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| KldaError::io(path, e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| KldaError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc_detects_flip() {
        let mut e = Encoder::default();
        e.u64(42);
        let mut bytes = e.finish_with_crc();
        assert!(check_crc(&bytes).is_ok());
        bytes[3] ^= 0x10;
        assert!(matches!(check_crc(&bytes), Err(KldaError::Checksum { .. })));
    }

    #[test]
    fn crc32_known_vector() {
        // IEEE CRC-32 check value
        assert_eq!(crc32fast::hash(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn decoder_reports_truncation() {
        let mut d = Decoder::new(&[1, 2, 3]);
        assert!(matches!(d.u32(), Err(KldaError::Truncated { .. })));
    }
}
