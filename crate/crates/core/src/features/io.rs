//! Binary feature files.
//!
//! Layout, all little-endian:
//!
//! | offset | size  | field                     |
//! |--------|-------|---------------------------|
//! | 0      | 4     | magic `HOHF`              |
//! | 4      | 4     | version (`u32`, = 1)      |
//! | 8      | 4     | T, frame count (`u32`)    |
//! | 12     | 4     | D, dimension (`u32`)      |
//! | 16     | 8     | config fingerprint        |
//! | 24     | 8·T·D | `f64` values, row-major   |

use std::io::{Read, Write};
use std::path::Path;

use super::{FeatureSequence, Fingerprint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FEATURE_MAGIC: [u8; 4] = *b"HOHF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

impl<F: Scalar> FeatureSequence<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.as_slice().len());
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.num_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.fingerprint().0);
        for &v in self.as_slice() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }
}

impl FeatureSequence<f64> {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::FeatureFormat(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if bytes[..4] != FEATURE_MAGIC {
            return Err(Error::FeatureFormat("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != FEATURE_VERSION {
            return Err(Error::FeatureFormat(format!("unsupported version {version}")));
        }
        let (t, d) = (u32_at(8) as usize, u32_at(12) as usize);
        let mut fp = [0u8; 8];
        fp.copy_from_slice(&bytes[16..24]);
        let expected = t
            .checked_mul(d)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::FeatureFormat("size overflow".into()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(Error::FeatureFormat(format!(
                "payload is {} bytes, header declares {t}x{d} values ({expected} bytes)",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        FeatureSequence::new(values, d, Fingerprint(fp))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::FeatureFormat(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

pub fn write_feature_file<F: Scalar>(seq: &FeatureSequence<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, seq.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSequence<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureSequence::from_bytes(&bytes)
}
