//! Binary model container.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic            4  b"CGMW"
//! format version   1  = 1
//! scalar width     1  4 (f32) or 8 (f64)
//! categories       1  = 13
//! reserved         1  = 0
//! dimension        8  u64
//! model_version        u32 length + UTF-8
//! featurizer hash      u32 length + UTF-8
//! featurizer config    u32 length + JSON
//! weights          13·D scalars, row-major by category ordinal
//! bias             13 scalars
//! checksum         32  SHA-256 of every preceding byte
//! ```

use std::io::{Read, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::features::FeaturizerConfig;
use super::head::LinearHead;
use crate::scalar::Scalar;
use crate::taxonomy::NUM_CATEGORIES;

pub const MAGIC: &[u8; 4] = b"CGMW";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u8),
    #[error("model stores {found}-byte scalars, caller expects {expected}")]
    ScalarMismatch { expected: u8, found: u8 },
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("model file truncated")]
    Truncated,
    #[error("invalid model file: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_model<T: Scalar>(head: &LinearHead<T>, featurizer: &FeaturizerConfig) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + (head.weights().len() + NUM_CATEGORIES) * T::WIDTH as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[FORMAT_VERSION, T::WIDTH, NUM_CATEGORIES as u8, 0]);
    out.extend_from_slice(&(head.dimension() as u64).to_le_bytes());
    put_str(&mut out, &head.model_version);
    put_str(&mut out, &head.featurizer_config_hash);
    put_str(&mut out, &serde_json::to_string(featurizer).expect("config serializes"));
    for &w in head.weights().iter().chain(head.bias()) {
        w.write_le(&mut out);
    }
    let checksum = Sha256::digest(&out);
    out.extend_from_slice(&checksum);
    out
}

pub fn write_model<T: Scalar>(
    mut writer: impl Write,
    head: &LinearHead<T>,
    featurizer: &FeaturizerConfig,
) -> std::io::Result<()> {
    writer.write_all(&encode_model(head, featurizer))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let end = self.pos.checked_add(n).ok_or(ModelFileError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(ModelFileError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, ModelFileError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| ModelFileError::Invalid(e.to_string()))
    }
}

/// Peeks the scalar width of an encoded model without decoding it.
pub fn scalar_width(bytes: &[u8]) -> Result<u8, ModelFileError> {
    if bytes.len() < 8 {
        return Err(ModelFileError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    Ok(bytes[5])
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<(LinearHead<T>, FeaturizerConfig), ModelFileError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    if bytes.len() < 8 + 32 {
        return Err(ModelFileError::Truncated);
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(ModelFileError::ChecksumMismatch);
    }

    let mut cur = Cursor { bytes: body, pos: 4 };
    let header = cur.take(4)?;
    if header[0] != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion(header[0]));
    }
    if header[1] != T::WIDTH {
        return Err(ModelFileError::ScalarMismatch { expected: T::WIDTH, found: header[1] });
    }
    if header[2] as usize != NUM_CATEGORIES {
        return Err(ModelFileError::Invalid(format!("{} categories", header[2])));
    }
    let dimension = usize::try_from(cur.u64()?).map_err(|_| ModelFileError::Invalid("dimension".into()))?;
    let model_version = cur.string()?;
    let featurizer_hash = cur.string()?;
    let featurizer: FeaturizerConfig =
        serde_json::from_str(&cur.string()?).map_err(|e| ModelFileError::Invalid(e.to_string()))?;
    if featurizer.config_hash() != featurizer_hash {
        return Err(ModelFileError::Invalid("featurizer hash does not match embedded config".into()));
    }
    if featurizer.dimension() != dimension {
        return Err(ModelFileError::Invalid("featurizer dimension does not match weights".into()));
    }

    let width = T::WIDTH as usize;
    let count = dimension
        .checked_mul(NUM_CATEGORIES)
        .ok_or_else(|| ModelFileError::Invalid("dimension".into()))?;
    let raw = cur.take(count.checked_mul(width).ok_or(ModelFileError::Truncated)?)?;
    let weights: Vec<T> = raw.chunks_exact(width).map(T::read_le).collect();
    let raw_bias = cur.take(NUM_CATEGORIES * width)?;
    let mut bias = [T::zero(); NUM_CATEGORIES];
    for (b, chunk) in bias.iter_mut().zip(raw_bias.chunks_exact(width)) {
        *b = T::read_le(chunk);
    }
    if cur.pos != body.len() {
        return Err(ModelFileError::Invalid("trailing bytes".into()));
    }
    let head = LinearHead::from_parts(dimension, weights, bias, model_version, featurizer_hash)
        .map_err(|e| ModelFileError::Invalid(e.to_string()))?;
    Ok((head, featurizer))
}

pub fn read_model<T: Scalar>(mut reader: impl Read) -> Result<(LinearHead<T>, FeaturizerConfig), ModelFileError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::features::HashingConfig;
    use proptest::prelude::*;

    fn config(d: usize) -> FeaturizerConfig {
        FeaturizerConfig::Hashing(HashingConfig::with_dimension(d))
    }

    fn head(d: usize, seed: f64) -> LinearHead<f64> {
        let weights = (0..13 * d).map(|i| (i as f64 * seed).sin() * 1e-3).collect();
        let bias = std::array::from_fn(|i| i as f64 * -0.37);
        LinearHead::from_parts(d, weights, bias, "v7", config(d).config_hash()).unwrap()
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(d in 1usize..40, seed in -10.0f64..10.0) {
            let original = head(d, seed);
            let bytes = encode_model(&original, &config(d));
            let (back, cfg) = decode_model::<f64>(&bytes).unwrap();
            prop_assert_eq!(&cfg, &config(d));
            prop_assert_eq!(&back.model_version, &original.model_version);
            let bits = |h: &LinearHead<f64>| h.weights().iter().chain(h.bias()).map(|w| w.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&original));
            prop_assert_eq!(encode_model(&back, &cfg), bytes);
        }
    }

    #[test]
    fn detects_corruption() {
        let mut bytes = encode_model(&head(4, 1.0), &config(4));
        bytes[40] ^= 1;
        assert!(matches!(decode_model::<f64>(&bytes), Err(ModelFileError::ChecksumMismatch)));
        assert!(matches!(decode_model::<f64>(b"nope"), Err(ModelFileError::BadMagic)));
    }

    #[test]
    fn scalar_width_is_checked() {
        let bytes = encode_model(&head(4, 1.0).cast::<f32>(), &config(4));
        assert_eq!(scalar_width(&bytes).unwrap(), 4);
        assert!(matches!(
            decode_model::<f64>(&bytes),
            Err(ModelFileError::ScalarMismatch { expected: 8, found: 4 })
        ));
        assert!(decode_model::<f32>(&bytes).is_ok());
    }

    #[test]
    fn version_byte_is_checked() {
        let mut bytes = encode_model(&head(2, 1.0), &config(2));
        bytes[4] = 9;
        let n = bytes.len();
        let sum = Sha256::digest(&bytes[..n - 32]);
        bytes[n - 32..].copy_from_slice(&sum);
        assert!(matches!(decode_model::<f64>(&bytes), Err(ModelFileError::UnsupportedVersion(9))));
    }
}
