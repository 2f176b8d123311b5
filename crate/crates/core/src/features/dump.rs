//! Feature dump: `b"FFFT"`, then `F`, `T` and the block count as
//! little-endian u32, then the `(blocks * F) x T` matrix as row-major
//! float32.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{FeatureTensor, NUM_BLOCKS};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FFFT";

pub fn write_features(path: &Path, features: &FeatureTensor) -> Result<()> {
    let (rows, t) = features.values.dim();
    let mut buf = Vec::with_capacity(16 + rows * t * 4);
    buf.extend_from_slice(MAGIC);
    for v in [features.num_bins as u32, t as u32, NUM_BLOCKS as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in features.values.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::storage(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureTensor> {
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::parse(path, "not a feature dump"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (f, t, blocks) = (word(1), word(2), word(3));
    if blocks != NUM_BLOCKS || bytes.len() != 16 + blocks * f * t * 4 {
        return Err(Error::parse(path, "header does not match payload"));
    }
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(FeatureTensor {
        values: Array2::from_shape_vec((blocks * f, t), values)
            .map_err(|e| Error::parse(path, e))?,
        num_bins: f,
    })
}
