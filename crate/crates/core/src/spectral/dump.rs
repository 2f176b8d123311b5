//! Binary spectrogram dump: a 16-byte header (`b"FFSG"`, version, F, T as
//! little-endian u32) followed by row-major `F x T` interleaved `(re, im)`
//! float32 pairs. Intended for debugging and interchange, so only the bins
//! are stored.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use super::{Spectrogram, StftConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FFSG";
const VERSION: u32 = 1;

pub fn write_spectrogram(path: &Path, spec: &Spectrogram) -> Result<()> {
    let (f, t) = spec.bins.dim();
    let mut buf = Vec::with_capacity(16 + f * t * 8);
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, f as u32, t as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for c in spec.bins.iter() {
        buf.extend_from_slice(&(c.re as f32).to_le_bytes());
        buf.extend_from_slice(&(c.im as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::storage(path, e))
}

/// Reads a dump back. The STFT configuration is not part of the format and
/// must be supplied; `signal_len` is set to the longest signal consistent
/// with the frame count.
pub fn read_spectrogram(path: &Path, config: StftConfig) -> Result<Spectrogram> {
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::parse(path, "not a spectrogram dump"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(1) != VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported version {}", word(1)),
        ));
    }
    let (f, t) = (word(2) as usize, word(3) as usize);
    if bytes.len() != 16 + f * t * 8 {
        return Err(Error::parse(path, "payload size does not match header"));
    }
    let values: Vec<Complex64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    let bins = Array2::from_shape_vec((f, t), values).map_err(|e| Error::parse(path, e))?;
    let signal_len = (t.saturating_sub(1) * config.hop() + 1)
        .saturating_sub(config.pad_left())
        .max(1);
    Ok(Spectrogram {
        bins,
        config,
        signal_len,
        channel: 0,
    })
}
