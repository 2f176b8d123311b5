//! WAV reading and writing on top of `hound`.
//!
//! Everything in memory is `f64` and channel-major (`channels[c][n]`). Files
//! are written as 32-bit float; integer PCM is accepted on input.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Decoded audio: one `Vec` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl Audio {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the single channel of a mono file.
    pub fn into_mono(self, path: &Path) -> Result<Vec<f64>> {
        if self.channels.len() != 1 {
            return Err(Error::Format(format!(
                "{} has {} channels, expected mono",
                path.display(),
                self.channels.len()
            )));
        }
        Ok(self.channels.into_iter().next().unwrap_or_default())
    }
}

fn hound_err(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::storage(path, e),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Audio> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| hound_err(path, e))?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(Error::Format(format!("{} has no channels", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| hound_err(path, e))?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| hound_err(path, e))?
        }
        (format, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported sample format {format:?}/{bits} bit",
                path.display()
            )))
        }
    };
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok(Audio {
        channels,
        sample_rate: spec.sample_rate,
    })
}

/// Writes channel-major audio as interleaved 32-bit float.
pub fn write_wav(path: impl AsRef<Path>, channels: &[Vec<f64>], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    if channels.is_empty() {
        return Err(Error::Format(format!(
            "refusing to write {} with zero channels",
            path.display()
        )));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Shape(format!(
            "channels of {} have unequal lengths",
            path.display()
        )));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let file = File::create(path).map_err(|e| Error::storage(path, e))?;
    let mut writer = WavWriter::new(BufWriter::new(file), spec).map_err(|e| hound_err(path, e))?;
    for n in 0..len {
        for ch in channels {
            writer
                .write_sample(ch[n] as f32)
                .map_err(|e| hound_err(path, e))?;
        }
    }
    writer.finalize().map_err(|e| hound_err(path, e))
}

pub fn write_mono(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    write_wav(path, std::slice::from_ref(&samples.to_vec()), sample_rate)
}

/// Writes 16-bit PCM, mostly useful for producing source corpora.
pub fn write_pcm16(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let file = File::create(path).map_err(|e| Error::storage(path, e))?;
    let mut writer = WavWriter::new(BufWriter::new(file), spec).map_err(|e| hound_err(path, e))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| hound_err(path, e))?;
    }
    writer.finalize().map_err(|e| hound_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let chans = vec![vec![0.5, -0.25, 0.125], vec![0.0, 1.0, -1.0]];
        write_wav(&path, &chans, 16000).unwrap();
        let audio = read_wav(&path).unwrap();
        assert_eq!(audio.sample_rate, 16000);
        assert_eq!(audio.channels, chans);
    }

    #[test]
    fn pcm16_is_readable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        write_pcm16(&path, &[0.5, -0.5, 0.0], 16000).unwrap();
        let mono = read_wav(&path).unwrap().into_mono(&path).unwrap();
        assert!((mono[0] - 0.5).abs() < 1e-4);
        assert!((mono[1] + 0.5).abs() < 1e-4);
    }

    #[test]
    fn unequal_channels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_wav(dir.path().join("x.wav"), &[vec![0.0], vec![]], 16000);
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
