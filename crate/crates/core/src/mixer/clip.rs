use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a clip's channels come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelMap {
    /// Geometry document the channels refer to, if any.
    pub geometry: Option<String>,
    /// Microphone index of each channel.
    pub order: Vec<usize>,
}

impl ChannelMap {
    pub fn identity(num_channels: usize) -> Self {
        ChannelMap {
            geometry: None,
            order: (0..num_channels).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub speech_id: Option<String>,
    pub noise_id: Option<String>,
    pub rir_ids: Vec<String>,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
}

/// Time-domain multi-channel audio, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelClip {
    pub samples: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub channel_map: ChannelMap,
    pub provenance: Provenance,
}

impl MultichannelClip {
    pub fn new(samples: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Shape("a clip needs at least one channel".into()));
        }
        let len = samples[0].len();
        if samples.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("clip channels have unequal lengths".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("clip contains non-finite samples".into()));
        }
        Ok(MultichannelClip {
            channel_map: ChannelMap::identity(samples.len()),
            samples,
            sample_rate,
            provenance: Provenance::default(),
        })
    }

    pub fn num_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, c: usize) -> Result<&[f64]> {
        self.samples.get(c).map(Vec::as_slice).ok_or_else(|| {
            Error::Channel(format!(
                "channel {} requested from a {}-channel clip",
                c + 1,
                self.num_channels()
            ))
        })
    }

    pub fn peak(&self) -> f64 {
        self.samples
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, gain: f64) {
        for v in self.samples.iter_mut().flatten() {
            *v *= gain;
        }
    }
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (energy(x) / x.len() as f64).sqrt()
    }
}
