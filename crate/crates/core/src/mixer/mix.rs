use super::clip::{energy, MultichannelClip};
use crate::error::{Error, Result};

/// A mixture together with its aligned components.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: MultichannelClip,
    /// Reverberant speech on every channel.
    pub speech: MultichannelClip,
    /// Noise after scaling by `noise_gain`.
    pub noise: MultichannelClip,
    pub noise_gain: f64,
}

impl Mixture {
    /// Applies one gain to mixture and components alike.
    pub fn scale(&mut self, gain: f64) {
        self.mixture.scale(gain);
        self.speech.scale(gain);
        self.noise.scale(gain);
    }
}

/// Scales `noise` by a single factor so that the speech-to-noise energy ratio
/// on `ref_channel` equals `snr_db`, then adds it to `speech`.
pub fn mix_at_snr(
    speech: &MultichannelClip,
    noise: &MultichannelClip,
    snr_db: f64,
    ref_channel: usize,
) -> Result<Mixture> {
    if !snr_db.is_finite() {
        return Err(Error::Parameter(format!(
            "SNR must be finite, got {snr_db}"
        )));
    }
    if speech.num_channels() != noise.num_channels() || speech.len() != noise.len() {
        return Err(Error::Shape(format!(
            "speech is {}x{} but noise is {}x{}",
            speech.num_channels(),
            speech.len(),
            noise.num_channels(),
            noise.len()
        )));
    }
    if speech.sample_rate != noise.sample_rate {
        return Err(Error::Format(format!(
            "speech at {} Hz, noise at {} Hz",
            speech.sample_rate, noise.sample_rate
        )));
    }
    let es = energy(speech.channel(ref_channel)?);
    let en = energy(noise.channel(ref_channel)?);
    if es == 0.0 || en == 0.0 {
        return Err(Error::DegenerateSignal(format!(
            "reference channel {} has zero {} energy",
            ref_channel + 1,
            if es == 0.0 { "speech" } else { "noise" }
        )));
    }
    let gain = (es / (en * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut scaled = noise.clone();
    scaled.scale(gain);
    let mut mixture = speech.clone();
    for (m, n) in mixture.samples.iter_mut().zip(&scaled.samples) {
        for (a, b) in m.iter_mut().zip(n) {
            *a += b;
        }
    }
    mixture.provenance.snr_db = Some(snr_db);
    Ok(Mixture {
        mixture,
        speech: speech.clone(),
        noise: scaled,
        noise_gain: gain,
    })
}

/// `10 log10(E_speech / E_noise)` on one channel.
pub fn measured_snr_db(speech: &[f64], noise: &[f64]) -> f64 {
    10.0 * (energy(speech) / energy(noise)).log10()
}
