//! End-to-end enhancement: features, mask, masked reference channel, iSTFT.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mask::{apply_mask, ComplexMask};
use super::model::{MaskEstimator, Scalar, StreamState};
use crate::error::{Error, Result};
use crate::features::{
    default_pairs, feature_frame, features_from_spectrograms, subset_spectrograms, FeatureConfig,
    FeatureTensor, PairSelection,
};
use crate::geometry::Topology;
use crate::mixer::MultichannelClip;
use crate::spectral::{Padding, Spectrogram, Stft, StftConfig, StreamingIstft, StreamingStft};

/// Everything between the waveform and the network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontEnd {
    pub stft: StftConfig,
    pub selection: PairSelection,
    pub features: FeatureConfig,
}

impl Default for FrontEnd {
    fn default() -> Self {
        FrontEnd::for_topology(Topology::LinearUniform8)
    }
}

impl FrontEnd {
    /// Default framing with causal padding, so offline and streaming
    /// enhancement see the same frames.
    pub fn for_topology(topology: Topology) -> Self {
        FrontEnd {
            stft: StftConfig::default().causal(),
            selection: default_pairs(topology),
            features: FeatureConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.selection.validate()
    }

    /// Checks the constraints of the frame-by-frame path.
    pub fn check_streaming(&self) -> Result<()> {
        self.validate()?;
        if self.stft.padding != Padding::Causal {
            return Err(Error::Configuration(
                "streaming enhancement needs causal STFT padding".into(),
            ));
        }
        if self.features.normalize {
            return Err(Error::Configuration(
                "per-utterance feature normalization looks at future frames and cannot stream"
                    .into(),
            ));
        }
        Ok(())
    }

    fn check_clip(&self, clip: &MultichannelClip) -> Result<()> {
        if clip.sample_rate != self.stft.sample_rate {
            return Err(Error::Format(format!(
                "clip is {} Hz but the STFT expects {} Hz",
                clip.sample_rate, self.stft.sample_rate
            )));
        }
        self.selection.check_channels(clip.num_channels())
    }
}

/// Runs the offline pipeline with any mask source. `estimator` receives the
/// features and the reference-channel spectrogram.
pub fn enhance_clip_with<E>(
    clip: &MultichannelClip,
    front: &FrontEnd,
    estimator: E,
) -> Result<Vec<f64>>
where
    E: FnOnce(&FeatureTensor, &Spectrogram) -> Result<ComplexMask>,
{
    front.validate()?;
    front.check_clip(clip)?;
    let stft = Stft::new(front.stft)?;
    let specs = subset_spectrograms(clip, &front.selection, &stft)?;
    let mut features = features_from_spectrograms(&specs, &front.selection)?;
    if front.features.normalize {
        features.normalize();
    }
    let x0 = &specs[0];
    let mask = estimator(&features, x0)?;
    stft.inverse(&apply_mask(&mask, x0)?)
}

/// Offline enhancement of one clip; the output has the clip's length.
pub fn enhance_clip<T: Scalar>(
    clip: &MultichannelClip,
    model: &MaskEstimator<T>,
    front: &FrontEnd,
) -> Result<Vec<f64>> {
    enhance_clip_with(clip, front, |features, _| model.estimate_mask(features))
}

/// Hop-by-hop enhancer. Owns its recurrent state; the model is shared.
pub struct StreamingEnhancer<'a, T> {
    model: &'a MaskEstimator<T>,
    front: FrontEnd,
    state: StreamState<T>,
    analysis: Vec<StreamingStft>,
    synthesis: StreamingIstft,
    columns: Vec<Vec<Complex64>>,
    features: Vec<f64>,
    mask: Vec<f64>,
    masked: Vec<Complex64>,
}

impl<'a, T: Scalar> StreamingEnhancer<'a, T> {
    pub fn new(model: &'a MaskEstimator<T>, front: &FrontEnd) -> Result<Self> {
        front.check_streaming()?;
        let f = front.stft.num_bins();
        if f != model.num_bins {
            return Err(Error::Shape(format!(
                "model has F = {} but the STFT gives {f} bins",
                model.num_bins
            )));
        }
        let n = front.selection.channel_subset.len();
        Ok(StreamingEnhancer {
            model,
            state: model.new_state(),
            analysis: (0..n)
                .map(|_| StreamingStft::new(front.stft))
                .collect::<Result<_>>()?,
            synthesis: StreamingIstft::new(front.stft)?,
            columns: vec![vec![Complex64::default(); f]; n],
            features: vec![0.0; model.input_dim()],
            mask: vec![0.0; 2 * f],
            masked: vec![Complex64::default(); f],
            front: front.clone(),
        })
    }

    pub fn hop(&self) -> usize {
        self.front.stft.hop()
    }

    /// Output delay in samples.
    pub fn latency(&self) -> usize {
        self.synthesis.latency()
    }

    /// Consumes one hop per input channel (indexed like the clip) and writes
    /// one hop of enhanced output.
    pub fn process_hop(&mut self, channels: &[&[f64]], out: &mut [f64]) -> Result<()> {
        for (s, &c) in self.front.selection.channel_subset.iter().enumerate() {
            let hop = channels.get(c).ok_or_else(|| {
                Error::Channel(format!(
                    "channel {c} missing from a {}-channel hop",
                    channels.len()
                ))
            })?;
            self.analysis[s].push_into(hop, &mut self.columns[s])?;
        }
        feature_frame(&self.columns, &self.front.selection, &mut self.features);
        self.model
            .step(&mut self.state, &self.features, &mut self.mask)?;
        let f = self.masked.len();
        for (k, y) in self.masked.iter_mut().enumerate() {
            *y = Complex64::new(self.mask[k], self.mask[f + k]) * self.columns[0][k];
        }
        self.synthesis.push_into(&self.masked, out)
    }

    pub fn reset(&mut self) {
        self.state.reset();
        self.analysis.iter_mut().for_each(StreamingStft::reset);
        self.synthesis.reset();
    }
}

/// Enhances a whole clip through [`StreamingEnhancer`], feeding zeros past
/// the end to flush the latency, and trims the output to the clip length.
pub fn enhance_streaming<T: Scalar>(
    clip: &MultichannelClip,
    model: &MaskEstimator<T>,
    front: &FrontEnd,
) -> Result<Vec<f64>> {
    front.check_clip(clip)?;
    let mut enhancer = StreamingEnhancer::new(model, front)?;
    let hop = enhancer.hop();
    let latency = enhancer.latency();
    let len = clip.len();
    let hops = (len + latency).div_ceil(hop);
    let mut bufs = vec![vec![0.0; hop]; clip.num_channels()];
    let mut out = vec![0.0; hops * hop];
    for h in 0..hops {
        for (buf, x) in bufs.iter_mut().zip(&clip.samples) {
            buf.fill(0.0);
            let start = (h * hop).min(len);
            let end = ((h + 1) * hop).min(len);
            buf[..end - start].copy_from_slice(&x[start..end]);
        }
        let views: Vec<&[f64]> = bufs.iter().map(Vec::as_slice).collect();
        enhancer.process_hop(&views, &mut out[h * hop..(h + 1) * hop])?;
    }
    Ok(out[latency..latency + len].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::model::{bias_for_mask, ModelConfig};
    use crate::spectral::WindowKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(seed: u64, channels: usize, len: usize) -> MultichannelClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..channels)
            .map(|_| (0..len).map(|_| rng.random_range(-0.5..0.5)).collect())
            .collect();
        MultichannelClip::new(samples, 16_000).unwrap()
    }

    fn frozen(value: f64) -> MaskEstimator<f64> {
        let mut m = MaskEstimator::<f64>::new(
            257,
            &ModelConfig {
                hidden: 4,
                layers: 1,
                seed: 0,
            },
        )
        .unwrap();
        m.fc_w.fill(0.0);
        let b = bias_for_mask(value);
        for (k, v) in m.fc_b.iter_mut().enumerate() {
            *v = if k < 257 { b } else { 0.0 };
        }
        m
    }

    #[test]
    fn identity_mask_returns_reference_channel() {
        let c = clip(1, 8, 9000);
        for padding in [Padding::Causal, Padding::Centered] {
            let front = FrontEnd {
                stft: StftConfig {
                    padding,
                    ..StftConfig::default()
                },
                ..FrontEnd::default()
            };
            let y = enhance_clip(&c, &frozen(1.0), &front).unwrap();
            assert_eq!(y.len(), c.len());
            let err = y
                .iter()
                .zip(&c.samples[0])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn zero_mask_silences() {
        let c = clip(2, 8, 5000);
        let y = enhance_clip(&c, &frozen(0.0), &FrontEnd::default()).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn streaming_matches_offline() {
        let model = MaskEstimator::<f64>::new(
            257,
            &ModelConfig {
                hidden: 16,
                layers: 2,
                seed: 5,
            },
        )
        .unwrap();
        let front = FrontEnd::for_topology(Topology::Circular16);
        let c = clip(3, 16, 7777);
        let offline = enhance_clip(&c, &model, &front).unwrap();
        let online = enhance_streaming(&c, &model, &front).unwrap();
        assert_eq!(online.len(), c.len());
        let err = offline
            .iter()
            .zip(&online)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn streaming_refuses_non_causal_setups() {
        let model = frozen(1.0);
        let centered = FrontEnd {
            stft: StftConfig::default(),
            ..FrontEnd::default()
        };
        assert!(matches!(
            StreamingEnhancer::new(&model, &centered),
            Err(Error::Configuration(_))
        ));
        let normalized = FrontEnd {
            features: FeatureConfig { normalize: true },
            ..FrontEnd::default()
        };
        assert!(StreamingEnhancer::new(&model, &normalized).is_err());
        let long = FrontEnd {
            stft: StftConfig {
                frame_ms: 64.0,
                hop_ms: 32.0,
                fft_size: 1024,
                window: WindowKind::SqrtHann,
                ..StftConfig::default().causal()
            },
            ..FrontEnd::default()
        };
        assert!(StreamingEnhancer::new(&model, &long).is_err());
    }

    #[test]
    fn wrong_rate_or_channels_rejected() {
        let model = frozen(1.0);
        let mut c = clip(4, 8, 2000);
        c.sample_rate = 8000;
        assert!(matches!(
            enhance_clip(&c, &model, &FrontEnd::default()),
            Err(Error::Format(_))
        ));
        let c = clip(4, 4, 2000);
        assert!(matches!(
            enhance_clip(&c, &model, &FrontEnd::default()),
            Err(Error::Channel(_))
        ));
    }
}
