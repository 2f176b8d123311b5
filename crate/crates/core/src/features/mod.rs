//! Network input: real and imaginary parts of the reference channel's STFT
//! followed by the cosine of the inter-channel phase difference of four
//! microphone pairs, stacked along frequency into a `6F x T` matrix.

mod dump;

use ndarray::{s, Array2, Axis, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Topology;
use crate::mixer::MultichannelClip;
use crate::spectral::{Spectrogram, Stft, StftConfig};

pub use dump::{read_features, write_features};

/// Number of `F`-row blocks in the feature stack.
pub const NUM_BLOCKS: usize = 6;
pub const NUM_PAIRS: usize = 4;
pub const SUBSET_LEN: usize = 8;

/// Channel subset and the pairs (indices into the subset) used for IPD.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSelection {
    /// Original 0-based channel indices; the first entry is the reference.
    pub channel_subset: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

impl PairSelection {
    pub fn new(channel_subset: Vec<usize>, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let sel = PairSelection {
            channel_subset,
            pairs,
        };
        sel.validate()?;
        Ok(sel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_subset.len() != SUBSET_LEN {
            return Err(Error::Configuration(format!(
                "channel subset must hold {SUBSET_LEN} channels, got {}",
                self.channel_subset.len()
            )));
        }
        let mut sorted = self.channel_subset.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.channel_subset.len() {
            return Err(Error::Configuration(
                "channel subset repeats a channel".into(),
            ));
        }
        if self.pairs.len() != NUM_PAIRS {
            return Err(Error::Configuration(format!(
                "exactly {NUM_PAIRS} pairs are required, got {}",
                self.pairs.len()
            )));
        }
        for &(i, j) in &self.pairs {
            if i == j || i >= SUBSET_LEN || j >= SUBSET_LEN {
                return Err(Error::Configuration(format!(
                    "pair ({}, {}) is not two distinct subset positions",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn reference_channel(&self) -> usize {
        self.channel_subset[0]
    }

    /// Pairs as original 0-based channel indices.
    pub fn channel_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs
            .iter()
            .map(|&(i, j)| (self.channel_subset[i], self.channel_subset[j]))
            .collect()
    }

    /// Pairs as original 1-based channel numbers, for reports.
    pub fn channel_pairs_one_based(&self) -> Vec<(usize, usize)> {
        self.channel_pairs()
            .into_iter()
            .map(|(i, j)| (i + 1, j + 1))
            .collect()
    }

    pub fn check_channels(&self, num_channels: usize) -> Result<()> {
        match self.channel_subset.iter().find(|&&c| c >= num_channels) {
            Some(c) => Err(Error::Channel(format!(
                "channel {} selected but the clip has {num_channels} channels",
                c + 1
            ))),
            None => Ok(()),
        }
    }
}

/// Default subset and pairs per topology.
///
/// Circular16 uses every other channel, so its pairs join diametrically
/// opposite microphones; linear topologies use the first eight channels.
pub fn default_pairs(topology: Topology) -> PairSelection {
    let channel_subset: Vec<usize> = match topology {
        Topology::Circular16 => (0..16).step_by(2).collect(),
        Topology::LinearUniform8 | Topology::LinearNonuniform8 | Topology::DualLinear16 => {
            (0..8).collect()
        }
    };
    PairSelection {
        channel_subset,
        pairs: (0..NUM_PAIRS).map(|i| (i, i + NUM_PAIRS)).collect(),
    }
}

/// Wrapped phase difference `angle(O_i) - angle(O_j)` in `(-pi, pi]`.
pub fn ipd(spec_i: &Spectrogram, spec_j: &Spectrogram) -> Result<Array2<f64>> {
    if spec_i.bins.dim() != spec_j.bins.dim() {
        return Err(Error::Shape(format!(
            "IPD of {:?} and {:?} spectrograms",
            spec_i.bins.dim(),
            spec_j.bins.dim()
        )));
    }
    if spec_i.config != spec_j.config {
        return Err(Error::Shape(
            "IPD across different STFT configurations".into(),
        ));
    }
    Ok(Zip::from(&spec_i.bins)
        .and(&spec_j.bins)
        .map_collect(|a, b| wrapped_phase(a * b.conj())))
}

#[inline]
fn wrapped_phase(z: Complex64) -> f64 {
    let p = z.arg();
    if p <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        p
    }
}

/// `cos(angle(a) - angle(b))`, with zero-magnitude bins mapped to 1.
#[inline]
pub(crate) fn cos_ipd(a: Complex64, b: Complex64) -> f64 {
    let z = a * b.conj();
    let n = z.norm();
    if n > 0.0 {
        z.re / n
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Per-utterance zero-mean, unit-variance scaling of every row.
    /// Not available on the streaming path.
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { normalize: false }
    }
}

/// `6F x T` feature matrix: `[Re X0; Im X0; cosIPD_1; ...; cosIPD_4]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub values: Array2<f64>,
    pub num_bins: usize,
}

impl FeatureTensor {
    pub fn num_frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn block(&self, b: usize) -> ndarray::ArrayView2<'_, f64> {
        let f = self.num_bins;
        self.values.slice(s![b * f..(b + 1) * f, ..])
    }

    /// Scales every row to zero mean and unit variance over time.
    pub fn normalize(&mut self) {
        for mut row in self.values.axis_iter_mut(Axis(0)) {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var.sqrt() + 1e-8);
            row.mapv_inplace(|v| (v - mean) * inv);
        }
    }
}

/// Builds the feature stack from the spectrograms of the selected subset
/// (in subset order).
pub fn features_from_spectrograms(
    subset_specs: &[Spectrogram],
    selection: &PairSelection,
) -> Result<FeatureTensor> {
    if subset_specs.len() != selection.channel_subset.len() {
        return Err(Error::Shape(format!(
            "{} spectrograms for a {}-channel subset",
            subset_specs.len(),
            selection.channel_subset.len()
        )));
    }
    let x0 = &subset_specs[0];
    let (f, t) = x0.bins.dim();
    if subset_specs.iter().any(|s| s.bins.dim() != (f, t)) {
        return Err(Error::Shape("subset spectrograms differ in shape".into()));
    }
    let mut values = Array2::zeros((NUM_BLOCKS * f, t));
    Zip::from(values.slice_mut(s![0..f, ..]))
        .and(&x0.bins)
        .for_each(|v, c| *v = c.re);
    Zip::from(values.slice_mut(s![f..2 * f, ..]))
        .and(&x0.bins)
        .for_each(|v, c| *v = c.im);
    for (p, &(i, j)) in selection.pairs.iter().enumerate() {
        let rows = (2 + p) * f..(3 + p) * f;
        Zip::from(values.slice_mut(s![rows, ..]))
            .and(&subset_specs[i].bins)
            .and(&subset_specs[j].bins)
            .for_each(|v, a, b| *v = cos_ipd(*a, *b));
    }
    Ok(FeatureTensor {
        values,
        num_bins: f,
    })
}

/// STFTs of the selected channels, in subset order.
pub fn subset_spectrograms(
    clip: &MultichannelClip,
    selection: &PairSelection,
    stft: &Stft,
) -> Result<Vec<Spectrogram>> {
    selection.validate()?;
    selection.check_channels(clip.num_channels())?;
    selection
        .channel_subset
        .iter()
        .map(|&c| {
            let mut s = stft.forward(clip.channel(c)?)?;
            s.channel = c;
            Ok(s)
        })
        .collect()
}

pub fn assemble_features(
    clip: &MultichannelClip,
    selection: &PairSelection,
    stft_config: &StftConfig,
) -> Result<FeatureTensor> {
    let stft = Stft::new(*stft_config)?;
    let specs = subset_spectrograms(clip, selection, &stft)?;
    features_from_spectrograms(&specs, selection)
}

/// Writes one frame of features into `out` (length `6F`) from one STFT
/// column per subset channel.
pub fn feature_frame(columns: &[Vec<Complex64>], selection: &PairSelection, out: &mut [f64]) {
    let f = columns[0].len();
    for (k, c) in columns[0].iter().enumerate() {
        out[k] = c.re;
        out[f + k] = c.im;
    }
    for (p, &(i, j)) in selection.pairs.iter().enumerate() {
        let base = (2 + p) * f;
        for k in 0..f {
            out[base + k] = cos_ipd(columns[i][k], columns[j][k]);
        }
    }
}
