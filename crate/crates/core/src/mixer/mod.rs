//! Noisy multi-channel mixture synthesis.
//!
//! Dry speech and noise are convolved with RIRs from the same room, the
//! noise is scaled to a target SNR measured on the reference channel, and
//! the sum is written next to a clean reference for supervised training.

mod clip;
mod convolve;
mod dataset;
mod mix;
mod vad;

pub use clip::{energy, rms, ChannelMap, MultichannelClip, Provenance};
pub use convolve::{convolve_multichannel, fft_convolve, MultiConvolver};
pub use dataset::{
    crop_or_loop, crop_or_pad, filter_speech_sources, missing_assets, plan_mixtures,
    synthesize_clip, synthesize_dataset, DatasetEntry, DatasetManifest, MixerConfig, MixtureSpec,
    SynthesizedClip, Target, DATASET_MANIFEST,
};
pub use mix::{measured_snr_db, mix_at_snr, Mixture};
pub use vad::{estimate_speech_snr_db, passes_speech_gate};
