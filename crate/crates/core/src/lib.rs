//! Multi-channel far-field speech enhancement.
//!
//! The crate covers the whole pipeline: microphone-array geometry, image-method
//! room simulation, noisy mixture synthesis, STFT analysis, IPD features,
//! complex-ratio-mask enhancement with a recurrent mask estimator, multi-array
//! selection and objective/subjective evaluation.

pub mod enhance;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod geometry;
pub mod jsonl;
pub mod mixer;
pub mod roomsim;
pub mod seed;
pub mod spectral;
pub mod synthetic;
pub mod wav;

pub use error::{Error, Result};
