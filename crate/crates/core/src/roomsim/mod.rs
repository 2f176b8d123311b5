//! Room scenario sampling and image-method impulse responses.

pub mod acoustics;
mod batch;
mod image;
mod sampler;

pub use batch::{
    batch_generate, read_rir, write_rir, BatchConfig, RirEntry, RirManifest, GEOMETRY_NAME,
    MANIFEST_NAME,
};
pub use image::{
    allen_berkley_highpass, arrival_index, rir_length, simulate_rir, Rir, RirConfig,
    FRAC_DELAY_TAPS,
};
pub use sampler::{
    sample_scenario, subtended_angle_deg, Absorption, Range, RoomScenario, SamplerBounds,
};
