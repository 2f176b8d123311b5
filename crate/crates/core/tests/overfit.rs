//! A small estimator must be able to memorize one full-length clip.

use farfield::enhance::{
    Example, FrontEnd, LossKind, MaskEstimator, ModelConfig, TrainConfig, Trainer,
};
use farfield::geometry::{ArrayGeometry, Topology};
use farfield::mixer::{convolve_multichannel, mix_at_snr};
use farfield::roomsim::{sample_scenario, simulate_rir, RirConfig, SamplerBounds};
use farfield::synthetic::{noise, speech_like, NoiseKind};

fn six_second_example() -> Example {
    let g = ArrayGeometry::default_for(Topology::LinearUniform8);
    let scenario = sample_scenario(4, &SamplerBounds::default(), &g).unwrap();
    let config = RirConfig {
        max_order: Some(6),
        ..RirConfig::default()
    };
    let speech_rir = simulate_rir(&scenario, &g, 0, &config).unwrap();
    let noise_rir = simulate_rir(&scenario, &g, 1, &config).unwrap();
    let len = 6 * 16_000;
    let speech =
        convolve_multichannel(&speech_like(8, 6.0, 16_000), 16_000, &speech_rir, Some(len))
            .unwrap();
    let babble = convolve_multichannel(
        &noise(NoiseKind::Babble, 9, 6.0, 16_000),
        16_000,
        &noise_rir,
        Some(len),
    )
    .unwrap();
    let m = mix_at_snr(&speech, &babble, 5.0, 0).unwrap();
    Example {
        reference: m.speech.samples[0].clone(),
        mixture: m.mixture,
    }
}

// The ratio needs a nonnegative loss, so this runs on the mask MSE. Below
// about 256 units the output layer cannot represent the ideal mask of a
// 601-frame clip closely enough to reach 10%.
#[test]
fn single_clip_overfits_within_500_steps() {
    let example = six_second_example();
    let front = FrontEnd::default();
    let model_config = ModelConfig {
        hidden: 256,
        layers: 1,
        seed: 0,
    };
    let model = MaskEstimator::<f32>::new(front.stft.num_bins(), &model_config).unwrap();
    let config = TrainConfig {
        loss: LossKind::MaskMse,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, config, front).unwrap();
    let p = trainer.prepare(&example).unwrap();
    let initial = trainer.loss(&[&p]).unwrap();
    for _ in 0..500 {
        trainer.train_step(&[&p]).unwrap();
    }
    let last = trainer.loss(&[&p]).unwrap();
    assert!(last < 0.1 * initial, "{initial} -> {last}");
}
