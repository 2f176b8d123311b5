//! Deterministic speech-like and noise signals for tests and demos.
//!
//! The speech model is a glottal pulse train with a drifting pitch contour,
//! shaped by three formant resonators per syllable and interleaved with
//! fricative bursts and pauses. It is not intelligible speech but it has the
//! spectro-temporal sparsity that mask-based enhancement relies on.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Two-pole resonator.
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, fs: f64) -> Self {
        let r = (-PI * bandwidth / fs).exp();
        let theta = 2.0 * PI * freq / fs;
        Resonator {
            a1: 2.0 * r * theta.cos(),
            a2: -r * r,
            gain: 1.0 - r,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];

/// Speech-like signal of `seconds` at `sample_rate`, normalized to an RMS of
/// 0.05 over active samples.
pub fn speech_like(seed: u64, seconds: f64, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let len = (seconds * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white = Normal::new(0.0, 1.0).unwrap();
    let mut out = vec![0.0; len];
    let base_f0 = rng.random_range(95.0..220.0);
    let mut pos = (rng.random_range(0.0..0.15) * fs) as usize;
    let mut phase = 0.0f64;

    while pos < len {
        let dur = (rng.random_range(0.12..0.32) * fs) as usize;
        let end = (pos + dur).min(len);
        if rng.random_bool(0.2) {
            // fricative: high-passed noise
            let mut res = Resonator::new(rng.random_range(3000.0..6000.0), 2000.0, fs);
            for (i, o) in out[pos..end].iter_mut().enumerate() {
                let env = (PI * i as f64 / dur as f64).sin();
                *o = 0.6 * env * res.tick(white.sample(&mut rng));
            }
        } else {
            let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
            let mut formants: Vec<Resonator> = vowel
                .iter()
                .zip([80.0, 110.0, 160.0])
                .map(|(&f, bw)| Resonator::new(f * rng.random_range(0.9..1.1), bw, fs))
                .collect();
            let f0_start = base_f0 * rng.random_range(0.85..1.2);
            let f0_end = base_f0 * rng.random_range(0.8..1.15);
            for i in 0..end - pos {
                let u = i as f64 / dur as f64;
                let f0 = f0_start + (f0_end - f0_start) * u;
                phase += f0 / fs;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                let excitation = pulse + 0.02 * white.sample(&mut rng);
                let y: f64 = formants
                    .iter_mut()
                    .zip([1.0, 0.6, 0.3])
                    .map(|(r, g)| g * r.tick(excitation))
                    .sum();
                let env = (PI * u).sin().powf(0.7);
                out[pos + i] = env * y;
            }
        }
        pos = end + (rng.random_range(0.03..0.25) * fs) as usize;
    }

    let active: Vec<f64> = out.iter().copied().filter(|v| v.abs() > 1e-9).collect();
    let rms = (active.iter().map(|v| v * v).sum::<f64>() / active.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.05 / rms);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    Pink,
    /// Sum of several independent speech-like talkers.
    Babble,
}

/// Noise of unit-scale RMS 0.05.
pub fn noise(kind: NoiseKind, seed: u64, seconds: f64, sample_rate: u32) -> Vec<f64> {
    let len = (seconds * sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white = Normal::new(0.0, 1.0).unwrap();
    let mut x: Vec<f64> = match kind {
        NoiseKind::White => (0..len).map(|_| white.sample(&mut rng)).collect(),
        NoiseKind::Pink => {
            // Paul Kellet's economy filter
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..len)
                .map(|_| {
                    let w = white.sample(&mut rng);
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
        NoiseKind::Babble => {
            let mut acc = vec![0.0; len];
            for talker in 0..6u64 {
                let s = speech_like(rng.random::<u64>() ^ talker, seconds, sample_rate);
                acc.iter_mut().zip(s).for_each(|(a, v)| *a += v);
            }
            acc
        }
    };
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.05 / rms);
    }
    x
}
