//! Shoebox image-source simulation.
//!
//! Walls are rigid and frequency independent; each wall reflects with
//! amplitude `sqrt(1 - alpha)`. Every image contributes a Hann-windowed sinc
//! fractional delay of [`FRAC_DELAY_TAPS`] taps centred on its exact arrival
//! time, scaled by `1 / (4 pi d)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::acoustics;
use super::sampler::RoomScenario;
use crate::error::{Error, Result};
use crate::geometry::{place_array_in_room, ArrayGeometry, Point3};

pub const FRAC_DELAY_TAPS: usize = 81;
const HALF_TAPS: i64 = (FRAC_DELAY_TAPS as i64 - 1) / 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RirConfig {
    /// Highest total reflection order; `None` keeps every image that
    /// arrives within the impulse-response length.
    pub max_order: Option<u32>,
    pub speed_of_sound: f64,
    pub sample_rate: u32,
    /// Fixed length in samples; by default derived from the room's T60.
    pub length: Option<usize>,
    /// Tail added after the T60 when deriving the length, seconds.
    pub tail_seconds: f64,
    /// Upper bound on the derived length, seconds.
    pub max_seconds: f64,
    /// Cutoff of the Allen–Berkley DC-removal high-pass, Hz. `None` leaves
    /// the raw image sum.
    pub highpass_hz: Option<f64>,
}

impl Default for RirConfig {
    fn default() -> Self {
        RirConfig {
            max_order: None,
            speed_of_sound: 340.0,
            sample_rate: 16_000,
            length: None,
            tail_seconds: 0.05,
            max_seconds: 2.0,
            highpass_hz: Some(100.0),
        }
    }
}

/// Per-microphone room impulse responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub samples_per_mic: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl Rir {
    pub fn num_mics(&self) -> usize {
        self.samples_per_mic.len()
    }

    pub fn len(&self) -> usize {
        self.samples_per_mic.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A Kronecker delta on every channel.
    pub fn identity(num_mics: usize, sample_rate: u32) -> Self {
        Rir {
            samples_per_mic: vec![vec![1.0]; num_mics],
            sample_rate,
        }
    }
}

/// Length in samples for a room, per the config's length policy.
pub fn rir_length(config: &RirConfig, dims: &Point3, absorption: &[f64; 6]) -> Result<usize> {
    if let Some(len) = config.length {
        if len == 0 {
            return Err(Error::Configuration("RIR length must be positive".into()));
        }
        return Ok(len);
    }
    let mean = acoustics::mean_absorption(dims, absorption);
    let t60 = acoustics::eyring_t60(dims, mean, config.speed_of_sound);
    let seconds = (t60 + config.tail_seconds).min(config.max_seconds);
    Ok(((seconds * config.sample_rate as f64).ceil() as usize).max(1))
}

/// Simulates the impulse responses from source `source_index` of the
/// scenario to every microphone of `geometry` placed at the scenario's pose.
pub fn simulate_rir(
    scenario: &RoomScenario,
    geometry: &ArrayGeometry,
    source_index: usize,
    config: &RirConfig,
) -> Result<Rir> {
    let source = *scenario.source_positions.get(source_index).ok_or_else(|| {
        Error::Parameter(format!(
            "source index {source_index} out of range ({} sources)",
            scenario.source_positions.len()
        ))
    })?;
    let dims = scenario.room_dims;
    if !source.strictly_inside(&dims) {
        return Err(Error::Placement(format!(
            "source {:?} lies outside room {:?}",
            source.as_array(),
            dims.as_array()
        )));
    }
    let mics = place_array_in_room(geometry, &scenario.array_pose, &dims)?;
    let absorption = scenario
        .absorption
        .coefficients(&dims, config.speed_of_sound)?;
    if config.max_order.is_none() && absorption.iter().all(|&a| a == 0.0) {
        return Err(Error::Configuration(
            "zero absorption on every wall needs a finite max_order".into(),
        ));
    }
    if !(config.speed_of_sound > 0.0) || config.sample_rate == 0 {
        return Err(Error::Configuration(
            "speed of sound and sample rate must be positive".into(),
        ));
    }
    let length = rir_length(config, &dims, &absorption)?;
    let reflection = absorption.map(|a| (1.0 - a).sqrt());

    if let Some(fc) = config.highpass_hz {
        if !(fc > 0.0 && fc < config.sample_rate as f64 / 2.0) {
            return Err(Error::Configuration(format!(
                "high-pass cutoff {fc} Hz must lie in (0, fs/2)"
            )));
        }
    }

    let samples_per_mic = mics
        .par_iter()
        .map(|mic| {
            let mut h = image_response(&dims, &reflection, &source, mic, config, length);
            if let Some(fc) = config.highpass_hz {
                allen_berkley_highpass(&mut h, fc, config.sample_rate as f64);
            }
            h
        })
        .collect();
    Ok(Rir {
        samples_per_mic,
        sample_rate: config.sample_rate,
    })
}

/// Hann window of `FRAC_DELAY_TAPS` taps indexed by offset from the centre.
fn frac_delay_window() -> [f64; FRAC_DELAY_TAPS] {
    let mut w = [0.0; FRAC_DELAY_TAPS];
    let n = (FRAC_DELAY_TAPS - 1) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos();
    }
    w
}

fn image_response(
    dims: &Point3,
    beta: &[f64; 6],
    source: &Point3,
    mic: &Point3,
    config: &RirConfig,
    length: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; length];
    let window = frac_delay_window();
    let fs = config.sample_rate as f64;
    let samples_per_meter = fs / config.speed_of_sound;
    // Images whose main lobe starts past the end cannot contribute.
    let max_dist = (length as f64 + HALF_TAPS as f64) / samples_per_meter;
    let axis_bound = |l: f64| (max_dist / (2.0 * l)).ceil() as i64 + 1;
    let order_bound = config.max_order.map(|o| (o as i64 + 1) / 2 + 1);
    let bound = |l: f64| match order_bound {
        Some(b) => axis_bound(l).min(b),
        None => axis_bound(l),
    };
    let (nx_max, ny_max, nz_max) = (bound(dims.x), bound(dims.y), bound(dims.z));

    let src = source.as_array();
    let rcv = mic.as_array();
    let len = [dims.x, dims.y, dims.z];

    for nx in -nx_max..=nx_max {
        for qx in 0..2i64 {
            let (dx, ox, bx) = axis_term(0, nx, qx, &src, &rcv, &len, beta);
            for ny in -ny_max..=ny_max {
                for qy in 0..2i64 {
                    let (dy, oy, by) = axis_term(1, ny, qy, &src, &rcv, &len, beta);
                    let dxy2 = dx * dx + dy * dy;
                    if dxy2.sqrt() > max_dist {
                        continue;
                    }
                    for nz in -nz_max..=nz_max {
                        for qz in 0..2i64 {
                            let (dz, oz, bz) = axis_term(2, nz, qz, &src, &rcv, &len, beta);
                            if let Some(max) = config.max_order {
                                if ox + oy + oz > max as i64 {
                                    continue;
                                }
                            }
                            let dist = (dxy2 + dz * dz).sqrt();
                            if dist > max_dist {
                                continue;
                            }
                            let gain = bx * by * bz / (4.0 * PI * dist.max(1e-9));
                            if gain == 0.0 {
                                continue;
                            }
                            add_fractional_impulse(
                                &mut out,
                                dist * samples_per_meter,
                                gain,
                                &window,
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

/// Displacement along one axis, reflection count, and the product of wall
/// reflection coefficients for image index `n` and parity `q`.
#[inline]
fn axis_term(
    axis: usize,
    n: i64,
    q: i64,
    src: &[f64; 3],
    rcv: &[f64; 3],
    len: &[f64; 3],
    beta: &[f64; 6],
) -> (f64, i64, f64) {
    let image = (1 - 2 * q) as f64 * src[axis] + 2.0 * n as f64 * len[axis];
    let low = (n - q).abs();
    let high = n.abs();
    let gain = beta[2 * axis].powi(low as i32) * beta[2 * axis + 1].powi(high as i32);
    (image - rcv[axis], low + high, gain)
}

/// Adds `gain * w(k) * sinc(k - frac)` around `delay` samples.
#[inline]
fn add_fractional_impulse(out: &mut [f64], delay: f64, gain: f64, window: &[f64; FRAC_DELAY_TAPS]) {
    let base = delay.floor();
    let frac = delay - base;
    let base = base as i64;
    let len = out.len() as i64;
    if frac < 1e-12 {
        if (0..len).contains(&base) {
            out[base as usize] += gain;
        }
        return;
    }
    // sin(pi (k - f)) = -(-1)^k sin(pi f), so one sine per image suffices.
    let s = (PI * frac).sin() / PI;
    let lo = (-HALF_TAPS).max(-base);
    let hi = HALF_TAPS.min(len - 1 - base);
    for k in lo..=hi {
        let sign = if k & 1 == 0 { -1.0 } else { 1.0 };
        let sinc = sign * s / (k as f64 - frac);
        out[(base + k) as usize] += gain * window[(k + HALF_TAPS) as usize] * sinc;
    }
}

/// In-place second-order high-pass used by Allen and Berkley to remove the
/// low-frequency build-up of the all-positive image sum.
pub fn allen_berkley_highpass(h: &mut [f64], cutoff_hz: f64, sample_rate: f64) {
    let w = 2.0 * PI * cutoff_hz / sample_rate;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in h.iter_mut() {
        let y0 = b1 * y1 + b2 * y2 + *v;
        *v = y0 + a1 * y1 + r1 * y2;
        y2 = y1;
        y1 = y0;
    }
}

/// Index of the direct-path arrival: the first local maximum of `|h|` that
/// reaches a quarter of the channel's peak magnitude.
pub fn arrival_index(channel: &[f64]) -> Option<usize> {
    let peak = channel.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return None;
    }
    let threshold = 0.25 * peak;
    let mag = |i: usize| channel[i].abs();
    (0..channel.len()).find(|&i| {
        mag(i) >= threshold
            && (i == 0 || mag(i) >= mag(i - 1))
            && (i + 1 == channel.len() || mag(i) >= mag(i + 1))
    })
}
