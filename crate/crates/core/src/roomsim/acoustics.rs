//! Reverberation-time relations for shoebox rooms.

use crate::geometry::Point3;

/// 24·ln(10), the constant in the Sabine/Eyring family of formulas.
const DECAY_CONSTANT: f64 = 55.262_042_231_857_1;

pub fn room_volume(dims: &Point3) -> f64 {
    dims.x * dims.y * dims.z
}

/// Total wall area.
pub fn room_surface(dims: &Point3) -> f64 {
    2.0 * (dims.x * dims.y + dims.y * dims.z + dims.x * dims.z)
}

/// Wall areas in the order `[x0, x1, y0, y1, z0, z1]`.
pub fn surface_areas(dims: &Point3) -> [f64; 6] {
    let yz = dims.y * dims.z;
    let xz = dims.x * dims.z;
    let xy = dims.x * dims.y;
    [yz, yz, xz, xz, xy, xy]
}

/// Area-weighted mean absorption.
pub fn mean_absorption(dims: &Point3, absorption: &[f64; 6]) -> f64 {
    let areas = surface_areas(dims);
    let total: f64 = areas.iter().sum();
    areas
        .iter()
        .zip(absorption)
        .map(|(s, a)| s * a)
        .sum::<f64>()
        / total
}

/// Eyring reverberation time in seconds. Infinite for a fully reflective room.
pub fn eyring_t60(dims: &Point3, mean_absorption: f64, speed_of_sound: f64) -> f64 {
    if mean_absorption <= 0.0 {
        return f64::INFINITY;
    }
    if mean_absorption >= 1.0 {
        return 0.0;
    }
    DECAY_CONSTANT * room_volume(dims)
        / (speed_of_sound * room_surface(dims) * -(1.0 - mean_absorption).ln())
}

/// Uniform absorption coefficient that gives `t60` under Eyring's formula.
pub fn eyring_absorption(dims: &Point3, t60: f64, speed_of_sound: f64) -> f64 {
    let exponent = DECAY_CONSTANT * room_volume(dims) / (speed_of_sound * room_surface(dims) * t60);
    1.0 - (-exponent).exp()
}

/// Schroeder backward-integrated energy decay curve in dB, normalized so the
/// first sample is 0 dB. Nonincreasing by construction.
pub fn schroeder_decay_db(rir: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = rir
        .iter()
        .rev()
        .map(|h| {
            acc += h * h;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return vec![f64::NEG_INFINITY; rir.len()];
    }
    edc.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

/// Reverberation time from the Schroeder curve, extrapolated from a
/// least-squares line fitted between `-5 dB` and `-5 - span_db`.
/// Returns `None` when the curve never reaches the end of the fit range.
pub fn schroeder_t60(rir: &[f64], sample_rate: f64, span_db: f64) -> Option<f64> {
    let edc = schroeder_decay_db(rir);
    let start = edc.iter().position(|&v| v <= -5.0)?;
    let stop = edc.iter().position(|&v| v <= -5.0 - span_db)?;
    if stop <= start + 1 {
        return None;
    }
    let n = (stop - start + 1) as f64;
    let (mut st, mut sv, mut stt, mut stv) = (0.0, 0.0, 0.0, 0.0);
    for (i, &v) in edc[start..=stop].iter().enumerate() {
        let t = (start + i) as f64 / sample_rate;
        st += t;
        sv += v;
        stt += t * t;
        stv += t * v;
    }
    let slope = (n * stv - st * sv) / (n * stt - st * st);
    (slope < 0.0).then(|| -60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eyring_inversion_round_trips() {
        let dims = Point3::new(4.0, 5.0, 3.0);
        for t60 in [0.2, 0.45, 1.0] {
            let a = eyring_absorption(&dims, t60, 340.0);
            assert!(a > 0.0 && a < 1.0);
            assert!((eyring_t60(&dims, a, 340.0) - t60).abs() < 1e-12);
        }
    }

    #[test]
    fn eyring_limits() {
        let dims = Point3::new(4.0, 5.0, 3.0);
        assert!(eyring_t60(&dims, 0.0, 340.0).is_infinite());
        assert_eq!(eyring_t60(&dims, 1.0, 340.0), 0.0);
    }

    #[test]
    fn schroeder_recovers_exponential_decay() {
        let fs = 16000.0;
        let t60 = 0.5;
        // amplitude decays 60 dB over t60 => energy decays 60 dB as well
        let rate = 3.0 * std::f64::consts::LN_10 / t60;
        let rir: Vec<f64> = (0..16000)
            .map(|n| {
                let t = n as f64 / fs;
                (-rate * t).exp() * if n % 2 == 0 { 1.0 } else { -1.0 }
            })
            .collect();
        let est = schroeder_t60(&rir, fs, 20.0).unwrap();
        assert!((est - t60).abs() / t60 < 0.02, "{est}");
        let edc = schroeder_decay_db(&rir);
        assert!(edc.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn mean_absorption_is_area_weighted() {
        let dims = Point3::new(2.0, 3.0, 4.0);
        assert!((mean_absorption(&dims, &[0.3; 6]) - 0.3).abs() < 1e-15);
        let areas = surface_areas(&dims);
        let a = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let expected = areas[0] / room_surface(&dims);
        assert!((mean_absorption(&dims, &a) - expected).abs() < 1e-15);
    }
}
