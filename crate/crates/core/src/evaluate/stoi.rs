//! Short-time objective intelligibility (STOI) and its extended variant.
//!
//! The processing chain follows the common reference implementation: resample
//! to 10 kHz with a Kaiser-windowed sinc, drop frames more than 40 dB below
//! the loudest clean frame, 256-sample Hann frames with 50% overlap, 15
//! one-third-octave bands from 150 Hz, and 30-frame analysis segments.

use std::sync::OnceLock;

use num_complex::Complex64;
use realfft::RealFftPlanner;

use crate::error::{Error, Result};

const FS: u32 = 10_000;
const FRAME: usize = 256;
const NFFT: usize = 512;
const NUM_BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    let m = (len - 1) as f64;
    let denom = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Normalized anti-aliasing filter for a `p/q` rate change (60 dB
/// rejection, transition width a tenth of the stopband edge).
fn resample_filter(p: usize, q: usize) -> Vec<f64> {
    let stop = 1.0 / (2.0 * p.max(q) as f64);
    let roll_off = stop / 10.0;
    let rejection_db = 60.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);
    let window = kaiser((2 * half + 1) as usize, beta);
    let h: Vec<f64> = (-half..=half)
        .zip(&window)
        .map(|(t, w)| w * 2.0 * p as f64 * stop * sinc(2.0 * stop * t as f64))
        .collect();
    let total: f64 = h.iter().sum();
    h.into_iter().map(|v| v / total).collect()
}

/// Polyphase rational resampling by `up/down` with a centered filter and
/// zero padding outside the signal.
pub(crate) fn resample_rational(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    let g = gcd(from as usize, to as usize);
    let (up, down) = (to as usize / g, from as usize / g);
    if up == 1 && down == 1 {
        return x.to_vec();
    }
    let h = resample_filter(up, down);
    let half = (h.len() - 1) / 2;
    let n_out = (x.len() * up).div_ceil(down);
    (0..n_out)
        .map(|m| {
            // y[m] = up * sum_j h[j] xu[m down + half - j], xu[i] = x[i / up] on multiples of up
            let center = m * down + half;
            let j_min = center.saturating_sub((x.len() - 1) * up);
            let mut j = j_min + (center - j_min) % up;
            let mut acc = 0.0;
            while j < h.len() && j <= center {
                acc += h[j] * x[(center - j) / up];
                j += up;
            }
            acc * up as f64
        })
        .collect()
}

/// Symmetric Hann window without the zero endpoints.
fn hann_inner(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i + 1) as f64 / (n + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize, frame: usize, hop: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(frame)).step_by(hop)
}

fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hop = FRAME / 2;
    let w = hann_inner(FRAME);
    let starts: Vec<usize> = frame_starts(x.len(), FRAME, hop).collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = x[s..s + FRAME]
                .iter()
                .zip(&w)
                .map(|(v, w)| (v * w).powi(2))
                .sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    let out_len = if kept.is_empty() {
        0
    } else {
        (kept.len() - 1) * hop + FRAME
    };
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (k, &s) in kept.iter().enumerate() {
        for n in 0..FRAME {
            xs[k * hop + n] += w[n] * x[s + n];
            ys[k * hop + n] += w[n] * y[s + n];
        }
    }
    (xs, ys)
}

fn band_matrix() -> &'static Vec<(usize, usize)> {
    static BANDS: OnceLock<Vec<(usize, usize)>> = OnceLock::new();
    BANDS.get_or_init(|| {
        let freqs: Vec<f64> = (0..=NFFT / 2)
            .map(|i| i as f64 * FS as f64 / NFFT as f64)
            .collect();
        let nearest = |target: f64| {
            let mut best = 0;
            for (i, f) in freqs.iter().enumerate() {
                if (f - target).powi(2) < (freqs[best] - target).powi(2) {
                    best = i;
                }
            }
            best
        };
        (0..NUM_BANDS)
            .map(|k| {
                let k = k as f64;
                let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
                let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
                (nearest(lo), nearest(hi))
            })
            .collect()
    })
}

/// Third-octave band envelopes, `bands x frames`.
fn band_envelopes(x: &[f64]) -> Vec<Vec<f64>> {
    let hop = FRAME / 2;
    let w = hann_inner(FRAME);
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(NFFT);
    let mut buf = vec![0.0; NFFT];
    let mut spec = vec![Complex64::default(); NFFT / 2 + 1];
    let bands = band_matrix();
    let starts: Vec<usize> = frame_starts(x.len(), FRAME, hop).collect();
    let mut out = vec![vec![0.0; starts.len()]; NUM_BANDS];
    for (t, &s) in starts.iter().enumerate() {
        buf.fill(0.0);
        for n in 0..FRAME {
            buf[n] = w[n] * x[s + n];
        }
        fft.process(&mut buf, &mut spec).expect("fixed sizes");
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            out[b][t] = spec[lo..hi]
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                .sqrt();
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Intelligibility of `estimate` against the clean `reference`. Signals are
/// resampled internally from `sample_rate` to 10 kHz.
pub fn stoi(estimate: &[f64], reference: &[f64], sample_rate: u32, extended: bool) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if sample_rate == 0 {
        return Err(Error::Parameter("sample rate must be positive".into()));
    }
    let x = resample_rational(reference, sample_rate, FS);
    let y = resample_rational(estimate, sample_rate, FS);
    let (x, y) = remove_silent_frames(&x, &y);
    let xe = band_envelopes(&x);
    let ye = band_envelopes(&y);
    let frames = xe[0].len();
    if frames < SEGMENT {
        return Err(Error::Input(format!(
            "only {frames} non-silent frames; at least {SEGMENT} are needed"
        )));
    }
    let num_segments = frames - SEGMENT + 1;
    let mut total = 0.0;
    let mut xs = vec![vec![0.0; SEGMENT]; NUM_BANDS];
    let mut ys = vec![vec![0.0; SEGMENT]; NUM_BANDS];
    for m in 0..num_segments {
        for b in 0..NUM_BANDS {
            xs[b].copy_from_slice(&xe[b][m..m + SEGMENT]);
            ys[b].copy_from_slice(&ye[b][m..m + SEGMENT]);
        }
        total += if extended {
            segment_score_extended(&mut xs, &mut ys)
        } else {
            segment_score(&mut xs, &mut ys)
        };
    }
    let per_segment = if extended { 1.0 } else { NUM_BANDS as f64 };
    Ok(total / (num_segments as f64 * per_segment))
}

/// Sum over bands of clipped, normalized correlations.
fn segment_score(xs: &mut [Vec<f64>], ys: &mut [Vec<f64>]) -> f64 {
    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let mut sum = 0.0;
    for (x, y) in xs.iter_mut().zip(ys.iter_mut()) {
        let alpha = norm(x) / (norm(y) + EPS);
        for (yv, xv) in y.iter_mut().zip(x.iter()) {
            *yv = (*yv * alpha).min(xv * clip);
        }
        center(y);
        center(x);
        let (ny, nx) = (norm(y) + EPS, norm(x) + EPS);
        sum += y
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a / ny) * (b / nx))
            .sum::<f64>();
    }
    sum
}

/// Row- then column-normalized correlation, divided by the segment length.
fn segment_score_extended(xs: &mut [Vec<f64>], ys: &mut [Vec<f64>]) -> f64 {
    for m in [&mut *xs, &mut *ys] {
        for row in m.iter_mut() {
            center(row);
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        for t in 0..SEGMENT {
            let mean = m.iter().map(|r| r[t]).sum::<f64>() / NUM_BANDS as f64;
            m.iter_mut().for_each(|r| r[t] -= mean);
            let n = m.iter().map(|r| r[t] * r[t]).sum::<f64>().sqrt();
            if n > 0.0 {
                m.iter_mut().for_each(|r| r[t] /= n);
            }
        }
    }
    xs.iter()
        .zip(ys.iter())
        .map(|(x, y)| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
        .sum::<f64>()
        / SEGMENT as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_matches_known_values() {
        assert_eq!(bessel_i0(0.0), 1.0);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-11);
    }

    #[test]
    fn band_edges_cover_expected_bins() {
        let bands = band_matrix();
        assert_eq!(bands.len(), 15);
        // 150 Hz band: edges 133.6 and 168.4 Hz at 19.53 Hz per bin
        assert_eq!(bands[0], (7, 9));
        assert!(bands.windows(2).all(|w| w[1].0 >= w[0].0));
        assert!(bands[14].1 <= 257);
    }

    #[test]
    fn resampler_preserves_a_low_tone() {
        let x: Vec<f64> = (0..16000)
            .map(|i| (2.0 * std::f64::consts::PI * 300.0 * i as f64 / 16000.0).sin())
            .collect();
        let y = resample_rational(&x, 16000, 10000);
        assert_eq!(y.len(), 10000);
        for (m, v) in y.iter().enumerate().skip(500).take(9000) {
            let expected = (2.0 * std::f64::consts::PI * 300.0 * m as f64 / 10000.0).sin();
            assert!((v - expected).abs() < 2e-3, "{m}: {v} vs {expected}");
        }
    }

    #[test]
    fn too_short_is_an_error() {
        let x: Vec<f64> = (0..3000).map(|i| (i as f64 * 0.1).sin()).collect();
        assert!(matches!(stoi(&x, &x, 16000, false), Err(Error::Input(_))));
        assert!(matches!(
            stoi(&x[..10], &x, 16000, false),
            Err(Error::Shape(_))
        ));
    }
}
