//! STFT analysis and weighted overlap-add synthesis.
//!
//! Frames of `frame_len` samples are zero-padded to `fft_size` before the
//! real FFT, so the bin count is `fft_size / 2 + 1` regardless of the frame
//! length. Two padding policies exist: centered (reflect, half a frame on the
//! left) for offline work and causal (zeros, `frame - hop` on the left) for
//! the streaming path.

mod dump;
mod streaming;

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{read_spectrogram, write_spectrogram};
pub use streaming::{StreamingIstft, StreamingStft};

/// Longest frame the real-time path accepts, in milliseconds.
pub const MAX_FRAME_MS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Hann analysis window, rectangular synthesis.
    Hann,
    /// Square-root Hann on both sides.
    SqrtHann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    Centered,
    Causal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub window: WindowKind,
    pub sample_rate: u32,
    pub padding: Padding,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            frame_ms: 20.0,
            hop_ms: 10.0,
            fft_size: 512,
            window: WindowKind::SqrtHann,
            sample_rate: 16_000,
            padding: Padding::Centered,
        }
    }
}

fn ms_to_samples(ms: f64, sample_rate: u32, what: &str) -> Result<usize> {
    let exact = ms * sample_rate as f64 / 1000.0;
    let n = exact.round();
    if !(n >= 1.0) || (exact - n).abs() > 1e-9 {
        return Err(Error::Configuration(format!(
            "{what} of {ms} ms is not a whole number of samples at {sample_rate} Hz"
        )));
    }
    Ok(n as usize)
}

impl StftConfig {
    /// Same framing with causal padding.
    pub fn causal(self) -> Self {
        StftConfig {
            padding: Padding::Causal,
            ..self
        }
    }

    pub fn frame_len(&self) -> usize {
        (self.frame_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Checks the framing invariants and the constant-overlap-add condition.
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Configuration("sample rate must be positive".into()));
        }
        let frame = ms_to_samples(self.frame_ms, self.sample_rate, "frame")?;
        let hop = ms_to_samples(self.hop_ms, self.sample_rate, "hop")?;
        if hop > frame {
            return Err(Error::Configuration(format!(
                "hop ({hop}) exceeds frame ({frame})"
            )));
        }
        if frame > self.fft_size {
            return Err(Error::Configuration(format!(
                "frame ({frame}) exceeds fft_size ({})",
                self.fft_size
            )));
        }
        if self.frame_ms > MAX_FRAME_MS {
            return Err(Error::Configuration(format!(
                "frame of {} ms exceeds the {MAX_FRAME_MS} ms limit",
                self.frame_ms
            )));
        }
        self.cola_gain().map(|_| ())
    }

    pub fn analysis_window(&self) -> Vec<f64> {
        let hann = periodic_hann(self.frame_len());
        match self.window {
            WindowKind::Hann => hann,
            WindowKind::SqrtHann => hann.into_iter().map(f64::sqrt).collect(),
        }
    }

    pub fn synthesis_window(&self) -> Vec<f64> {
        let n = self.frame_len();
        match self.window {
            WindowKind::Hann => vec![1.0; n],
            WindowKind::SqrtHann => periodic_hann(n).into_iter().map(f64::sqrt).collect(),
        }
    }

    /// The constant value of `sum_t wa(n - t hop) ws(n - t hop)`, or a
    /// configuration error when the sum is not constant.
    pub fn cola_gain(&self) -> Result<f64> {
        let frame = self.frame_len();
        let hop = self.hop();
        let wa = self.analysis_window();
        let ws = self.synthesis_window();
        let sums: Vec<f64> = (0..hop)
            .map(|r| (r..frame).step_by(hop).map(|n| wa[n] * ws[n]).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / hop as f64;
        let worst = sums.iter().fold(0.0f64, |m, s| m.max((s - mean).abs()));
        if mean <= 0.0 || worst > 1e-9 * mean {
            return Err(Error::Configuration(format!(
                "{:?} window with frame {frame} and hop {hop} is not constant-overlap-add",
                self.window
            )));
        }
        Ok(mean)
    }

    /// Samples of padding in front of the signal.
    pub fn pad_left(&self) -> usize {
        match self.padding {
            Padding::Centered => self.frame_len() / 2,
            Padding::Causal => self.frame_len() - self.hop(),
        }
    }

    /// Frames needed so that every signal sample is covered by all the frames
    /// that overlap it.
    pub fn num_frames(&self, signal_len: usize) -> usize {
        if signal_len == 0 {
            return 0;
        }
        (self.pad_left() + signal_len - 1) / self.hop() + 1
    }
}

/// Periodic Hann window (`N` in the denominator).
pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Complex STFT of one channel, bins along rows and frames along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Array2<Complex64>,
    pub config: StftConfig,
    /// Length of the analysed signal; `istft` returns this many samples.
    pub signal_len: usize,
    pub channel: usize,
}

impl Spectrogram {
    pub fn zeros(config: StftConfig, num_frames: usize, signal_len: usize) -> Self {
        Spectrogram {
            bins: Array2::zeros((config.num_bins(), num_frames)),
            config,
            signal_len,
            channel: 0,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.bins.ncols()
    }

    pub fn with_bins(&self, bins: Array2<Complex64>) -> Self {
        Spectrogram {
            bins,
            config: self.config,
            signal_len: self.signal_len,
            channel: self.channel,
        }
    }
}

/// Mirror index `i` (possibly out of range) into `0..len` without repeating
/// the edge sample.
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// A planned transform pair for one configuration. Cheap to clone.
#[derive(Clone)]
pub struct Stft {
    config: StftConfig,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    cola: f64,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("config", &self.config)
            .finish()
    }
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Stft {
            analysis: config.analysis_window(),
            synthesis: config.synthesis_window(),
            cola: config.cola_gain()?,
            forward: planner.plan_fft_forward(config.fft_size),
            inverse: planner.plan_fft_inverse(config.fft_size),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub(crate) fn synthesis_window(&self) -> &[f64] {
        &self.synthesis
    }

    pub(crate) fn cola(&self) -> f64 {
        self.cola
    }

    /// Windowed FFT of one frame of `frame_len` samples.
    pub(crate) fn transform_frame(
        &self,
        frame: &[f64],
        scratch: &mut [f64],
        out: &mut [Complex64],
    ) {
        scratch.fill(0.0);
        for ((s, x), w) in scratch.iter_mut().zip(frame).zip(&self.analysis) {
            *s = x * w;
        }
        self.forward
            .process(scratch, out)
            .expect("buffer sizes are fixed by the plan");
    }

    /// Inverse FFT of one column, scaled so it inverts `transform_frame`
    /// before windowing. Imaginary parts of DC and Nyquist are discarded.
    pub(crate) fn inverse_frame(&self, column: &mut [Complex64], out: &mut [f64]) {
        column[0].im = 0.0;
        if self.config.fft_size % 2 == 0 {
            if let Some(last) = column.last_mut() {
                last.im = 0.0;
            }
        }
        self.inverse
            .process(column, out)
            .expect("buffer sizes are fixed by the plan");
        let scale = 1.0 / self.config.fft_size as f64;
        for v in out.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward(&self, signal: &[f64]) -> Result<Spectrogram> {
        if signal.is_empty() {
            return Err(Error::Input("cannot analyse an empty signal".into()));
        }
        let frame = self.config.frame_len();
        let hop = self.config.hop();
        let pad_left = self.config.pad_left();
        let num_frames = self.config.num_frames(signal.len());
        let padded_len = (num_frames - 1) * hop + frame;
        let padded: Vec<f64> = (0..padded_len)
            .map(|p| {
                let i = p as isize - pad_left as isize;
                match self.config.padding {
                    Padding::Centered => signal[reflect_index(i, signal.len())],
                    Padding::Causal => {
                        if i >= 0 && (i as usize) < signal.len() {
                            signal[i as usize]
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect();

        let mut spec = Spectrogram::zeros(self.config, num_frames, signal.len());
        let mut scratch = vec![0.0; self.config.fft_size];
        let mut column = vec![Complex64::default(); self.config.num_bins()];
        for t in 0..num_frames {
            self.transform_frame(&padded[t * hop..t * hop + frame], &mut scratch, &mut column);
            spec.bins
                .column_mut(t)
                .assign(&ndarray::ArrayView1::from(&column));
        }
        Ok(spec)
    }

    pub fn inverse(&self, spec: &Spectrogram) -> Result<Vec<f64>> {
        if spec.config != self.config {
            return Err(Error::Configuration(
                "spectrogram was produced with a different STFT configuration".into(),
            ));
        }
        if spec.num_bins() != self.config.num_bins() {
            return Err(Error::Shape(format!(
                "expected {} bins, got {}",
                self.config.num_bins(),
                spec.num_bins()
            )));
        }
        let frame = self.config.frame_len();
        let hop = self.config.hop();
        let pad_left = self.config.pad_left();
        let num_frames = spec.num_frames();
        let padded_len = if num_frames == 0 {
            0
        } else {
            (num_frames - 1) * hop + frame
        };
        let mut acc = vec![0.0; padded_len.max(pad_left + spec.signal_len)];
        let mut column = vec![Complex64::default(); self.config.num_bins()];
        let mut time = vec![0.0; self.config.fft_size];
        for t in 0..num_frames {
            column
                .iter_mut()
                .zip(spec.bins.column(t))
                .for_each(|(c, v)| *c = *v);
            self.inverse_frame(&mut column, &mut time);
            for (n, (x, w)) in time[..frame].iter().zip(&self.synthesis).enumerate() {
                acc[t * hop + n] += x * w;
            }
        }
        let inv = 1.0 / self.cola;
        Ok(acc[pad_left..pad_left + spec.signal_len]
            .iter()
            .map(|v| v * inv)
            .collect())
    }
}

impl Stft {
    /// Adjoint of [`Stft::inverse`] with respect to the real and imaginary
    /// parts of the bins: given `dL/dy` for the `signal_len` output samples,
    /// returns `dL/dRe(Y) + i dL/dIm(Y)` for every bin of a `num_frames`
    /// spectrogram.
    pub fn inverse_adjoint(&self, grad: &[f64], num_frames: usize) -> Array2<Complex64> {
        let frame = self.config.frame_len();
        let hop = self.config.hop();
        let n = self.config.fft_size;
        let pad_left = self.config.pad_left() as isize;
        let nyq = self.config.num_bins() - 1;
        let mut out = Array2::zeros((self.config.num_bins(), num_frames));
        let mut buf = vec![0.0; n];
        let mut spec = vec![Complex64::default(); self.config.num_bins()];
        let inv_cola = 1.0 / self.cola;
        for t in 0..num_frames {
            buf.fill(0.0);
            let mut any = false;
            for (m, w) in self.synthesis.iter().enumerate().take(frame) {
                let i = (t * hop + m) as isize - pad_left;
                if i >= 0 && (i as usize) < grad.len() {
                    buf[m] = grad[i as usize] * w * inv_cola;
                    any = true;
                }
            }
            if !any {
                continue;
            }
            self.forward
                .process(&mut buf, &mut spec)
                .expect("buffer sizes are fixed by the plan");
            for (k, (o, s)) in out.column_mut(t).iter_mut().zip(&spec).enumerate() {
                let edge = k == 0 || (k == nyq && n % 2 == 0);
                let c = if edge { 1.0 } else { 2.0 } / n as f64;
                *o = if edge {
                    Complex64::new(c * s.re, 0.0)
                } else {
                    Complex64::new(c * s.re, c * s.im)
                };
            }
        }
        out
    }
}

pub fn stft(signal: &[f64], config: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*config)?.forward(signal)
}

pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    Stft::new(spec.config)?.inverse(spec)
}

/// STFT of every channel, with `channel` set to the channel index.
pub fn stft_multichannel(channels: &[Vec<f64>], config: &StftConfig) -> Result<Vec<Spectrogram>> {
    let engine = Stft::new(*config)?;
    channels
        .iter()
        .enumerate()
        .map(|(c, x)| {
            let mut s = engine.forward(x)?;
            s.channel = c;
            Ok(s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn six_seconds_gives_601_frames() {
        let cfg = StftConfig::default();
        let x = vec![0.0; 96_000];
        let s = stft(&x, &cfg).unwrap();
        assert_eq!(s.num_bins(), 257);
        assert_eq!(s.num_frames(), 601);
        // enumerate frame starts that begin before the end of the signal
        let padded_end = cfg.pad_left() + x.len();
        let starts = (0..).map(|t| t * cfg.hop()).take_while(|&s| s < padded_end);
        assert_eq!(starts.count(), 601);
        assert_eq!(6 * s.num_bins(), 1542);
    }

    #[test]
    fn zeros_in_zeros_out() {
        let s = stft(&[0.0; 1000], &StftConfig::default()).unwrap();
        assert!(s.bins.iter().all(|c| c.norm() == 0.0));
        assert!(istft(&s).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_peaks_at_expected_bin() {
        let x: Vec<f64> = (0..16000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 16000.0).sin())
            .collect();
        let s = stft(&x, &StftConfig::default()).unwrap();
        let col = s.bins.column(50);
        let k = (0..col.len())
            .max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm()))
            .unwrap();
        assert_eq!(k, 32);
    }

    #[test]
    fn round_trip_matrix() {
        for (frame_ms, hop_ms) in [(20.0, 10.0), (32.0, 16.0), (40.0, 20.0)] {
            for window in [WindowKind::SqrtHann, WindowKind::Hann] {
                for padding in [Padding::Centered, Padding::Causal] {
                    let frame = (frame_ms * 16.0) as usize;
                    let cfg = StftConfig {
                        frame_ms,
                        hop_ms,
                        fft_size: frame.next_power_of_two(),
                        window,
                        padding,
                        ..StftConfig::default()
                    };
                    let x = noise(12_345, 3);
                    let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
                    assert_eq!(y.len(), x.len());
                    assert!(rel_err(&y, &x) < 1e-6, "{cfg:?}");
                }
            }
        }
    }

    #[test]
    fn non_cola_config_rejected() {
        let cfg = StftConfig {
            frame_ms: 20.0,
            hop_ms: 15.0,
            ..StftConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Configuration(_))));
        let too_long = StftConfig {
            frame_ms: 64.0,
            hop_ms: 32.0,
            fft_size: 1024,
            ..StftConfig::default()
        };
        assert!(too_long.validate().is_err());
        let oversized = StftConfig {
            fft_size: 256,
            ..StftConfig::default()
        };
        assert!(oversized.validate().is_err());
    }

    #[test]
    fn parseval_with_window_compensation() {
        let cfg = StftConfig::default();
        // silent edges keep the reflected padding out of the energy balance
        let mut x = noise(8000, 9);
        x[..400].fill(0.0);
        x[7600..].fill(0.0);
        let s = stft(&x, &cfg).unwrap();
        let n = cfg.fft_size as f64;
        let nyq = cfg.num_bins() - 1;
        let spectral: f64 = s
            .bins
            .indexed_iter()
            .map(|((k, _), c)| {
                let w = if k == 0 || k == nyq { 1.0 } else { 2.0 };
                w * c.norm_sqr() / n
            })
            .sum();
        // sqrt-Hann squared is Hann, which overlaps to one at 50%
        let window_energy: f64 = cfg
            .analysis_window()
            .iter()
            .step_by(cfg.hop())
            .map(|w| w * w)
            .sum();
        let direct: f64 = x.iter().map(|v| v * v).sum();
        assert!(((spectral / window_energy) - direct).abs() / direct < 1e-6);
    }

    #[test]
    fn empty_signal_rejected() {
        assert!(matches!(
            stft(&[], &StftConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn short_signals_reflect() {
        let cfg = StftConfig::default();
        for len in [1, 2, 5, 159, 160, 161] {
            let x = noise(len, len as u64);
            let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
            assert!(rel_err(&y, &x) < 1e-9, "len {len}");
        }
    }

    #[test]
    fn inverse_adjoint_satisfies_inner_product_identity() {
        let cfg = StftConfig::default();
        let engine = Stft::new(cfg).unwrap();
        let len = 3000;
        let frames = cfg.num_frames(len);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut y = Spectrogram::zeros(cfg, frames, len);
        y.bins.mapv_inplace(|_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let g = noise(len, 22);
        let x = engine.inverse(&y).unwrap();
        let lhs: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
        let adj = engine.inverse_adjoint(&g, frames);
        let rhs: f64 = y
            .bins
            .iter()
            .zip(adj.iter())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        assert!(
            (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn reflect_index_folds() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-4, 5), 4);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(9, 5), 1);
        assert_eq!(reflect_index(-3, 1), 0);
    }
}
