use realfft::RealFftPlanner;

use super::clip::{ChannelMap, MultichannelClip, Provenance};
use crate::error::{Error, Result};
use crate::roomsim::Rir;

/// Linear convolution through one zero-padded real FFT per operand.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    MultiConvolver::new(a, b.len()).convolve(b)
}

/// Convolves one fixed signal with several kernels of bounded length,
/// reusing the signal's spectrum.
pub struct MultiConvolver {
    n: usize,
    signal_len: usize,
    max_kernel_len: usize,
    spectrum: Vec<num_complex::Complex64>,
    planner: RealFftPlanner<f64>,
}

impl MultiConvolver {
    pub fn new(signal: &[f64], max_kernel_len: usize) -> Self {
        let max_kernel_len = max_kernel_len.max(1);
        let n = (signal.len() + max_kernel_len - 1).next_power_of_two();
        let mut planner = RealFftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let mut buf = vec![0.0; n];
        buf[..signal.len()].copy_from_slice(signal);
        let mut spectrum = fwd.make_output_vec();
        fwd.process(&mut buf, &mut spectrum)
            .expect("buffer sizes are fixed by the plan");
        MultiConvolver {
            n,
            signal_len: signal.len(),
            max_kernel_len,
            spectrum,
            planner,
        }
    }

    /// Returns `signal * kernel`, `signal.len() + kernel.len() - 1` samples.
    ///
    /// # Panics
    /// If `kernel` is empty or longer than the length given to [`Self::new`].
    pub fn convolve(&mut self, kernel: &[f64]) -> Vec<f64> {
        assert!(
            !kernel.is_empty() && kernel.len() <= self.max_kernel_len,
            "kernel length {} outside 1..={}",
            kernel.len(),
            self.max_kernel_len
        );
        let fwd = self.planner.plan_fft_forward(self.n);
        let inv = self.planner.plan_fft_inverse(self.n);
        let mut buf = vec![0.0; self.n];
        buf[..kernel.len()].copy_from_slice(kernel);
        let mut spec = fwd.make_output_vec();
        fwd.process(&mut buf, &mut spec)
            .expect("buffer sizes are fixed by the plan");
        for (k, s) in spec.iter_mut().zip(&self.spectrum) {
            *k *= s;
        }
        spec[0].im = 0.0;
        if let Some(last) = spec.last_mut() {
            last.im = 0.0;
        }
        inv.process(&mut spec, &mut buf)
            .expect("buffer sizes are fixed by the plan");
        let scale = 1.0 / self.n as f64;
        buf.truncate(self.signal_len + kernel.len() - 1);
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }
}

/// Convolves a mono signal with every channel of `rir`.
///
/// The output has `dry.len() + rir.len() - 1` samples, or exactly
/// `output_len` samples (truncated or zero-extended) when given.
pub fn convolve_multichannel(
    dry: &[f64],
    dry_rate: u32,
    rir: &Rir,
    output_len: Option<usize>,
) -> Result<MultichannelClip> {
    if dry_rate != rir.sample_rate {
        return Err(Error::Format(format!(
            "signal at {dry_rate} Hz cannot be convolved with a {} Hz RIR",
            rir.sample_rate
        )));
    }
    if dry.is_empty() || rir.is_empty() {
        return Err(Error::Input(
            "convolution operands must be non-empty".into(),
        ));
    }
    let mut conv = MultiConvolver::new(dry, rir.len());
    let samples = rir
        .samples_per_mic
        .iter()
        .map(|h| {
            let mut y = conv.convolve(h);
            if let Some(n) = output_len {
                y.resize(n, 0.0);
            }
            y
        })
        .collect();
    Ok(MultichannelClip {
        channel_map: ChannelMap::identity(rir.num_mics()),
        samples,
        sample_rate: dry_rate,
        provenance: Provenance::default(),
    })
}
