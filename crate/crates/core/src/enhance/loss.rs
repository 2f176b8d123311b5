//! Training objectives and their gradients.

use ndarray::Zip;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mask::{apply_mask, ComplexMask};
use crate::error::Result;
use crate::spectral::{Spectrogram, Stft};

const LOSS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Negative scale-invariant SNR of the resynthesized waveform.
    #[default]
    NegSiSnr,
    /// Mean squared error against the clamped ideal mask.
    MaskMse,
}

/// Negative Si-SNR in dB and its gradient with respect to `estimate`.
pub fn neg_sisnr_with_grad(estimate: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = estimate.len() as f64;
    let me = estimate.iter().sum::<f64>() / n;
    let ms = target.iter().sum::<f64>() / n;
    let e: Vec<f64> = estimate.iter().map(|v| v - me).collect();
    let s: Vec<f64> = target.iter().map(|v| v - ms).collect();
    let a: f64 = e.iter().zip(&s).map(|(x, y)| x * y).sum();
    let ss: f64 = s.iter().map(|v| v * v).sum::<f64>() + LOSS_EPS;
    let proj = a / ss;
    let p = a * proj;
    let resid: Vec<f64> = e.iter().zip(&s).map(|(x, y)| x - proj * y).collect();
    let nn: f64 = resid.iter().map(|v| v * v).sum();
    let k = 10.0 / std::f64::consts::LN_10;
    let loss = -k * ((p + LOSS_EPS).ln() - (nn + LOSS_EPS).ln());
    // dP/de = 2 proj s,  dN/de = 2 (e - proj s) = 2 resid
    let cp = -k / (p + LOSS_EPS);
    let cn = k / (nn + LOSS_EPS);
    let mut g: Vec<f64> = s
        .iter()
        .zip(&resid)
        .map(|(sv, r)| cp * 2.0 * proj * sv + cn * 2.0 * r)
        .collect();
    let mean = g.iter().sum::<f64>() / n;
    g.iter_mut().for_each(|v| *v -= mean);
    (loss, g)
}

/// Chain rule through `Y = M X`: converts `dL/dY` into `dL/dM`.
pub fn mask_grad_from_spectrum(
    grad_y: &ndarray::Array2<Complex64>,
    x0: &Spectrogram,
) -> ComplexMask {
    let mut out = ComplexMask::zeros(x0.num_bins(), x0.num_frames());
    Zip::from(&mut out.real)
        .and(&mut out.imag)
        .and(grad_y)
        .and(&x0.bins)
        .for_each(|gr, gi, g, x| {
            *gr = g.re * x.re + g.im * x.im;
            *gi = -g.re * x.im + g.im * x.re;
        });
    out
}

/// Loss and `dL/dM` for one utterance under the Si-SNR objective.
pub fn sisnr_loss(
    mask: &ComplexMask,
    x0: &Spectrogram,
    target: &[f64],
    stft: &Stft,
) -> Result<(f64, ComplexMask)> {
    let y = stft.inverse(&apply_mask(mask, x0)?)?;
    let (loss, dy) = neg_sisnr_with_grad(&y, target);
    let gy = stft.inverse_adjoint(&dy, x0.num_frames());
    Ok((loss, mask_grad_from_spectrum(&gy, x0)))
}

/// Mean over bins of `|M - M*|^2` and its gradient.
pub fn mask_mse_loss(mask: &ComplexMask, ideal: &ComplexMask) -> (f64, ComplexMask) {
    let count = (mask.real.len()).max(1) as f64;
    let dr = &mask.real - &ideal.real;
    let di = &mask.imag - &ideal.imag;
    let loss =
        (dr.iter().map(|v| v * v).sum::<f64>() + di.iter().map(|v| v * v).sum::<f64>()) / count;
    let scale = 2.0 / count;
    (
        loss,
        ComplexMask {
            real: dr * scale,
            imag: di * scale,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sisnr_direct(e: &[f64], s: &[f64]) -> f64 {
        neg_sisnr_with_grad(e, s).0
    }

    #[test]
    fn sisnr_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: Vec<f64> = s.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let (_, g) = neg_sisnr_with_grad(&e, &s);
        for i in [0, 5, 31, 63] {
            let h = 1e-6;
            let mut ep = e.clone();
            let mut em = e.clone();
            ep[i] += h;
            em[i] -= h;
            let fd = (sisnr_direct(&ep, &s) - sisnr_direct(&em, &s)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()),
                "{i}: {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn sisnr_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: Vec<f64> = s.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        let e3: Vec<f64> = e.iter().map(|v| 3.0 * v).collect();
        // only the stabilizing epsilon breaks exact invariance
        assert!((sisnr_direct(&e, &s) - sisnr_direct(&e3, &s)).abs() < 1e-6);
    }

    #[test]
    fn mask_mse_zero_at_target() {
        let m = ComplexMask::constant(3, 4, Complex64::new(0.5, -0.2));
        let (l, g) = mask_mse_loss(&m, &m);
        assert_eq!(l, 0.0);
        assert!(g.real.iter().all(|&v| v == 0.0));
    }
}
