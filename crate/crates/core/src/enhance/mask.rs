//! Complex ratio masks.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::Spectrogram;

/// Magnitude below which a noisy bin is treated as empty by [`ideal_crm`].
pub const IDEAL_MASK_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask {
    /// `F x T`
    pub real: Array2<f64>,
    /// `F x T`
    pub imag: Array2<f64>,
}

impl ComplexMask {
    pub fn zeros(num_bins: usize, num_frames: usize) -> Self {
        ComplexMask {
            real: Array2::zeros((num_bins, num_frames)),
            imag: Array2::zeros((num_bins, num_frames)),
        }
    }

    /// Constant mask `value` everywhere.
    pub fn constant(num_bins: usize, num_frames: usize, value: Complex64) -> Self {
        ComplexMask {
            real: Array2::from_elem((num_bins, num_frames), value.re),
            imag: Array2::from_elem((num_bins, num_frames), value.im),
        }
    }

    pub fn from_parts(real: Array2<f64>, imag: Array2<f64>) -> Result<Self> {
        if real.dim() != imag.dim() {
            return Err(Error::Shape(format!(
                "mask parts differ in shape: {:?} vs {:?}",
                real.dim(),
                imag.dim()
            )));
        }
        Ok(ComplexMask { real, imag })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.real.dim()
    }

    pub fn num_bins(&self) -> usize {
        self.real.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.real.ncols()
    }

    pub fn get(&self, k: usize, t: usize) -> Complex64 {
        Complex64::new(self.real[[k, t]], self.imag[[k, t]])
    }

    pub fn is_finite(&self) -> bool {
        self.real
            .iter()
            .chain(self.imag.iter())
            .all(|v| v.is_finite())
    }
}

/// `Y = M X` bin by bin, written out in real arithmetic:
/// `Y_r = M_r X_r - M_i X_i`, `Y_i = M_r X_i + M_i X_r`.
pub fn apply_mask(mask: &ComplexMask, x0: &Spectrogram) -> Result<Spectrogram> {
    if mask.dim() != x0.bins.dim() {
        return Err(Error::Shape(format!(
            "mask {:?} does not match spectrogram {:?}",
            mask.dim(),
            x0.bins.dim()
        )));
    }
    let mut out = Array2::<Complex64>::zeros(x0.bins.dim());
    Zip::from(&mut out)
        .and(&mask.real)
        .and(&mask.imag)
        .and(&x0.bins)
        .for_each(|y, &mr, &mi, x| {
            *y = Complex64::new(mr * x.re - mi * x.im, mr * x.im + mi * x.re);
        });
    Ok(x0.with_bins(out))
}

/// Ideal mask together with bookkeeping on the bins it had to alter.
#[derive(Debug, Clone)]
pub struct IdealMask {
    pub mask: ComplexMask,
    /// Bins where either part was clipped to `±clamp`.
    pub clamped: Array2<bool>,
    /// Bins where `|X| < eps` and the mask was set to zero.
    pub degenerate: Array2<bool>,
}

impl IdealMask {
    /// Fraction of bins that will not reconstruct the clean spectrum exactly.
    pub fn flagged_fraction(&self) -> f64 {
        let n = self.clamped.len();
        if n == 0 {
            return 0.0;
        }
        let flagged = Zip::from(&self.clamped)
            .and(&self.degenerate)
            .fold(0usize, |acc, &c, &d| acc + usize::from(c || d));
        flagged as f64 / n as f64
    }
}

/// `M = clamp(S / X)` per bin; bins where `|X| < eps` get `M = 0`.
/// Pass `f64::INFINITY` for an unclamped mask.
pub fn ideal_crm(clean: &Spectrogram, noisy: &Spectrogram, clamp: f64) -> Result<ComplexMask> {
    Ok(ideal_crm_flagged(clean, noisy, clamp, IDEAL_MASK_EPS)?.mask)
}

pub fn ideal_crm_flagged(
    clean: &Spectrogram,
    noisy: &Spectrogram,
    clamp: f64,
    eps: f64,
) -> Result<IdealMask> {
    if clean.bins.dim() != noisy.bins.dim() {
        return Err(Error::Shape(format!(
            "clean {:?} and noisy {:?} spectrograms differ in shape",
            clean.bins.dim(),
            noisy.bins.dim()
        )));
    }
    if clamp.is_nan() || clamp <= 0.0 {
        return Err(Error::Parameter(format!(
            "mask clamp {clamp} must be positive"
        )));
    }
    let (f, t) = clean.bins.dim();
    let mut mask = ComplexMask::zeros(f, t);
    let mut clamped = Array2::from_elem((f, t), false);
    let mut degenerate = Array2::from_elem((f, t), false);
    Zip::indexed(&clean.bins)
        .and(&noisy.bins)
        .for_each(|idx, s, x| {
            if x.norm() < eps {
                degenerate[idx] = true;
                return;
            }
            let m = s / x;
            let (re, im) = (m.re.clamp(-clamp, clamp), m.im.clamp(-clamp, clamp));
            clamped[idx] = re != m.re || im != m.im;
            mask.real[idx] = re;
            mask.imag[idx] = im;
        });
    Ok(IdealMask {
        mask,
        clamped,
        degenerate,
    })
}
