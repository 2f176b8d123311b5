use crate::error::{Error, Result};

/// Reports never exceed this magnitude.
pub const SISNR_CAP_DB: f64 = 60.0;

/// Scale-invariant SNR in dB, clamped to `±SISNR_CAP_DB`. Both signals are
/// made zero-mean first.
pub fn sisnr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Input("empty signals".into()));
    }
    let n = reference.len() as f64;
    let me = estimate.iter().sum::<f64>() / n;
    let mr = reference.iter().sum::<f64>() / n;
    let s: Vec<f64> = reference.iter().map(|v| v - mr).collect();
    let ss: f64 = s.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return Err(Error::Input("reference is zero after mean removal".into()));
    }
    let a: f64 = estimate.iter().zip(&s).map(|(e, r)| (e - me) * r).sum();
    let alpha = a / ss;
    let (mut target, mut noise) = (0.0, 0.0);
    for (e, r) in estimate.iter().zip(&s) {
        let t = alpha * r;
        target += t * t;
        noise += (e - me - t).powi(2);
    }
    let db = if noise == 0.0 {
        if target == 0.0 {
            -SISNR_CAP_DB
        } else {
            SISNR_CAP_DB
        }
    } else if target == 0.0 {
        -SISNR_CAP_DB
    } else {
        10.0 * (target / noise).log10()
    };
    Ok(db.clamp(-SISNR_CAP_DB, SISNR_CAP_DB))
}
