//! Choosing among the outputs of several arrays.

use crate::error::{Error, Result};
use crate::mixer::rms;

/// `10 log10(RMS(y) / RMS(y - x))`; `+inf` when `y == x`.
///
/// Note the amplitude (not power) ratio inside the logarithm.
pub fn estimated_snr(noisy: &[f64], enhanced: &[f64]) -> Result<f64> {
    if noisy.is_empty() || enhanced.is_empty() {
        return Err(Error::Input("estimated_snr needs non-empty signals".into()));
    }
    if noisy.len() != enhanced.len() {
        return Err(Error::Shape(format!(
            "noisy has {} samples, enhanced {}",
            noisy.len(),
            enhanced.len()
        )));
    }
    let residual: Vec<f64> = enhanced.iter().zip(noisy).map(|(y, x)| y - x).collect();
    let den = rms(&residual);
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (rms(enhanced) / den).log10())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub array_id: usize,
    pub sample_rate: u32,
    pub noisy: Vec<f64>,
    pub enhanced: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub array_id: usize,
    pub score: f64,
    pub enhanced: Vec<f64>,
}

/// The candidate with the highest [`estimated_snr`]; ties go to the lowest
/// `array_id`.
pub fn select_array(candidates: &[Candidate]) -> Result<Selected> {
    let first = candidates
        .first()
        .ok_or_else(|| Error::Input("no candidates to select from".into()))?;
    if candidates
        .iter()
        .any(|c| c.sample_rate != first.sample_rate)
    {
        return Err(Error::Format("candidates differ in sample rate".into()));
    }
    let mut best: Option<(f64, &Candidate)> = None;
    for c in candidates {
        let score = estimated_snr(&c.noisy, &c.enhanced)?;
        if score.is_nan() {
            return Err(Error::DegenerateSignal(format!(
                "array {} has an undefined score",
                c.array_id
            )));
        }
        best = match best {
            Some((s, b)) if s > score || (s == score && b.array_id < c.array_id) => Some((s, b)),
            _ => Some((score, c)),
        };
    }
    let (score, c) = best.expect("at least one candidate");
    Ok(Selected {
        array_id: c.array_id,
        score,
        enhanced: c.enhanced.clone(),
    })
}
