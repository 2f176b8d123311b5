//! Energy-based speech-level estimate for screening source utterances.

/// Frame length for the energy detector, seconds.
const FRAME_SECONDS: f64 = 0.02;

/// Estimated SNR of a single-channel recording in dB.
///
/// Frame energies are split at the midpoint (in dB) between their 10th and
/// 90th percentiles; the ratio of the mean active-frame power to the mean
/// inactive-frame power is returned. `None` when the signal is too short to
/// hold two frames or is silent. Returns `+inf` for digitally silent pauses.
pub fn estimate_speech_snr_db(signal: &[f64], sample_rate: u32) -> Option<f64> {
    let frame = ((FRAME_SECONDS * sample_rate as f64) as usize).max(1);
    let mut powers: Vec<f64> = signal
        .chunks_exact(frame)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / frame as f64)
        .collect();
    if powers.len() < 2 || powers.iter().all(|&p| p == 0.0) {
        return None;
    }
    let db = |p: f64| 10.0 * p.max(1e-20).log10();
    let mut sorted = powers.clone();
    sorted.sort_by(f64::total_cmp);
    let pct = |q: f64| sorted[((sorted.len() - 1) as f64 * q).round() as usize];
    let threshold = 0.5 * (db(pct(0.1)) + db(pct(0.9)));
    let (active, inactive): (Vec<f64>, Vec<f64>) =
        powers.drain(..).partition(|&p| db(p) > threshold);
    if active.is_empty() || inactive.is_empty() {
        return Some(0.0);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let noise = mean(&inactive);
    if noise == 0.0 {
        return Some(f64::INFINITY);
    }
    Some(10.0 * (mean(&active) / noise).log10())
}

/// True when the estimated SNR exceeds `min_snr_db`.
pub fn passes_speech_gate(signal: &[f64], sample_rate: u32, min_snr_db: f64) -> bool {
    estimate_speech_snr_db(signal, sample_rate).is_some_and(|snr| snr > min_snr_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{noise, speech_like, NoiseKind};

    #[test]
    fn clean_speech_passes_noisy_speech_fails() {
        let s = speech_like(2, 4.0, 16000);
        assert!(passes_speech_gate(&s, 16000, 15.0));
        let n = noise(NoiseKind::White, 3, 4.0, 16000);
        let noisy: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + b).collect();
        let est = estimate_speech_snr_db(&noisy, 16000).unwrap();
        assert!(est < 15.0, "{est}");
        assert!(!passes_speech_gate(&noisy, 16000, 15.0));
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(estimate_speech_snr_db(&[0.0; 1000], 16000), None);
        assert_eq!(estimate_speech_snr_db(&[1.0; 10], 16000), None);
    }
}
