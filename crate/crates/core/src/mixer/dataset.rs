use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clip::MultichannelClip;
use super::convolve::convolve_multichannel;
use super::mix::{measured_snr_db, mix_at_snr, Mixture};
use super::vad::passes_speech_gate;
use crate::error::{Error, Result};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::roomsim::{arrival_index, Range, Rir, RirManifest};
use crate::seed::derive_seed;
use crate::wav;

pub const DATASET_MANIFEST: &str = "manifest.jsonl";

/// One clip to synthesize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub id: String,
    pub speech_path: PathBuf,
    pub noise_path: PathBuf,
    pub speech_rir_id: String,
    pub noise_rir_id: String,
    pub snr_db: f64,
    #[serde(default = "default_clip_seconds")]
    pub clip_seconds: f64,
    pub seed: u64,
}

fn default_clip_seconds() -> f64 {
    6.0
}

/// Signal the reference WAV carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Reverberant speech at the reference microphone.
    #[default]
    Reverberant,
    /// The dry source delayed to the reference microphone's direct path.
    Dry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixerConfig {
    pub snr_db: Range,
    pub clip_seconds: f64,
    pub ref_channel: usize,
    pub target: Target,
    pub sample_rate: u32,
    /// Minimum estimated SNR for speech sources; `None` disables the gate.
    pub speech_gate_db: Option<f64>,
}

impl Default for MixerConfig {
    fn default() -> Self {
        MixerConfig {
            snr_db: Range::new(0.0, 30.0),
            clip_seconds: 6.0,
            ref_channel: 0,
            target: Target::Reverberant,
            sample_rate: 16_000,
            speech_gate_db: None,
        }
    }
}

impl MixerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr_db.min.is_finite() && self.snr_db.max.is_finite())
            || self.snr_db.min > self.snr_db.max
        {
            return Err(Error::Configuration(format!(
                "SNR range [{}, {}] is invalid",
                self.snr_db.min, self.snr_db.max
            )));
        }
        if !(self.clip_seconds > 0.0) || self.sample_rate == 0 {
            return Err(Error::Configuration(
                "clip_seconds and sample_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the dataset manifest. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub mixture: String,
    pub reference: String,
    pub num_channels: usize,
    pub sample_rate: u32,
    pub num_samples: usize,
    pub ref_channel: usize,
    pub target: Target,
    pub snr_db: f64,
    /// Gain applied to the reverberant noise before mixing.
    pub noise_gain: f64,
    /// Gain applied to the whole clip to keep the peak within [-1, 1].
    pub clip_gain: f64,
    pub speech_offset: i64,
    pub noise_offset: usize,
    pub spec: MixtureSpec,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub dir: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let entries = read_jsonl(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(DatasetManifest { dir, entries })
    }

    pub fn mixture_path(&self, entry: &DatasetEntry) -> PathBuf {
        self.dir.join(&entry.mixture)
    }

    pub fn reference_path(&self, entry: &DatasetEntry) -> PathBuf {
        self.dir.join(&entry.reference)
    }

    pub fn load_mixture(&self, entry: &DatasetEntry) -> Result<MultichannelClip> {
        let audio = wav::read_wav(self.mixture_path(entry))?;
        let mut clip = MultichannelClip::new(audio.channels, audio.sample_rate)?;
        clip.provenance.snr_db = Some(entry.snr_db);
        clip.provenance.seed = Some(entry.spec.seed);
        clip.provenance.speech_id = Some(entry.spec.speech_path.display().to_string());
        clip.provenance.noise_id = Some(entry.spec.noise_path.display().to_string());
        clip.provenance.rir_ids = vec![
            entry.spec.speech_rir_id.clone(),
            entry.spec.noise_rir_id.clone(),
        ];
        Ok(clip)
    }

    pub fn load_reference(&self, entry: &DatasetEntry) -> Result<Vec<f64>> {
        let path = self.reference_path(entry);
        wav::read_wav(&path)?.into_mono(&path)
    }
}

fn load_mono(path: &Path, sample_rate: u32) -> Result<Vec<f64>> {
    let audio = wav::read_wav(path)?;
    if audio.sample_rate != sample_rate {
        return Err(Error::Format(format!(
            "{} is at {} Hz, expected {sample_rate} Hz",
            path.display(),
            audio.sample_rate
        )));
    }
    let x = audio.into_mono(path)?;
    if x.is_empty() {
        return Err(Error::Input(format!("{} is empty", path.display())));
    }
    Ok(x)
}

/// Random crop of a long source, or zero padding at a random offset for a
/// short one. Returns the segment and the source index of its first sample
/// (negative when padded).
pub fn crop_or_pad(x: &[f64], len: usize, rng: &mut impl Rng) -> (Vec<f64>, i64) {
    if x.len() >= len {
        let start = rng.random_range(0..=x.len() - len);
        (x[start..start + len].to_vec(), start as i64)
    } else {
        let lead = rng.random_range(0..=len - x.len());
        let mut out = vec![0.0; len];
        out[lead..lead + x.len()].copy_from_slice(x);
        (out, -(lead as i64))
    }
}

/// Random crop of a long noise, or cyclic repetition from a random start.
pub fn crop_or_loop(x: &[f64], len: usize, rng: &mut impl Rng) -> (Vec<f64>, usize) {
    let start = if x.len() >= len {
        rng.random_range(0..=x.len() - len)
    } else {
        rng.random_range(0..x.len())
    };
    ((0..len).map(|i| x[(start + i) % x.len()]).collect(), start)
}

/// Everything produced for one clip before it is written.
#[derive(Debug, Clone)]
pub struct SynthesizedClip {
    pub mixture: Mixture,
    pub reference: Vec<f64>,
    pub clip_gain: f64,
    pub speech_offset: i64,
    pub noise_offset: usize,
}

/// Builds one clip in memory.
pub fn synthesize_clip(
    spec: &MixtureSpec,
    speech: &[f64],
    noise: &[f64],
    speech_rir: &Rir,
    noise_rir: &Rir,
    config: &MixerConfig,
) -> Result<SynthesizedClip> {
    if speech_rir.num_mics() != noise_rir.num_mics() {
        return Err(Error::Shape(format!(
            "{}: speech RIR has {} channels, noise RIR {}",
            spec.id,
            speech_rir.num_mics(),
            noise_rir.num_mics()
        )));
    }
    if !(spec.clip_seconds > 0.0) {
        return Err(Error::Parameter(format!(
            "{}: clip_seconds must be positive",
            spec.id
        )));
    }
    let fs = config.sample_rate;
    let len = (spec.clip_seconds * fs as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (dry, speech_offset) = crop_or_pad(speech, len, &mut rng);
    let (noise_seg, noise_offset) = crop_or_loop(noise, len, &mut rng);
    let speech_rev = convolve_multichannel(&dry, fs, speech_rir, Some(len))?;
    let noise_rev = convolve_multichannel(&noise_seg, fs, noise_rir, Some(len))?;
    let mut mixture = mix_at_snr(&speech_rev, &noise_rev, spec.snr_db, config.ref_channel)?;

    let mut reference = match config.target {
        Target::Reverberant => mixture.speech.samples[config.ref_channel].clone(),
        Target::Dry => {
            let delay = arrival_index(&speech_rir.samples_per_mic[config.ref_channel]).unwrap_or(0);
            let mut r = vec![0.0; len];
            let n = len.saturating_sub(delay);
            r[delay..].copy_from_slice(&dry[..n]);
            r
        }
    };

    let peak = reference
        .iter()
        .fold(mixture.mixture.peak(), |m, v| m.max(v.abs()));
    let clip_gain = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if clip_gain != 1.0 {
        mixture.scale(clip_gain);
        reference.iter_mut().for_each(|v| *v *= clip_gain);
    }
    mixture.mixture.provenance = super::clip::Provenance {
        speech_id: Some(spec.speech_path.display().to_string()),
        noise_id: Some(spec.noise_path.display().to_string()),
        rir_ids: vec![spec.speech_rir_id.clone(), spec.noise_rir_id.clone()],
        snr_db: Some(spec.snr_db),
        seed: Some(spec.seed),
    };
    Ok(SynthesizedClip {
        mixture,
        reference,
        clip_gain,
        speech_offset,
        noise_offset,
    })
}

/// Ids of every asset referenced by `specs` that cannot be found.
pub fn missing_assets(specs: &[MixtureSpec], rirs: &RirManifest) -> Vec<String> {
    let mut missing = Vec::new();
    for spec in specs {
        for path in [&spec.speech_path, &spec.noise_path] {
            if !path.is_file() {
                missing.push(format!("{}:{}", spec.id, path.display()));
            }
        }
        for id in [&spec.speech_rir_id, &spec.noise_rir_id] {
            match rirs.get(id) {
                Some(entry) if rirs.path_of(entry).is_file() => {}
                _ => missing.push(format!("{}:{id}", spec.id)),
            }
        }
    }
    missing
}

/// Writes one mixture and one reference WAV per spec plus a manifest, in
/// spec order. Output bytes depend only on the specs and their assets.
pub fn synthesize_dataset(
    specs: &[MixtureSpec],
    rir_manifest: &Path,
    out_dir: &Path,
    config: &MixerConfig,
) -> Result<Vec<DatasetEntry>> {
    config.validate()?;
    let rirs = RirManifest::load(rir_manifest)?;
    let missing = missing_assets(specs, &rirs);
    if !missing.is_empty() {
        return Err(Error::Manifest { missing });
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = specs.iter().find(|s| !seen.insert(&s.id)) {
        return Err(Error::Input(format!("duplicate clip id {}", dup.id)));
    }
    for sub in ["mix", "ref"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::storage(&d, e))?;
    }

    let entries: Vec<DatasetEntry> = specs
        .par_iter()
        .map(|spec| {
            let speech = load_mono(&spec.speech_path, config.sample_rate)?;
            let noise = load_mono(&spec.noise_path, config.sample_rate)?;
            let speech_rir = rirs.load_rir(&spec.speech_rir_id)?;
            let noise_rir = rirs.load_rir(&spec.noise_rir_id)?;
            let clip = synthesize_clip(spec, &speech, &noise, &speech_rir, &noise_rir, config)?;
            let mixture = format!("mix/{}.wav", spec.id);
            let reference = format!("ref/{}.wav", spec.id);
            let m = &clip.mixture.mixture;
            wav::write_wav(out_dir.join(&mixture), &m.samples, m.sample_rate)?;
            wav::write_mono(out_dir.join(&reference), &clip.reference, m.sample_rate)?;
            Ok(DatasetEntry {
                id: spec.id.clone(),
                mixture,
                reference,
                num_channels: m.num_channels(),
                sample_rate: m.sample_rate,
                num_samples: m.len(),
                ref_channel: config.ref_channel,
                target: config.target,
                snr_db: measured_snr_db(
                    &clip.mixture.speech.samples[config.ref_channel],
                    &clip.mixture.noise.samples[config.ref_channel],
                ),
                noise_gain: clip.mixture.noise_gain,
                clip_gain: clip.clip_gain,
                speech_offset: clip.speech_offset,
                noise_offset: clip.noise_offset,
                spec: spec.clone(),
            })
        })
        .collect::<Result<_>>()?;
    write_jsonl(&out_dir.join(DATASET_MANIFEST), &entries)?;
    Ok(entries)
}

/// Keeps speech files whose estimated SNR exceeds `min_snr_db`.
pub fn filter_speech_sources(
    paths: &[PathBuf],
    sample_rate: u32,
    min_snr_db: f64,
) -> Result<Vec<PathBuf>> {
    let keep: Vec<bool> = paths
        .par_iter()
        .map(|p| {
            Ok(passes_speech_gate(
                &load_mono(p, sample_rate)?,
                sample_rate,
                min_snr_db,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(paths
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then(|| p.clone()))
        .collect())
}

/// Draws `count` mixture specs. Each clip takes its speech RIR and noise RIR
/// from two different sources of one room; rooms are used in turn.
pub fn plan_mixtures(
    speech: &[PathBuf],
    noise: &[PathBuf],
    rirs: &RirManifest,
    count: usize,
    seed: u64,
    config: &MixerConfig,
) -> Result<Vec<MixtureSpec>> {
    config.validate()?;
    let speech = match config.speech_gate_db {
        Some(min) => filter_speech_sources(speech, config.sample_rate, min)?,
        None => speech.to_vec(),
    };
    if speech.is_empty() || noise.is_empty() {
        return Err(Error::Input(
            "need at least one speech and one noise file".into(),
        ));
    }
    let mut rooms: BTreeMap<usize, BTreeMap<usize, String>> = BTreeMap::new();
    for e in &rirs.entries {
        rooms
            .entry(e.scenario_id)
            .or_default()
            .insert(e.source_index, e.id.clone());
    }
    let rooms: Vec<(String, String)> = rooms
        .into_values()
        .filter(|sources| sources.len() >= 2)
        .map(|sources| {
            let mut ids = sources.into_values();
            (ids.next().unwrap(), ids.next().unwrap())
        })
        .collect();
    if rooms.is_empty() {
        return Err(Error::Input(
            "RIR manifest has no room with two rendered sources".into(),
        ));
    }
    Ok((0..count)
        .map(|i| {
            let clip_seed = derive_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(clip_seed);
            let (speech_rir_id, noise_rir_id) = rooms[i % rooms.len()].clone();
            let snr_db = if config.snr_db.min == config.snr_db.max {
                config.snr_db.min
            } else {
                rng.random_range(config.snr_db.min..=config.snr_db.max)
            };
            MixtureSpec {
                id: format!("clip_{i:05}"),
                speech_path: speech[rng.random_range(0..speech.len())].clone(),
                noise_path: noise[rng.random_range(0..noise.len())].clone(),
                speech_rir_id,
                noise_rir_id,
                snr_db,
                clip_seconds: config.clip_seconds,
                seed: clip_seed,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_and_pad_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let (c, off) = crop_or_pad(&x, 30, &mut rng);
        assert_eq!(c.len(), 30);
        assert_eq!(c[0], off as f64);
        let (p, off) = crop_or_pad(&x, 150, &mut rng);
        assert_eq!(p.len(), 150);
        assert!(off <= 0);
        assert_eq!(p[(-off) as usize..(-off) as usize + 100], x[..]);
        let (l, start) = crop_or_loop(&x[..7], 20, &mut rng);
        assert_eq!(l.len(), 20);
        assert_eq!(l[0], start as f64);
        assert_eq!(l[7], l[0]);
    }

    #[test]
    fn config_validation() {
        let mut c = MixerConfig::default();
        assert!(c.validate().is_ok());
        c.snr_db = Range::new(30.0, 0.0);
        assert!(c.validate().is_err());
    }
}
