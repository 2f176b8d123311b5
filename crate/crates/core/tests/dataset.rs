//! Dataset synthesis and evaluation over files on disk.

use std::fs;
use std::path::{Path, PathBuf};

use farfield::evaluate::{enhanced_path, evaluate_dataset, EvalConfig, SISNR_CAP_DB};
use farfield::geometry::{ArrayGeometry, Topology};
use farfield::mixer::{
    plan_mixtures, synthesize_dataset, DatasetManifest, MixerConfig, MixtureSpec, DATASET_MANIFEST,
};
use farfield::roomsim::{batch_generate, BatchConfig, RirConfig, MANIFEST_NAME};
use farfield::synthetic::{noise, speech_like, NoiseKind};
use farfield::{wav, Error};

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    speech: Vec<PathBuf>,
    noise: Vec<PathBuf>,
    rirs: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let mut speech = Vec::new();
    let mut noises = Vec::new();
    for i in 0..3u64 {
        let mut s = speech_like(i, 1.5, 16_000);
        if i == 2 {
            // loud enough to force clip-level gain reduction
            s.iter_mut().for_each(|v| *v *= 1000.0);
        }
        let path = root.join(format!("speech{i}.wav"));
        wav::write_mono(&path, &s, 16_000).unwrap();
        speech.push(path);
        let path = root.join(format!("noise{i}.wav"));
        wav::write_mono(&path, &noise(NoiseKind::Pink, 10 + i, 0.7, 16_000), 16_000).unwrap();
        noises.push(path);
    }
    let config = BatchConfig {
        rir: RirConfig {
            max_order: Some(3),
            length: Some(2048),
            ..RirConfig::default()
        },
        ..BatchConfig::default()
    };
    let g = ArrayGeometry::default_for(Topology::LinearUniform8);
    batch_generate(6, &g, 3, &root.join("rirs"), &config).unwrap();
    Fixture {
        _tmp: tmp,
        rirs: root.join("rirs").join(MANIFEST_NAME),
        root,
        speech,
        noise: noises,
    }
}

fn mixer() -> MixerConfig {
    MixerConfig {
        clip_seconds: 1.0,
        ..MixerConfig::default()
    }
}

fn specs(f: &Fixture, count: usize) -> Vec<MixtureSpec> {
    let rirs = farfield::roomsim::RirManifest::load(&f.rirs).unwrap();
    plan_mixtures(&f.speech, &f.noise, &rirs, count, 17, &mixer()).unwrap()
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn files_in(dir: &Path) -> usize {
    fs::read_dir(dir).unwrap().count()
}

#[test]
fn three_specs_give_three_clips() {
    let f = fixture();
    let out = f.root.join("data");
    let entries = synthesize_dataset(&specs(&f, 3), &f.rirs, &out, &mixer()).unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(files_in(&out.join("mix")), 3);
    assert_eq!(files_in(&out.join("ref")), 3);
    let manifest = DatasetManifest::load(&out.join(DATASET_MANIFEST)).unwrap();
    assert_eq!(manifest.entries, entries);
    for e in &manifest.entries {
        let clip = manifest.load_mixture(e).unwrap();
        assert_eq!(clip.num_channels(), 8);
        assert_eq!(clip.len(), 16_000);
        assert_eq!(manifest.load_reference(e).unwrap().len(), 16_000);
    }
}

#[test]
fn rerun_is_byte_identical() {
    let f = fixture();
    let specs = specs(&f, 4);
    let a = f.root.join("a");
    let b = f.root.join("b");
    synthesize_dataset(&specs, &f.rirs, &a, &mixer()).unwrap();
    synthesize_dataset(&specs, &f.rirs, &b, &mixer()).unwrap();
    for name in [
        DATASET_MANIFEST,
        "mix/clip_00000.wav",
        "mix/clip_00003.wav",
        "ref/clip_00002.wav",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn measured_snr_matches_spec_from_files() {
    let f = fixture();
    let mut specs = specs(&f, 9);
    specs[0].speech_path = f.speech[2].clone();
    let out = f.root.join("data");
    synthesize_dataset(&specs, &f.rirs, &out, &mixer()).unwrap();
    let manifest = DatasetManifest::load(&out.join(DATASET_MANIFEST)).unwrap();
    let mut clipped = 0;
    for (entry, spec) in manifest.entries.iter().zip(&specs) {
        // reverberant target: mixture minus reference is the scaled noise
        let mix = manifest.load_mixture(entry).unwrap();
        let reference = manifest.load_reference(entry).unwrap();
        let noise: Vec<f64> = mix.samples[0]
            .iter()
            .zip(&reference)
            .map(|(m, s)| m - s)
            .collect();
        let snr = 10.0 * (energy(&reference) / energy(&noise)).log10();
        assert!(
            (snr - spec.snr_db).abs() < 0.01,
            "{}: {snr} vs {}",
            spec.id,
            spec.snr_db
        );
        assert!(mix.peak() <= 1.0);
        if entry.clip_gain < 1.0 {
            clipped += 1;
        }
    }
    assert!(clipped > 0, "no clip exercised the gain reduction");
}

#[test]
fn missing_assets_are_all_listed() {
    let f = fixture();
    let mut specs = specs(&f, 3);
    specs[0].speech_path = f.root.join("nope.wav");
    specs[2].noise_rir_id = "rir_99999".into();
    let err = synthesize_dataset(&specs, &f.rirs, &f.root.join("data"), &mixer()).unwrap_err();
    match err {
        Error::Manifest { missing } => {
            assert_eq!(missing.len(), 2, "{missing:?}");
            assert!(missing[0].starts_with("clip_00000:"));
            assert!(missing[1].ends_with("rir_99999"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(!f.root.join("data").join(DATASET_MANIFEST).exists());
}

fn dataset(f: &Fixture, count: usize) -> DatasetManifest {
    let out = f.root.join("data");
    synthesize_dataset(&specs(f, count), &f.rirs, &out, &mixer()).unwrap();
    DatasetManifest::load(&out.join(DATASET_MANIFEST)).unwrap()
}

#[test]
fn clean_references_score_at_the_cap() {
    let f = fixture();
    let manifest = dataset(&f, 3);
    let enh = f.root.join("enh");
    fs::create_dir_all(&enh).unwrap();
    for e in &manifest.entries {
        fs::copy(manifest.reference_path(e), enhanced_path(&enh, &e.id)).unwrap();
    }
    let report = evaluate_dataset(&manifest, &enh, &EvalConfig::default()).unwrap();
    let enhanced = report.enhanced.unwrap();
    assert_eq!(enhanced.count, 3);
    assert_eq!(enhanced.sisnr_db, SISNR_CAP_DB);
    assert!(enhanced.stoi > 0.999 && enhanced.estoi > 0.999);
    assert!(report.missing.is_empty());
}

#[test]
fn unprocessed_input_shows_no_improvement() {
    let f = fixture();
    let manifest = dataset(&f, 4);
    let enh = f.root.join("enh");
    fs::create_dir_all(&enh).unwrap();
    for e in &manifest.entries {
        let mix = manifest.load_mixture(e).unwrap();
        wav::write_mono(
            enhanced_path(&enh, &e.id),
            &mix.samples[e.ref_channel],
            16_000,
        )
        .unwrap();
    }
    let report = evaluate_dataset(&manifest, &enh, &EvalConfig::default()).unwrap();
    let d = report.improvement.unwrap();
    assert_eq!((d.sisnr_db, d.stoi, d.estoi), (0.0, 0.0, 0.0));
    // aggregates against an independent mean of the rows
    let n = report.rows.len() as f64;
    let mean = report.rows.iter().map(|r| r.noisy.sisnr_db).sum::<f64>() / n;
    assert!((report.noisy.unwrap().sisnr_db - mean).abs() < 1e-9);
    let mean = report.rows.iter().map(|r| r.noisy.stoi).sum::<f64>() / n;
    assert!((report.noisy.unwrap().stoi - mean).abs() < 1e-9);
}

#[test]
fn missing_enhanced_files_are_reported_not_scored() {
    let f = fixture();
    let manifest = dataset(&f, 3);
    let enh = f.root.join("enh");
    fs::create_dir_all(&enh).unwrap();
    let e = &manifest.entries[1];
    fs::copy(manifest.reference_path(e), enhanced_path(&enh, &e.id)).unwrap();
    let report = evaluate_dataset(&manifest, &enh, &EvalConfig::default()).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.missing.len(), 2);
    assert_eq!(report.enhanced.unwrap().count, 1);
}
