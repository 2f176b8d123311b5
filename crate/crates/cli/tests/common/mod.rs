#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use farfield::enhance::{save_checkpoint, CheckpointMeta, FrontEnd, MaskEstimator, ModelConfig};
use farfield::geometry::Topology;
use farfield::synthetic::{noise, speech_like, NoiseKind};
use farfield::wav;

pub fn farfield() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_farfield"));
    cmd.env_remove("FARFIELD_CONFIG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    farfield().args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "farfield {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Low-order RIRs and 1 s clips keep end-to-end runs short.
pub const QUICK_CONFIG: &str = r#"
[roomsim.rir]
max_order = 3

[mixer]
clip_seconds = 1.0
"#;

pub fn quick_config(dir: &Path) -> PathBuf {
    let path = dir.join("quick.toml");
    fs::write(&path, QUICK_CONFIG).unwrap();
    path
}

/// Two speech and two noise files under `dir/speech` and `dir/noise`.
pub fn write_sources(dir: &Path) -> (PathBuf, PathBuf) {
    let speech = dir.join("speech");
    let noise_dir = dir.join("noise");
    fs::create_dir_all(&speech).unwrap();
    fs::create_dir_all(&noise_dir).unwrap();
    for i in 0..2u64 {
        wav::write_mono(
            speech.join(format!("s{i}.wav")),
            &speech_like(i, 2.0, 16_000),
            16_000,
        )
        .unwrap();
        let kind = if i == 0 {
            NoiseKind::Pink
        } else {
            NoiseKind::Babble
        };
        wav::write_mono(
            noise_dir.join(format!("n{i}.wav")),
            &noise(kind, 50 + i, 2.0, 16_000),
            16_000,
        )
        .unwrap();
    }
    (speech, noise_dir)
}

/// A small random model with a sidecar describing the default front end.
pub fn tiny_checkpoint(path: &Path, topology: Topology) {
    let front = FrontEnd::for_topology(topology);
    let config = ModelConfig {
        hidden: 8,
        layers: 1,
        seed: 3,
    };
    let model = MaskEstimator::<f32>::new(front.stft.num_bins(), &config).unwrap();
    let mut meta = CheckpointMeta::new(&model, front);
    meta.topology = Some(topology);
    save_checkpoint(path, &model, &meta).unwrap();
}

/// Every file under `dir` keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// gen-rirs followed by synth into `dir/rirs` and `dir/data`.
pub fn build_dataset(dir: &Path, sources: &Path, count: usize, seed: u64) -> PathBuf {
    let config = quick_config(dir);
    let (speech, noise_dir) = (sources.join("speech"), sources.join("noise"));
    let rirs = dir.join("rirs");
    let data = dir.join("data");
    run_ok(&[
        "gen-rirs",
        "--config",
        s(&config),
        "--topology",
        "linear-uniform8",
        "--count",
        "4",
        "--seed",
        &seed.to_string(),
        "--out",
        s(&rirs),
    ]);
    run_ok(&[
        "synth",
        "--config",
        s(&config),
        "--rirs",
        s(&rirs.join("manifest.jsonl")),
        "--speech",
        s(&speech),
        "--noise",
        s(&noise_dir),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&data),
    ]);
    data
}
