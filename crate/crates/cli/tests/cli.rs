mod common;

use std::fs;

use common::*;
use farfield::enhance::sidecar_path;
use farfield::evaluate::{evaluate_entry, ClipMetrics, EvalConfig};
use farfield::geometry::Topology;
use farfield::jsonl::{read_json, read_jsonl};
use farfield::mixer::DatasetManifest;
use farfield::roomsim::RirManifest;
use farfield::synthetic::{noise, NoiseKind};
use farfield::wav;

#[test]
fn gen_rirs_writes_requested_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rirs");
    run_ok(&[
        "gen-rirs",
        "--topology",
        "circular16",
        "--count",
        "10",
        "--seed",
        "7",
        "--out",
        s(&out),
    ]);
    let manifest = RirManifest::load(&out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.entries.len(), 10);
    let wavs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "wav")
        })
        .count();
    assert_eq!(wavs, 10);
    for e in &manifest.entries {
        assert_eq!(manifest.load_rir(&e.id).unwrap().num_mics(), 16);
    }
    let echo: serde_json::Value = read_json(&out.join("config.json")).unwrap();
    assert_eq!(echo["geometry"]["topology"], "circular16");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["gen-rirs", "--out", "x"]).status.code(), Some(2));
    assert_eq!(
        run(&[
            "gen-rirs",
            "--count",
            "1",
            "--out",
            "x",
            "--topology",
            "hexagon"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&["enhance", "--model", "m", "--out", "o"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["rtf"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.ckpt");
    let out = run(&[
        "enhance",
        "--model",
        s(&missing),
        "--in",
        "x.wav",
        "--out",
        "y.wav",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn help_lists_every_flag() {
    let out = run_ok(&["synth", "--help"]);
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--specs",
        "--rirs",
        "--speech",
        "--noise",
        "--count",
        "--seed",
        "--snr-min",
        "--snr-max",
        "--clip-seconds",
        "--target",
        "--speech-gate-db",
        "--out",
        "--config",
        "--jobs",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn config_flags_and_environment_merge() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.toml");
    fs::write(&path, "[train]\nepochs = 3\n[model]\nhidden = 32\n").unwrap();
    let out = farfield()
        .env("FARFIELD_CONFIG", &path)
        .arg("config")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("epochs = 3"), "{text}");
    assert!(text.contains("hidden = 32"));

    // the flag beats the config file
    let rirs = tmp.path().join("rirs");
    fs::write(
        &path,
        "[geometry]\ntopology = \"circular16\"\n[roomsim.rir]\nmax_order = 1\n",
    )
    .unwrap();
    run_ok(&[
        "gen-rirs",
        "--config",
        s(&path),
        "--topology",
        "linear-uniform8",
        "--count",
        "2",
        "--out",
        s(&rirs),
    ]);
    let manifest = RirManifest::load(&rirs.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.entries[0].topology, Topology::LinearUniform8);
    let echo: serde_json::Value = read_json(&rirs.join("config.json")).unwrap();
    assert_eq!(echo["geometry"]["topology"], "linear-uniform8");
    assert_eq!(echo["roomsim"]["rir"]["max_order"], 1);

    fs::write(&path, "[train]\nlearning_rate = 1.0\n").unwrap();
    assert_eq!(
        run(&["config", "--config", s(&path)]).status.code(),
        Some(1)
    );
}

fn write_mix(path: &std::path::Path, channels: usize, len: usize) {
    let samples: Vec<Vec<f64>> = (0..channels)
        .map(|c| noise(NoiseKind::White, c as u64, len as f64 / 16_000.0, 16_000))
        .collect();
    wav::write_wav(path, &samples, 16_000).unwrap();
}

#[test]
fn enhance_output_matches_input_length() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.ckpt");
    tiny_checkpoint(&model, Topology::LinearUniform8);
    let mix = tmp.path().join("mix.wav");
    write_mix(&mix, 8, 16_123);
    for streaming in [true, false] {
        let out = tmp.path().join(format!("enh_{streaming}.wav"));
        let mut args = vec![
            "enhance",
            "--model",
            s(&model),
            "--in",
            s(&mix),
            "--out",
            s(&out),
        ];
        if streaming {
            args.push("--streaming");
        }
        run_ok(&args);
        let audio = wav::read_wav(&out).unwrap();
        assert_eq!(audio.num_channels(), 1);
        assert_eq!(audio.len(), 16_123);
    }
    let a = wav::read_wav(tmp.path().join("enh_true.wav"))
        .unwrap()
        .channels;
    let b = wav::read_wav(tmp.path().join("enh_false.wav"))
        .unwrap()
        .channels;
    let diff = a[0]
        .iter()
        .zip(&b[0])
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff < 1e-5, "streaming and offline differ by {diff}");
}

#[test]
fn streaming_refuses_non_causal_front_end() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.ckpt");
    tiny_checkpoint(&model, Topology::LinearUniform8);
    fs::remove_file(sidecar_path(&model)).unwrap();
    let config = tmp.path().join("c.toml");
    fs::write(&config, "[stft]\npadding = \"centered\"\n").unwrap();
    let mix = tmp.path().join("mix.wav");
    write_mix(&mix, 8, 4000);
    let out = tmp.path().join("enh.wav");
    let base = [
        "enhance",
        "--config",
        s(&config),
        "--model",
        s(&model),
        "--in",
        s(&mix),
        "--out",
        s(&out),
    ];
    let res = run(&[&base[..], &["--streaming"]].concat());
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("causal"));
    run_ok(&base);
}

#[test]
fn eval_rows_match_library_recomputation() {
    let tmp = tempfile::tempdir().unwrap();
    write_sources(tmp.path());
    let data = build_dataset(tmp.path(), tmp.path(), 3, 11);
    let model = tmp.path().join("m.ckpt");
    tiny_checkpoint(&model, Topology::LinearUniform8);
    let manifest_path = data.join("manifest.jsonl");
    let enh = tmp.path().join("enh");
    run_ok(&[
        "enhance",
        "--model",
        s(&model),
        "--manifest",
        s(&manifest_path),
        "--out",
        s(&enh),
        "--streaming",
    ]);
    let report = tmp.path().join("report");
    run_ok(&[
        "eval",
        "--manifest",
        s(&manifest_path),
        "--enhanced",
        s(&enh),
        "--out",
        s(&report),
    ]);

    let rows: Vec<ClipMetrics> = read_jsonl(&report.join("metrics.jsonl")).unwrap();
    assert_eq!(rows.len(), 3);
    let manifest = DatasetManifest::load(&manifest_path).unwrap();
    let entry = &manifest.entries[1];
    let y = wav::read_wav(enh.join(format!("{}.wav", entry.id)))
        .unwrap()
        .channels
        .remove(0);
    let by_hand = evaluate_entry(&manifest, entry, &y, &EvalConfig::default()).unwrap();
    assert_eq!(rows[1], by_hand);

    let summary: serde_json::Value = read_json(&report.join("summary.json")).unwrap();
    let mean = rows.iter().map(|r| r.enhanced.sisnr_db).sum::<f64>() / 3.0;
    assert!((summary["enhanced"]["sisnr_db"].as_f64().unwrap() - mean).abs() < 1e-9);
    assert!(summary["config"]["mixer"].is_object());
    assert!(report.join("metrics.csv").exists());

    fs::remove_file(enh.join(format!("{}.wav", entry.id))).unwrap();
    let res = run(&[
        "eval",
        "--manifest",
        s(&manifest_path),
        "--enhanced",
        s(&enh),
        "--out",
        s(&report),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let summary: serde_json::Value = read_json(&report.join("summary.json")).unwrap();
    assert_eq!(summary["missing"].as_array().unwrap().len(), 1);
    assert_eq!(summary["enhanced"]["count"], 2);
}

#[test]
fn synth_accepts_explicit_specs() {
    let tmp = tempfile::tempdir().unwrap();
    write_sources(tmp.path());
    let data = build_dataset(tmp.path(), tmp.path(), 2, 5);
    let again = tmp.path().join("again");
    run_ok(&[
        "synthesize",
        "--config",
        s(&quick_config(tmp.path())),
        "--specs",
        s(&data.join("specs.jsonl")),
        "--rirs",
        s(&tmp.path().join("rirs/manifest.jsonl")),
        "--out",
        s(&again),
    ]);
    assert_eq!(snapshot(&data), snapshot(&again));
}

#[test]
fn train_writes_checkpoint_and_log() {
    let tmp = tempfile::tempdir().unwrap();
    write_sources(tmp.path());
    let data = build_dataset(tmp.path(), tmp.path(), 2, 3);
    let manifest = data.join("manifest.jsonl");
    let out = tmp.path().join("model");
    run_ok(&[
        "train",
        "--train",
        s(&manifest),
        "--dev",
        s(&manifest),
        "--out",
        s(&out),
        "--epochs",
        "2",
        "--hidden",
        "8",
        "--layers",
        "1",
        "--batch-size",
        "2",
        "--jobs",
        "2",
    ]);
    let log: Vec<serde_json::Value> = read_jsonl(&out.join("train_log.jsonl")).unwrap();
    assert_eq!(log.len(), 2);
    assert!(out.join("model.ckpt").exists());
    let meta: serde_json::Value = read_json(&sidecar_path(&out.join("model.ckpt"))).unwrap();
    assert_eq!(meta["hidden"], 8);
    assert_eq!(meta["train"]["epochs"], 2);

    let enh = tmp.path().join("enh.wav");
    let mix = data.join("mix/clip_00000.wav");
    run_ok(&[
        "enhance",
        "--model",
        s(&out.join("model.ckpt")),
        "--in",
        s(&mix),
        "--out",
        s(&enh),
        "--streaming",
    ]);
}

#[test]
fn rtf_reports_positive_factor() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rtf.json");
    run_ok(&[
        "rtf",
        "--random-init",
        "--hidden",
        "16",
        "--layers",
        "1",
        "--seconds",
        "1",
        "--repetitions",
        "2",
        "--out",
        s(&out),
    ]);
    let report: serde_json::Value = read_json(&out).unwrap();
    assert!(report["rtf"].as_f64().unwrap() > 0.0);
    assert_eq!(report["repetitions"], 2);
    assert_eq!(report["timings"].as_array().unwrap().len(), 2);
}

#[test]
fn mos_aggregates_ratings() {
    let tmp = tempfile::tempdir().unwrap();
    let ratings = tmp.path().join("r.csv");
    fs::write(
        &ratings,
        "clip_id,rater_id,mos,smos,nmos\na,r1,5,4,3\na,r2,4,4,4\nb,r1,3,3,5\nb,r2,3,5,5\n",
    )
    .unwrap();
    let baseline = tmp.path().join("b.csv");
    fs::write(
        &baseline,
        "clip_id,rater_id,mos,smos,nmos\na,r1,3,3,3\nb,r1,2,2,2\n",
    )
    .unwrap();
    let out = run_ok(&["mos", "--ratings", s(&ratings), "--baseline", s(&baseline)]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["mos"], 3.75);
    assert_eq!(summary["dmos"], 1.25);

    fs::write(&ratings, "clip_id,rater_id,mos,smos,nmos\na,r1,6,4,3\n").unwrap();
    assert_eq!(
        run(&["mos", "--ratings", s(&ratings)]).status.code(),
        Some(1)
    );
}

#[test]
fn gen_rirs_and_synth_are_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    write_sources(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    build_dataset(&a, tmp.path(), 3, 21);
    build_dataset(&b, tmp.path(), 3, 21);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.len() > 10);
    assert_eq!(sa, sb);
}
