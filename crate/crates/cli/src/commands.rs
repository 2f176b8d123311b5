use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use farfield::enhance::{
    enhance_clip, enhance_streaming, load_checkpoint, save_checkpoint, train, CheckpointMeta,
    FrontEnd, MaskEstimator,
};
use farfield::evaluate::{
    aggregate_mos, evaluate_dataset, measure_rtf, per_clip_scores, read_ratings, write_report,
    EvalConfig, PesqAdapter,
};
use farfield::jsonl::{read_jsonl, write_json, write_jsonl};
use farfield::mixer::{
    plan_mixtures, synthesize_dataset, DatasetManifest, MixtureSpec, MultichannelClip,
};
use farfield::roomsim::{batch_generate, RirManifest};
use farfield::synthetic::{noise, speech_like, NoiseKind};
use farfield::wav;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{PipelineConfig, ECHO_NAME};
use crate::{
    Cli, Command, EnhanceArgs, EvalArgs, GenRirsArgs, MosArgs, RtfArgs, SynthArgs, TrainArgs,
};

pub const CHECKPOINT_NAME: &str = "model.ckpt";
pub const TRAIN_LOG_NAME: &str = "train_log.jsonl";
pub const SPECS_NAME: &str = "specs.jsonl";

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut config = PipelineConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::GenRirs(args) => gen_rirs(&mut config, args),
        Command::Synth(args) => synth(&mut config, args),
        Command::Train(args) => train_cmd(&mut config, args),
        Command::Enhance(args) => enhance(&config, args),
        Command::Eval(args) => eval(&mut config, args),
        Command::Rtf(args) => rtf(&mut config, args),
        Command::Mos(args) => mos(args),
        Command::Config => {
            print!("{}", config.to_toml());
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_echo(dir: &Path, config: &PipelineConfig) -> Result<()> {
    write_json(&dir.join(ECHO_NAME), &config.echo())?;
    Ok(())
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            write_json(path, value)?;
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn gen_rirs(config: &mut PipelineConfig, args: GenRirsArgs) -> Result<()> {
    if let Some(t) = args.topology {
        if t != config.geometry.topology {
            config.geometry.params = None;
        }
        config.geometry.topology = t;
    }
    if args.max_order.is_some() {
        config.roomsim.rir.max_order = args.max_order;
    }
    let geometry = config.geometry.build()?;
    let entries = batch_generate(args.count, &geometry, args.seed, &args.out, &config.roomsim)?;
    write_echo(&args.out, config)?;
    eprintln!(
        "wrote {} {} RIRs to {}",
        entries.len(),
        geometry.topology,
        args.out.display()
    );
    Ok(())
}

/// Sorted WAV files directly inside `dir`.
fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no WAV files in {}", dir.display());
    }
    Ok(files)
}

fn synth(config: &mut PipelineConfig, args: SynthArgs) -> Result<()> {
    let mixer = &mut config.mixer;
    if let Some(v) = args.snr_min {
        mixer.snr_db.min = v;
    }
    if let Some(v) = args.snr_max {
        mixer.snr_db.max = v;
    }
    if let Some(v) = args.clip_seconds {
        mixer.clip_seconds = v;
    }
    if let Some(v) = args.target {
        mixer.target = v;
    }
    if args.speech_gate_db.is_some() {
        mixer.speech_gate_db = args.speech_gate_db;
    }
    mixer.validate()?;

    let specs: Vec<MixtureSpec> = match (&args.specs, &args.speech, &args.noise, args.count) {
        (Some(path), ..) => read_jsonl(path)?,
        (None, Some(speech), Some(noise), Some(count)) => {
            let rirs = RirManifest::load(&args.rirs)?;
            plan_mixtures(
                &list_wavs(speech)?,
                &list_wavs(noise)?,
                &rirs,
                count,
                args.seed,
                &config.mixer,
            )?
        }
        _ => bail!("give either --specs or all of --speech, --noise and --count"),
    };
    create_dir(&args.out)?;
    write_jsonl(&args.out.join(SPECS_NAME), &specs)?;
    let entries = synthesize_dataset(&specs, &args.rirs, &args.out, &config.mixer)?;
    write_echo(&args.out, config)?;
    eprintln!("wrote {} clips to {}", entries.len(), args.out.display());
    Ok(())
}

fn train_cmd(config: &mut PipelineConfig, args: TrainArgs) -> Result<()> {
    let t = &mut config.train;
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.lr {
        t.lr = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.loss {
        t.loss = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
        config.model.seed = v;
    }
    if let Some(v) = args.hidden {
        config.model.hidden = v;
    }
    if let Some(v) = args.layers {
        config.model.layers = v;
    }
    config.train.validate()?;

    let train_set = DatasetManifest::load(&args.train)?;
    let dev_set = DatasetManifest::load(&args.dev)?;
    let (model, front) = match &args.init {
        Some(path) => {
            let (model, meta) = load_checkpoint::<f32>(path)?;
            let front = match meta {
                Some(m) => m.front_end,
                None => config.front_end()?,
            };
            (model, front)
        }
        None => {
            let front = config.front_end()?;
            let model = MaskEstimator::<f32>::new(front.stft.num_bins(), &config.model)?;
            (model, front)
        }
    };
    create_dir(&args.out)?;
    write_echo(&args.out, config)?;
    let outcome = train(
        model,
        &train_set,
        &dev_set,
        &config.train,
        &front,
        Some(&args.out.join(TRAIN_LOG_NAME)),
    )?;
    let mut meta = CheckpointMeta::new(&outcome.model, front);
    meta.topology = Some(config.geometry.topology);
    meta.train = Some(config.train.clone());
    meta.best_epoch = Some(outcome.best_epoch);
    let path = args.out.join(CHECKPOINT_NAME);
    save_checkpoint(&path, &outcome.model, &meta)?;
    eprintln!(
        "best dev loss {:.4} at epoch {}; checkpoint {}",
        outcome.best_dev_loss,
        outcome.best_epoch,
        path.display()
    );
    Ok(())
}

/// The model plus the front end it was trained with. Checkpoints without a
/// sidecar fall back to the configured front end.
fn load_model(path: &Path, config: &PipelineConfig) -> Result<(MaskEstimator<f32>, FrontEnd)> {
    let (model, meta) =
        load_checkpoint::<f32>(path).with_context(|| format!("loading {}", path.display()))?;
    let front = match meta {
        Some(m) => m.front_end,
        None => config.front_end()?,
    };
    if front.stft.num_bins() != model.num_bins {
        bail!(
            "checkpoint has {} bins but the front end produces {}",
            model.num_bins,
            front.stft.num_bins()
        );
    }
    Ok((model, front))
}

fn enhance_one(
    clip: &MultichannelClip,
    model: &MaskEstimator<f32>,
    front: &FrontEnd,
    streaming: bool,
) -> farfield::Result<Vec<f64>> {
    if streaming {
        enhance_streaming(clip, model, front)
    } else {
        enhance_clip(clip, model, front)
    }
}

fn read_clip(path: &Path) -> Result<MultichannelClip> {
    let audio = wav::read_wav(path)?;
    Ok(MultichannelClip::new(audio.channels, audio.sample_rate)?)
}

fn enhance(config: &PipelineConfig, args: EnhanceArgs) -> Result<()> {
    let (model, front) = load_model(&args.model, config)?;
    if args.streaming {
        front.check_streaming()?;
    }
    match (&args.input, &args.manifest) {
        (Some(input), None) => {
            let clip = read_clip(input)?;
            let out = enhance_one(&clip, &model, &front, args.streaming)
                .with_context(|| format!("enhancing {}", input.display()))?;
            if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            wav::write_mono(&args.out, &out, clip.sample_rate)?;
        }
        (None, Some(manifest)) => {
            let manifest = DatasetManifest::load(manifest)?;
            create_dir(&args.out)?;
            manifest
                .entries
                .par_iter()
                .map(|entry| {
                    let clip = manifest.load_mixture(entry)?;
                    let out = enhance_one(&clip, &model, &front, args.streaming)?;
                    wav::write_mono(
                        farfield::evaluate::enhanced_path(&args.out, &entry.id),
                        &out,
                        clip.sample_rate,
                    )
                })
                .collect::<farfield::Result<()>>()?;
            eprintln!(
                "enhanced {} clips into {}",
                manifest.entries.len(),
                args.out.display()
            );
        }
        _ => bail!("give exactly one of --in and --manifest"),
    }
    Ok(())
}

fn eval(config: &mut PipelineConfig, args: EvalArgs) -> Result<()> {
    if let Some(exe) = args.pesq {
        config.evaluate.pesq = Some(PesqAdapter {
            executable: exe,
            args: Vec::new(),
        });
    }
    if args.no_csv {
        config.evaluate.csv = false;
    }
    let manifest = DatasetManifest::load(&args.manifest)?;
    let report = evaluate_dataset(
        &manifest,
        &args.enhanced,
        &EvalConfig {
            pesq: config.evaluate.pesq.clone(),
        },
    )?;
    let out = args.out.unwrap_or_else(|| args.enhanced.clone());
    create_dir(&out)?;
    write_report(&report, &out, config.evaluate.csv, Some(&config.echo()))?;
    if let (Some(noisy), Some(enhanced)) = (&report.noisy, &report.enhanced) {
        eprintln!(
            "{} clips  si-snr {:.3} -> {:.3} dB  stoi {:.4} -> {:.4}  estoi {:.4} -> {:.4}",
            enhanced.count,
            noisy.sisnr_db,
            enhanced.sisnr_db,
            noisy.stoi,
            enhanced.stoi,
            noisy.estoi,
            enhanced.estoi
        );
    }
    if !report.missing.is_empty() {
        bail!(
            "{} clip(s) missing, excluded from the aggregates: {}",
            report.missing.len(),
            report.missing.join(", ")
        );
    }
    Ok(())
}

/// Reproducible stand-in recording: one talker plus independent noise on
/// every channel.
fn synthetic_clip(channels: usize, seconds: f64, sample_rate: u32) -> Result<MultichannelClip> {
    let speech = speech_like(1, seconds, sample_rate);
    let samples = (0..channels)
        .map(|c| {
            let n = noise(NoiseKind::White, 100 + c as u64, seconds, sample_rate);
            speech.iter().zip(&n).map(|(s, v)| s + v).collect()
        })
        .collect();
    Ok(MultichannelClip::new(samples, sample_rate)?)
}

fn rtf(config: &mut PipelineConfig, args: RtfArgs) -> Result<()> {
    if let Some(v) = args.hidden {
        config.model.hidden = v;
    }
    if let Some(v) = args.layers {
        config.model.layers = v;
    }
    if let Some(v) = args.repetitions {
        config.evaluate.rtf_repetitions = v;
    }
    let (model, front) = match &args.model {
        Some(path) => load_model(path, config)?,
        None => {
            let front = config.front_end()?;
            let model = MaskEstimator::<f32>::new(front.stft.num_bins(), &config.model)?;
            (model, front)
        }
    };
    let streaming = !args.offline;
    if streaming {
        front.check_streaming()?;
    }
    let clip = match &args.input {
        Some(path) => read_clip(path)?,
        None => {
            let channels = front
                .selection
                .channel_subset
                .iter()
                .max()
                .map_or(1, |m| m + 1);
            synthetic_clip(channels, args.seconds, front.stft.sample_rate)?
        }
    };
    let report = measure_rtf(
        |c| enhance_one(c, &model, &front, streaming),
        &clip,
        config.evaluate.rtf_repetitions,
    )?;
    eprintln!(
        "rtf {:.4} ({:.3} s for {:.3} s of audio, median of {})",
        report.rtf, report.processing_seconds, report.audio_seconds, report.repetitions
    );
    emit(&report, args.out.as_deref())
}

fn mos(args: MosArgs) -> Result<()> {
    let ratings = read_ratings(&args.ratings)?;
    let baseline = match &args.baseline {
        Some(path) => Some(per_clip_scores(&read_ratings(path)?)?),
        None => None,
    };
    let summary = aggregate_mos(&ratings, baseline.as_ref())?;
    emit(&summary, args.out.as_deref())
}
