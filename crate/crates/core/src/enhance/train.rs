//! Mini-batch training with Adam and plateau-based learning-rate halving.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{mask_mse_loss, sisnr_loss, LossKind};
use super::mask::{ideal_crm, ComplexMask};
use super::model::{MaskEstimator, Scalar, MASK_LIMIT};
use super::pipeline::FrontEnd;
use crate::error::{Error, Result};
use crate::features::{features_from_spectrograms, subset_spectrograms};
use crate::jsonl::write_jsonl;
use crate::mixer::{DatasetManifest, MultichannelClip};
use crate::seed::derive_seed;
use crate::spectral::{Spectrogram, Stft};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Dev epochs without improvement before the learning rate is halved.
    pub patience: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            patience: 2,
            epochs: 18,
            batch_size: 4,
            loss: LossKind::NegSiSnr,
            seed: 0,
            clip_norm: Some(5.0),
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Configuration(format!(
                "lr {} must be positive",
                self.lr
            )));
        }
        if self.patience == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Configuration(
                "patience, epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.adam_eps <= 0.0
        {
            return Err(Error::Configuration("invalid Adam hyper-parameters".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::Configuration("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// A noisy multichannel mixture and its single-channel training target.
#[derive(Debug, Clone)]
pub struct Example {
    pub mixture: MultichannelClip,
    pub reference: Vec<f64>,
}

pub trait ExampleSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn num_samples(&self, index: usize) -> usize;
    fn load(&self, index: usize) -> Result<Example>;
}

impl ExampleSource for [Example] {
    fn len(&self) -> usize {
        <[Example]>::len(self)
    }
    fn num_samples(&self, index: usize) -> usize {
        self[index].mixture.len()
    }
    fn load(&self, index: usize) -> Result<Example> {
        Ok(self[index].clone())
    }
}

impl ExampleSource for Vec<Example> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn num_samples(&self, index: usize) -> usize {
        self[index].mixture.len()
    }
    fn load(&self, index: usize) -> Result<Example> {
        Ok(self[index].clone())
    }
}

impl ExampleSource for DatasetManifest {
    fn len(&self) -> usize {
        self.entries.len()
    }
    fn num_samples(&self, index: usize) -> usize {
        self.entries[index].num_samples
    }
    fn load(&self, index: usize) -> Result<Example> {
        let entry = &self.entries[index];
        Ok(Example {
            mixture: self.load_mixture(entry)?,
            reference: self.load_reference(entry)?,
        })
    }
}

/// An example converted to network inputs.
pub struct Prepared<T> {
    /// `T x 6F`
    pub input: Array2<T>,
    pub x0: Spectrogram,
    pub target: Vec<f64>,
    pub ideal: Option<ComplexMask>,
}

impl<T> Prepared<T> {
    pub fn num_frames(&self) -> usize {
        self.x0.num_frames()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub improved: bool,
    pub lr_halved: bool,
}

pub struct Trainer<T> {
    model: MaskEstimator<T>,
    grads: MaskEstimator<T>,
    m: MaskEstimator<T>,
    v: MaskEstimator<T>,
    config: TrainConfig,
    front: FrontEnd,
    stft: Stft,
    lr: f64,
    step: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: MaskEstimator<T>, config: TrainConfig, front: FrontEnd) -> Result<Self> {
        config.validate()?;
        front.validate()?;
        if front.stft.num_bins() != model.num_bins {
            return Err(Error::Shape(format!(
                "model has F = {} but the STFT gives {} bins",
                model.num_bins,
                front.stft.num_bins()
            )));
        }
        Ok(Trainer {
            grads: model.zeros_like(),
            m: model.zeros_like(),
            v: model.zeros_like(),
            lr: config.lr,
            stft: Stft::new(front.stft)?,
            model,
            config,
            front,
            step: 0,
        })
    }

    pub fn model(&self) -> &MaskEstimator<T> {
        &self.model
    }

    pub fn into_model(self) -> MaskEstimator<T> {
        self.model
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn prepare(&self, example: &Example) -> Result<Prepared<T>> {
        let specs = subset_spectrograms(&example.mixture, &self.front.selection, &self.stft)?;
        let mut features = features_from_spectrograms(&specs, &self.front.selection)?;
        if self.front.features.normalize {
            features.normalize();
        }
        if example.reference.len() != example.mixture.len() {
            return Err(Error::Shape(format!(
                "reference has {} samples, mixture {}",
                example.reference.len(),
                example.mixture.len()
            )));
        }
        let x0 = specs.into_iter().next().expect("subset is non-empty");
        let ideal = match self.config.loss {
            LossKind::MaskMse => Some(ideal_crm(
                &self.stft.forward(&example.reference)?,
                &x0,
                MASK_LIMIT,
            )?),
            LossKind::NegSiSnr => None,
        };
        Ok(Prepared {
            input: features.values.t().mapv(T::of),
            x0,
            target: example.reference.clone(),
            ideal,
        })
    }

    /// Mean loss over the batch and, if `backprop`, accumulated gradients.
    fn batch_loss(&mut self, batch: &[&Prepared<T>], backprop: bool) -> Result<f64> {
        let inputs: Vec<Array2<T>> = batch.iter().map(|p| p.input.clone()).collect();
        let (masks, cache) = self.model.forward_train(&inputs)?;
        let scale = 1.0 / batch.len() as f64;
        let per_item: Vec<(f64, ComplexMask)> = masks
            .par_iter()
            .zip(batch.par_iter())
            .map(|(mask, p)| match (&self.config.loss, &p.ideal) {
                (LossKind::NegSiSnr, _) => sisnr_loss(mask, &p.x0, &p.target, &self.stft),
                (LossKind::MaskMse, Some(ideal)) => Ok(mask_mse_loss(mask, ideal)),
                (LossKind::MaskMse, None) => Err(Error::Training(
                    "example prepared without an ideal mask".into(),
                )),
            })
            .collect::<Result<_>>()?;
        let loss = per_item.iter().map(|(l, _)| l).sum::<f64>() * scale;
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss {loss} at step {}",
                self.step
            )));
        }
        if backprop {
            let grads: Vec<ComplexMask> = per_item
                .into_iter()
                .map(|(_, mut g)| {
                    g.real *= scale;
                    g.imag *= scale;
                    g
                })
                .collect();
            for p in self.grads.params_mut() {
                p.fill(T::zero());
            }
            self.model.backward(&cache, &grads, &mut self.grads);
        }
        Ok(loss)
    }

    /// Loss without updating anything.
    pub fn loss(&mut self, batch: &[&Prepared<T>]) -> Result<f64> {
        self.batch_loss(batch, false)
    }

    /// Loss and parameter gradients, leaving the parameters untouched.
    pub fn gradients(&mut self, batch: &[&Prepared<T>]) -> Result<(f64, &MaskEstimator<T>)> {
        let loss = self.batch_loss(batch, true)?;
        Ok((loss, &self.grads))
    }

    /// One optimizer step; returns the loss before the update.
    pub fn train_step(&mut self, batch: &[&Prepared<T>]) -> Result<f64> {
        let frames = batch.first().map(|p| p.num_frames()).unwrap_or(0);
        if batch.iter().any(|p| p.num_frames() != frames) {
            return Err(Error::Shape(
                "batch items must have equal frame counts".into(),
            ));
        }
        let loss = self.batch_loss(batch, true)?;
        let norm = self
            .grads
            .params()
            .iter()
            .flat_map(|p| p.iter())
            .map(|g| g.f64() * g.f64())
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient at step {}",
                self.step
            )));
        }
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let step_size = T::of(self.lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(self.config.adam_eps);
        let (tb1, tb2) = (T::of(b1), T::of(b2));
        let (ob1, ob2) = (T::of(1.0 - b1), T::of(1.0 - b2));
        let tclip = T::of(clip);
        let params = self.model.params_mut();
        let grads = self.grads.params();
        let ms = self.m.params_mut();
        let vs = self.v.params_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
            for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = *g * tclip;
                *m = tb1 * *m + ob1 * g;
                *v = tb2 * *v + ob2 * g * g;
                *p = *p - step_size * *m / ((*v * inv_bc2).sqrt() + eps);
            }
        }
        Ok(loss)
    }
}

/// Batches of indices with equal sample counts, in a seed-determined order.
fn plan_batches(source: &dyn ExampleSource, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..source.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut open: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut batches = Vec::new();
    for i in order {
        let len = source.num_samples(i);
        let slot = match open.iter().position(|(l, _)| *l == len) {
            Some(s) => s,
            None => {
                open.push((len, Vec::new()));
                open.len() - 1
            }
        };
        open[slot].1.push(i);
        if open[slot].1.len() == batch_size {
            batches.push(open.remove(slot).1);
        }
    }
    batches.extend(open.into_iter().map(|(_, b)| b));
    batches
}

fn load_batch<T: Scalar>(
    trainer: &Trainer<T>,
    source: &dyn ExampleSource,
    indices: &[usize],
) -> Result<Vec<Prepared<T>>> {
    indices
        .par_iter()
        .map(|&i| trainer.prepare(&source.load(i)?))
        .collect()
}

fn mean_loss<T: Scalar>(trainer: &mut Trainer<T>, source: &dyn ExampleSource) -> Result<f64> {
    let mut total = 0.0;
    for batch in plan_batches(source, trainer.config.batch_size, 0) {
        let prepared = load_batch(trainer, source, &batch)?;
        let refs: Vec<&Prepared<T>> = prepared.iter().collect();
        total += trainer.loss(&refs)? * batch.len() as f64;
    }
    Ok(total / source.len() as f64)
}

/// Halves the learning rate after `patience` consecutive epochs without a
/// new best dev loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub patience: usize,
    pub best: f64,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64, patience: usize) -> Self {
        PlateauSchedule {
            lr,
            patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records one dev loss; returns `(improved, lr_halved)`.
    pub fn observe(&mut self, dev_loss: f64) -> (bool, bool) {
        if dev_loss < self.best {
            self.best = dev_loss;
            self.stale = 0;
            return (true, false);
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.lr *= 0.5;
            self.stale = 0;
            (false, true)
        } else {
            (false, false)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest dev loss.
    pub model: MaskEstimator<T>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
}

/// Trains for `config.epochs` epochs and keeps the best dev-loss model.
/// When `log_path` is given the log is rewritten there after every epoch.
pub fn train<T: Scalar>(
    model: MaskEstimator<T>,
    train_set: &dyn ExampleSource,
    dev_set: &dyn ExampleSource,
    config: &TrainConfig,
    front: &FrontEnd,
    log_path: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Input(
            "training and dev sets must be non-empty".into(),
        ));
    }
    let mut trainer = Trainer::new(model, config.clone(), front.clone())?;
    let mut best_model = trainer.model().clone();
    let mut best_epoch = 0;
    let mut schedule = PlateauSchedule::new(config.lr, config.patience);
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let lr = trainer.lr();
        let mut total = 0.0;
        for batch in plan_batches(
            train_set,
            config.batch_size,
            derive_seed(config.seed, epoch as u64),
        ) {
            let prepared = load_batch(&trainer, train_set, &batch)?;
            let refs: Vec<&Prepared<T>> = prepared.iter().collect();
            total += trainer.train_step(&refs)? * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let dev_loss = mean_loss(&mut trainer, dev_set)?;
        let (improved, lr_halved) = schedule.observe(dev_loss);
        if improved {
            best_epoch = epoch;
            best_model = trainer.model().clone();
        }
        trainer.set_lr(schedule.lr);
        log.push(EpochLog {
            epoch,
            train_loss,
            dev_loss,
            lr,
            improved,
            lr_halved,
        });
        if let Some(path) = log_path {
            write_jsonl(path, &log)?;
        }
    }
    Ok(TrainOutcome {
        model: best_model,
        log,
        best_epoch,
        best_dev_loss: schedule.best,
    })
}
