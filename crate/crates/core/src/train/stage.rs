use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::prepare::{denoise_split, make_batch, PreparedSplit};
use super::TrainingConfig;
use crate::error::{Error, Result};
use crate::nn::{flatten, load_flat, Adam};
use crate::seed::{self, Stream};
use crate::tracknet::{forward_sequence, SeqMode, TrackNetModel};

/// One Adam state per trainable module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub denoiser: Adam,
    pub encoder: Adam,
    pub gain: Adam,
}

impl Optimizers {
    pub fn new(model: &TrackNetModel, lr: f64) -> Self {
        Optimizers {
            denoiser: Adam::for_params(&model.denoiser, lr),
            encoder: Adam::for_params(&model.encoder, lr),
            gain: Adam::for_params(&model.gain, lr),
        }
    }
}

/// Stops once the monitored loss has not strictly improved for `patience`
/// consecutive epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
    seen: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
            seen: 0,
        }
    }

    /// Records one epoch; returns `(improved, stop)`.
    pub fn observe(&mut self, loss: f64) -> (bool, bool) {
        let epoch = self.seen;
        self.seen += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.stale >= self.patience)
        }
    }
}

/// Module updated during an epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainedModule {
    Denoiser,
    Encoder,
    Gain,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    pub epoch: usize,
    pub module: TrainedModule,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Per-run overrides of [`TrainingConfig`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageOptions {
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: u8,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub initial_val_loss: f64,
    pub stopped_early: bool,
    pub optimizers: Optimizers,
}

fn stage_mode(stage: u8) -> Result<(SeqMode, bool)> {
    match stage {
        1 => Ok((SeqMode::Denoise, false)),
        2 => Ok((SeqMode::Teacher, true)),
        3 => Ok((SeqMode::Closed, true)),
        4 => Ok((SeqMode::Closed, false)),
        s => Err(Error::Config(format!("stage must be 1..=4, got {s}"))),
    }
}

fn module_for(stage: u8, epoch: usize) -> TrainedModule {
    match stage {
        1 => TrainedModule::Denoiser,
        2 => TrainedModule::Encoder,
        3 if epoch % 2 == 0 => TrainedModule::Gain,
        3 => TrainedModule::Encoder,
        _ => TrainedModule::All,
    }
}

/// Mean loss over a split, batches weighted by their size.
fn split_loss(
    model: &TrackNetModel,
    p: &PreparedSplit,
    cache: Option<&[f64]>,
    mode: SeqMode,
    alpha: f64,
    batch_size: usize,
) -> Result<f64> {
    let idx: Vec<usize> = (0..p.n_samples).collect();
    let mut acc = 0.0;
    for chunk in idx.chunks(batch_size) {
        let b = make_batch(p, chunk, cache);
        acc += forward_sequence(model, &b, mode, alpha)?.output.loss * chunk.len() as f64;
    }
    Ok(acc / p.n_samples as f64)
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        d @ Error::Diverged { .. } => d,
        e => Error::Diverged {
            epoch,
            detail: format!("{e}"),
        },
    }
}

/// Trains curriculum stage `stage` (1 to 4) in place.
///
/// Stage 1 fits the Denoiser, stage 2 the Encoder on stored previous states,
/// stage 3 alternates Kalman-gain and Encoder epochs in closed loop with the
/// Denoiser frozen, stage 4 fine-tunes everything end to end. Frozen modules
/// are left bit-identical. Parameters of the best validation epoch are kept.
pub fn run_stage(
    model: &mut TrackNetModel,
    stage: u8,
    train: &PreparedSplit,
    val: &PreparedSplit,
    tcfg: &TrainingConfig,
    opts: &StageOptions,
    root_seed: u64,
    mut on_epoch: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<StageReport> {
    tcfg.validate()?;
    let (mode, cached) = stage_mode(stage)?;
    if model.completed_stage + 1 < stage {
        return Err(Error::Prerequisite(format!(
            "stage {stage} needs stage {} to be completed first; the model has completed stage {}",
            stage - 1,
            model.completed_stage
        )));
    }
    let max_epochs = opts.max_epochs.unwrap_or(tcfg.max_epochs).max(1);
    let batch_size = opts.batch_size.unwrap_or(tcfg.batch_size).max(1);
    let lr = opts.learning_rate.unwrap_or(tcfg.learning_rate(stage));
    let mut stopper = EarlyStopper::new(opts.patience.unwrap_or(tcfg.patience).max(1));
    let mut opt = Optimizers::new(model, lr);

    // The Denoiser is frozen in stages 2 and 3, so its outputs are computed once.
    let (train_cache, val_cache) = if cached {
        (
            Some(denoise_split(model, train, batch_size)?),
            Some(denoise_split(model, val, batch_size)?),
        )
    } else {
        (None, None)
    };
    let initial_val_loss =
        split_loss(model, val, val_cache.as_deref(), mode, tcfg.alpha, batch_size).map_err(|e| diverged(0, e))?;
    let mut best_params = flatten(model);
    let mut records = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.n_samples).collect();

    for epoch in 0..max_epochs {
        let module = module_for(stage, epoch);
        let mut rng = seed::rng(root_seed, Stream::Shuffle, ((stage as u64) << 32) | epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch = make_batch(train, chunk, train_cache.as_deref());
            let fwd = forward_sequence(model, &batch, mode, tcfg.alpha).map_err(|e| diverged(epoch, e))?;
            let loss = fwd.output.loss;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training loss is {loss}"),
                });
            }
            acc += loss * chunk.len() as f64;
            let grads = fwd.backward(
                model,
                &batch,
                module == TrainedModule::Denoiser || module == TrainedModule::All,
            );
            let step = match module {
                TrainedModule::Denoiser => opt.denoiser.update(&mut model.denoiser, &grads.denoiser),
                TrainedModule::Encoder => opt.encoder.update(&mut model.encoder, &grads.encoder),
                TrainedModule::Gain => opt.gain.update(&mut model.gain, &grads.gain),
                TrainedModule::All => opt
                    .denoiser
                    .update(&mut model.denoiser, &grads.denoiser)
                    .and_then(|_| opt.encoder.update(&mut model.encoder, &grads.encoder))
                    .and_then(|_| opt.gain.update(&mut model.gain, &grads.gain)),
            };
            step.map_err(|e| diverged(epoch, e))?;
        }
        let val_loss = split_loss(model, val, val_cache.as_deref(), mode, tcfg.alpha, batch_size)
            .map_err(|e| diverged(epoch, e))?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation loss is {val_loss}"),
            });
        }
        let rec = EpochRecord {
            stage,
            epoch,
            module,
            train_loss: acc / train.n_samples as f64,
            val_loss,
        };
        if let Some(cb) = on_epoch.as_mut() {
            cb(&rec);
        }
        records.push(rec);
        let (improved, stop) = stopper.observe(val_loss);
        if improved {
            best_params = flatten(model);
        }
        if stop {
            stopped_early = true;
            break;
        }
    }
    load_flat(model, &best_params)?;
    model.completed_stage = model.completed_stage.max(stage);
    Ok(StageReport {
        stage,
        epochs: records,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
        initial_val_loss,
        stopped_early,
        optimizers: opt,
    })
}
