//! Training loop with iterative dense re-feeding.
//!
//! Every iteration runs a sparse update on a mini-batch, then `refeed_count`
//! dense updates in which the previous (detached) output is both the input
//! and the target under an all-ones mask.

use std::path::PathBuf;
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, CheckpointRecord};
use crate::data::{batch_iterator, densify, EvalSet, RatingDataset, MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};
use crate::loss::{masked_mse, masked_mse_gradient, rmse_from_mmse, Batch};
use crate::model::{Autoencoder, Mode, Parameters};
use crate::optim::{Optimizer, SgdMomentum};
use crate::real::Real;

/// Users per inference batch in [`evaluate`].
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Dense re-feeding passes per iteration; 0 disables re-feeding.
    pub refeed_count: usize,
    pub seed: u64,
    /// Evaluate every this many epochs (and always after the last one).
    pub eval_every: usize,
    /// Sample coding-layer dropout during re-feed passes too.
    pub refeed_dropout: bool,
    /// Clamp predictions to the rating scale when evaluating.
    pub clip_predictions: bool,
    pub threads: usize,
    /// Abort when the epoch training loss exceeds this multiple of the first
    /// step's loss ...
    pub divergence_factor: f64,
    /// ... for this many consecutive epochs.
    pub divergence_patience: usize,
    /// Where `best.ckpt` is written whenever the selection metric improves.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            learning_rate: 0.001,
            momentum: 0.9,
            refeed_count: 0,
            seed: 0,
            eval_every: 1,
            refeed_dropout: true,
            clip_predictions: false,
            threads: 1,
            divergence_factor: 10.0,
            divergence_patience: 5,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.divergence_factor.is_nan() || self.divergence_factor <= 1.0 || self.divergence_patience == 0 {
            return bad("divergence factor must exceed 1 with a positive patience".into());
        }
        Ok(())
    }
}

/// One row of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_mmse: f64,
    pub train_rmse: f64,
    pub refeed_mmse: Option<f64>,
    pub valid_rmse: Option<f64>,
    pub wall_ms: u64,
}

pub const METRICS_HEADER: &str = "epoch,train_mmse,train_rmse,refeed_mmse,valid_rmse,wall_ms";

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EpochMetrics {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.train_mmse,
            self.train_rmse,
            opt_field(self.refeed_mmse),
            opt_field(self.valid_rmse),
            self.wall_ms
        )
    }

    /// Equality ignoring wall-clock time.
    pub fn same_values(&self, other: &EpochMetrics) -> bool {
        let bits = |v: Option<f64>| v.map(f64::to_bits);
        self.epoch == other.epoch
            && self.train_mmse.to_bits() == other.train_mmse.to_bits()
            && self.train_rmse.to_bits() == other.train_rmse.to_bits()
            && bits(self.refeed_mmse) == bits(other.refeed_mmse)
            && bits(self.valid_rmse) == bits(other.valid_rmse)
    }
}

/// Parses a metrics CSV as written by [`EpochMetrics::to_csv_row`] under [`METRICS_HEADER`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || (i == 0 && line == METRICS_HEADER) {
            continue;
        }
        let err = |m: &str| Error::Parse {
            line: lineno,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err("expected 6 metrics fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        out.push(EpochMetrics {
            epoch: f[0].parse().map_err(|_| err("bad epoch"))?,
            train_mmse: num(f[1])?,
            train_rmse: num(f[2])?,
            refeed_mmse: opt(f[3])?,
            valid_rmse: opt(f[4])?,
            wall_ms: f[5].parse().map_err(|_| err("bad wall_ms"))?,
        });
    }
    Ok(out)
}

/// Losses of one iteration: the sparse pass first, then each re-feed pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub losses: Vec<f64>,
    /// Observed entries behind each loss.
    pub observed: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepPosition {
    pub epoch: usize,
    pub step: usize,
}

fn diverged(pos: StepPosition, reason: impl Into<String>) -> Error {
    Error::Diverged {
        epoch: pos.epoch,
        step: pos.step,
        reason: reason.into(),
        history: Vec::new(),
    }
}

#[allow(clippy::too_many_arguments)]
fn update<T: Real, O: Optimizer<T>>(
    model: &mut Autoencoder<T>,
    opt: &mut O,
    input: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    mask: ArrayView2<'_, T>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
    pos: StepPosition,
) -> Result<(f64, f64, Array2<T>)> {
    let (output, tape) = model.forward(input, mode, rng)?;
    let loss = masked_mse(output.view(), target, mask)?;
    if !loss.is_finite() {
        return Err(diverged(pos, format!("loss is {loss}")));
    }
    let grad = masked_mse_gradient(output.view(), target, mask)?;
    let grads = model.backward(&tape, grad.view())?;
    opt.step(model.params_mut(), &grads).map_err(|e| match e {
        Error::NonFinite(what) => diverged(pos, format!("non-finite {what}")),
        other => other,
    })?;
    let observed = mask.iter().map(|m| m.as_f64()).sum();
    Ok((loss, observed, output))
}

/// One optimization iteration on `batch`: a sparse update followed by
/// `config.refeed_count` dense re-feeding updates.
pub fn train_step<T: Real, O: Optimizer<T>>(
    model: &mut Autoencoder<T>,
    batch: &Batch<T>,
    config: &TrainConfig,
    opt: &mut O,
    rng: &mut ChaCha8Rng,
    pos: StepPosition,
) -> Result<StepMetrics> {
    let mut losses = Vec::with_capacity(1 + config.refeed_count);
    let mut observed = Vec::with_capacity(1 + config.refeed_count);
    let (loss, count, mut dense) = update(
        model,
        opt,
        batch.ratings.view(),
        batch.ratings.view(),
        batch.mask.view(),
        Mode::Train,
        rng,
        pos,
    )?;
    losses.push(loss);
    observed.push(count);
    if config.refeed_count > 0 {
        let ones = Array2::ones(dense.raw_dim());
        let mode = if config.refeed_dropout { Mode::Train } else { Mode::Eval };
        for _ in 0..config.refeed_count {
            // `dense` is a plain value here: no gradient reaches it.
            let (loss, count, next) = update(model, opt, dense.view(), dense.view(), ones.view(), mode, rng, pos)?;
            losses.push(loss);
            observed.push(count);
            dense = next;
        }
    }
    Ok(StepMetrics { losses, observed })
}

/// Squared error sum and rating count of `model` on `eval_set`.
///
/// Each user's training vector is the input; predictions are read at the
/// held-out items. Chunks are reduced in a fixed order, so the result does
/// not depend on the thread count.
pub fn evaluate_sse<T: Real>(
    model: &Autoencoder<T>,
    train: &RatingDataset,
    eval_set: &EvalSet,
    clip: bool,
) -> Result<(f64, usize)> {
    if model.n_items() != train.n_items() {
        return Err(Error::shape("evaluation items", &[model.n_items()], &[train.n_items()]));
    }
    let by_user: Vec<(u32, Vec<(u32, f32)>)> = eval_set.by_user().into_iter().collect();
    if let Some((u, _)) = by_user.iter().find(|(u, _)| *u as usize >= train.n_users()) {
        return Err(Error::UnknownUser(u.to_string()));
    }
    let partials: Vec<Result<(f64, usize)>> = by_user
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let users: Vec<u32> = chunk.iter().map(|(u, _)| *u).collect();
            let input = densify::<T>(train, &users)?;
            let pred = model.predict(input.view())?;
            let mut sse = 0.0;
            let mut count = 0;
            for (row, (_, targets)) in chunk.iter().enumerate() {
                for &(item, rating) in targets {
                    let mut y = pred[[row, item as usize]].as_f64();
                    if clip {
                        y = y.clamp(MIN_RATING as f64, MAX_RATING as f64);
                    }
                    let d = rating as f64 - y;
                    sse += d * d;
                    count += 1;
                }
            }
            Ok((sse, count))
        })
        .collect();
    let mut sse = 0.0;
    let mut count = 0;
    for p in partials {
        let (s, c) = p?;
        sse += s;
        count += c;
    }
    Ok((sse, count))
}

/// RMSE over all ratings of `eval_set`.
pub fn evaluate<T: Real>(model: &Autoencoder<T>, train: &RatingDataset, eval_set: &EvalSet, clip: bool) -> Result<f64> {
    let (sse, count) = evaluate_sse(model, train, eval_set, clip)?;
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    rmse_from_mmse(sse / count as f64)
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    pub history: Vec<EpochMetrics>,
    /// Lowest selection RMSE seen (validation RMSE, or training-set RMSE without a validation set).
    pub best: CheckpointRecord<T>,
}

/// splitmix64 finalizer, for deriving independent stream seeds.
fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fit<T: Real>(
    model: &mut Autoencoder<T>,
    train: &RatingDataset,
    validation: Option<&EvalSet>,
    config: &TrainConfig,
) -> Result<FitOutcome<T>> {
    fit_with(model, train, validation, config, |_| {})
}

/// [`fit`] with a callback receiving each epoch's metrics as soon as they exist.
pub fn fit_with<T: Real, F: FnMut(&EpochMetrics) + Send>(
    model: &mut Autoencoder<T>,
    train: &RatingDataset,
    validation: Option<&EvalSet>,
    config: &TrainConfig,
    on_epoch: F,
) -> Result<FitOutcome<T>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| fit_inner(model, train, validation, config, on_epoch))
}

fn fit_inner<T: Real, F: FnMut(&EpochMetrics)>(
    model: &mut Autoencoder<T>,
    train: &RatingDataset,
    validation: Option<&EvalSet>,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<FitOutcome<T>> {
    if model.n_items() != train.n_items() {
        return Err(Error::shape("model items", &[train.n_items()], &[model.n_items()]));
    }
    let validation = validation.filter(|v| !v.is_empty());
    let train_as_eval;
    let selection_set = match validation {
        Some(v) => v,
        None => {
            train_as_eval = train.as_eval_set();
            &train_as_eval
        }
    };
    let select = |m: &Autoencoder<T>| evaluate(m, train, selection_set, config.clip_predictions);

    let mut opt = SgdMomentum::new(model.params(), config.learning_rate, config.momentum)?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, u64::MAX));
    let mut history: Vec<EpochMetrics> = Vec::with_capacity(config.epochs);
    let mut best: Option<CheckpointRecord<T>> = None;
    let mut initial_loss: Option<f64> = None;
    let mut blowup_streak = 0;

    let with_history = |e: Error, history: &Vec<EpochMetrics>| match e {
        Error::Diverged {
            epoch, step, reason, ..
        } => Error::Diverged {
            epoch,
            step,
            reason,
            history: history.clone(),
        },
        other => other,
    };

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let batches = batch_iterator::<T>(train, config.batch_size, mix(config.seed, epoch as u64))?;
        let mut sse = 0.0;
        let mut count = 0.0;
        let mut refeed_sse = 0.0;
        let mut refeed_count = 0.0;
        let run = for_each_prefetched(batches, |step, batch| {
            let pos = StepPosition { epoch, step };
            let m = train_step(model, &batch, config, &mut opt, &mut dropout_rng, pos)?;
            initial_loss.get_or_insert(m.losses[0]);
            sse += m.losses[0] * m.observed[0];
            count += m.observed[0];
            for (l, c) in m.losses.iter().zip(&m.observed).skip(1) {
                refeed_sse += l * c;
                refeed_count += c;
            }
            Ok(())
        });
        run.map_err(|e| with_history(e, &history))?;

        let train_mmse = sse / count;
        let pos = StepPosition { epoch, step: 0 };
        let initial = initial_loss.unwrap_or(train_mmse);
        if train_mmse > config.divergence_factor * initial {
            blowup_streak += 1;
            if blowup_streak >= config.divergence_patience {
                return Err(with_history(
                    diverged(
                        pos,
                        format!(
                            "training loss {train_mmse:.4} above {}x the initial {initial:.4} for {blowup_streak} epochs",
                            config.divergence_factor
                        ),
                    ),
                    &history,
                ));
            }
        } else {
            blowup_streak = 0;
        }

        let evaluate_now = epoch % config.eval_every == 0 || epoch == config.epochs;
        let mut valid_rmse = None;
        if evaluate_now {
            let score = select(model)?;
            if !score.is_finite() {
                return Err(with_history(
                    diverged(pos, format!("evaluation RMSE is {score}")),
                    &history,
                ));
            }
            if validation.is_some() {
                valid_rmse = Some(score);
            }
            if best.as_ref().is_none_or(|b| score < b.eval_rmse) {
                let record = CheckpointRecord {
                    epoch,
                    model: model.clone(),
                    velocity: opt.velocity().clone(),
                    eval_rmse: score,
                    train_mmse,
                    item_tokens: train.item_tokens().to_vec(),
                };
                if let Some(dir) = &config.checkpoint_dir {
                    std::fs::create_dir_all(dir)?;
                    save_checkpoint(&record, &dir.join("best.ckpt"))?;
                }
                best = Some(record);
            }
        }

        let metrics = EpochMetrics {
            epoch,
            train_mmse,
            train_rmse: rmse_from_mmse(train_mmse)?,
            refeed_mmse: (refeed_count > 0.0).then(|| refeed_sse / refeed_count),
            valid_rmse,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        on_epoch(&metrics);
        history.push(metrics);
    }

    let best = match best {
        Some(b) => b,
        None => {
            let train_rmse = evaluate(model, train, &train.as_eval_set(), config.clip_predictions)?;
            CheckpointRecord {
                epoch: 0,
                model: model.clone(),
                velocity: Parameters::zeros_like(model.params()),
                eval_rmse: select(model)?,
                train_mmse: train_rmse * train_rmse,
                item_tokens: train.item_tokens().to_vec(),
            }
        }
    };
    Ok(FitOutcome { history, best })
}

/// Runs `f` on every item while the next item is produced on another thread.
fn for_each_prefetched<I, F>(iter: I, mut f: F) -> Result<()>
where
    I: Iterator + Send,
    I::Item: Send,
    F: FnMut(usize, I::Item) -> Result<()>,
{
    std::thread::scope(|scope| {
        let (tx, rx) = sync_channel(1);
        scope.spawn(move || {
            for item in iter {
                if tx.send(item).is_err() {
                    break;
                }
            }
        });
        for (i, item) in rx.iter().enumerate() {
            f(i, item)?;
        }
        Ok(())
    })
}

/// Draws a seed for a fresh model from a training seed.
pub fn model_seed(seed: u64) -> u64 {
    mix(seed, 0x006d_6f64_656c)
}
