//! Fine-tuning loop: weighted binary cross-entropy, Adam, reduce-on-plateau
//! learning-rate decay and best-checkpoint selection.

mod loss;
mod schedule;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{compute_loss, loss_tensor, ClassWeights, PROB_EPS};
pub use schedule::{lr_schedule_step, PlateauConfig, PlateauScheduler};

use crate::dataset::{BatchLoader, Manifest, Mode, PreprocessConfig};
use crate::error::{Error, Result};
use crate::metrics::{report_from_scores, score_images, EvalOptions, Level, Metrics, DEFAULT_THRESHOLD};
use crate::modelzoo::{save_checkpoint, CheckpointMeta, ModelHandle};

pub const ALLOWED_BATCH_SIZES: [usize; 3] = [16, 32, 64];

/// Adam moments and epsilon; only the learning rate is tuned.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub const HISTORY_FILE: &str = "history.jsonl";
pub const BEST_CHECKPOINT_FILE: &str = "best.ckpt";
pub const RESULT_FILE: &str = "result.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    #[default]
    None,
    ClassBalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointMetric {
    #[default]
    Kappa,
    Loss,
}

impl CheckpointMetric {
    pub fn name(self) -> &'static str {
        match self {
            CheckpointMetric::Kappa => "kappa",
            CheckpointMetric::Loss => "loss",
        }
    }

    fn improves(self, candidate: f64, best: Option<f64>) -> bool {
        match (self, best) {
            (_, None) => true,
            (CheckpointMetric::Kappa, Some(b)) => candidate > b,
            (CheckpointMetric::Loss, Some(b)) => candidate < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub loss_weighting: LossWeighting,
    /// Seeds shuffling and augmentation.
    pub seed: u64,
    pub checkpoint_metric: CheckpointMetric,
    /// Image decoding threads; results do not depend on it.
    pub workers: usize,
    pub preprocess: PreprocessConfig,
    /// Stop early once study-level validation accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            initial_lr: 1e-4,
            lr_decay_factor: 10.0,
            plateau_patience: 1,
            plateau_min_delta: 1e-4,
            loss_weighting: LossWeighting::None,
            seed: 0,
            checkpoint_metric: CheckpointMetric::Kappa,
            workers: 1,
            preprocess: PreprocessConfig::default(),
            stop_at_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if !ALLOWED_BATCH_SIZES.contains(&self.batch_size) {
            return fail(format!("batch size must be one of {ALLOWED_BATCH_SIZES:?}, got {}", self.batch_size));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return fail(format!("initial learning rate must be positive, got {}", self.initial_lr));
        }
        if !(self.lr_decay_factor > 1.0 && self.lr_decay_factor.is_finite()) {
            return fail(format!("decay factor must exceed 1, got {}", self.lr_decay_factor));
        }
        if self.plateau_patience < 1 {
            return fail("plateau patience must be at least 1".into());
        }
        if !(self.plateau_min_delta >= 0.0) {
            return fail(format!("plateau min delta must be non-negative, got {}", self.plateau_min_delta));
        }
        if let Some(target) = self.stop_at_accuracy {
            if !(0.0..=1.0).contains(&target) {
                return fail(format!("stop accuracy must lie in [0, 1], got {target}"));
            }
        }
        if self.workers < 1 {
            return fail("workers must be at least 1".into());
        }
        self.preprocess.validate()
    }

    pub fn plateau(&self) -> PlateauConfig {
        PlateauConfig {
            initial_lr: self.initial_lr,
            decay_factor: self.lr_decay_factor,
            patience: self.plateau_patience,
            min_delta: self.plateau_min_delta,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_kappa: f64,
    /// Study-level accuracy at the default threshold.
    pub valid_accuracy: f64,
    /// Rate in effect during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingResult {
    pub history: Vec<EpochRecord>,
    pub best_checkpoint: PathBuf,
    pub best_epoch: usize,
    pub checkpoint_metric: CheckpointMetric,
    pub best_metric: f64,
    pub total_seconds: f64,
}

impl TrainingResult {
    pub fn metric_of(&self, record: &EpochRecord) -> f64 {
        match self.checkpoint_metric {
            CheckpointMetric::Kappa => record.valid_kappa,
            CheckpointMetric::Loss => record.valid_loss,
        }
    }
}

/// Validation loss and study-level metrics in eval mode.
pub fn validate_model(
    model: &ModelHandle,
    valid: &Manifest,
    weights: ClassWeights,
    options: &EvalOptions,
) -> Result<(f64, Metrics)> {
    let scores = score_images(model, valid, options)?;
    let probs: Vec<f64> = scores.iter().map(|s| s.probability).collect();
    let targets: Vec<f64> = scores.iter().map(|s| s.label.target()).collect();
    let loss = compute_loss(&probs, &targets, weights)?;
    let report = report_from_scores(&model.backbone().to_string(), &scores, Level::Study, DEFAULT_THRESHOLD)?;
    Ok((loss, report.overall))
}

/// Fine-tune `model` in place. Writes the history log, the best checkpoint
/// and the result summary into `out_dir`.
/// Adam with default moments and no weight decay.
pub fn adam(vars: Vec<Var>, lr: f64) -> Result<AdamW> {
    let params = ParamsAdamW {
        lr,
        beta1: ADAM_BETA1,
        beta2: ADAM_BETA2,
        eps: ADAM_EPS,
        weight_decay: 0.0,
    };
    Ok(AdamW::new(vars, params)?)
}

pub fn train(
    model: &ModelHandle,
    train_set: &Manifest,
    valid_set: &Manifest,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainingResult> {
    config.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::contract("training and validation manifests must be non-empty"));
    }
    let size = config.preprocess.target_size;
    if size < model.min_input() {
        return Err(Error::Config(format!(
            "{} needs inputs of at least {} pixels, target size is {size}",
            model.backbone(),
            model.min_input()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let weights = match config.loss_weighting {
        LossWeighting::None => ClassWeights::UNIT,
        LossWeighting::ClassBalanced => ClassWeights::from_manifest(train_set)?,
    };
    let loader = BatchLoader::new(train_set, config.preprocess.clone(), Mode::Train)?.with_workers(config.workers)?;
    let eval_options = EvalOptions {
        preprocess: config.preprocess.clone(),
        batch_size: config.batch_size,
        workers: config.workers,
    };
    let mut optimizer = adam(model.trainable_vars(), config.initial_lr)?;
    let mut scheduler = PlateauScheduler::new(config.plateau());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let history_path = out_dir.join(HISTORY_FILE);
    let mut log = BufWriter::new(File::create(&history_path).map_err(|e| Error::io(&history_path, e))?);
    let best_path = out_dir.join(BEST_CHECKPOINT_FILE);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64)> = None;
    let started = Instant::now();

    for epoch in 1..=config.epochs {
        let epoch_start = Instant::now();
        let lr = scheduler.lr();
        optimizer.set_learning_rate(lr);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (index, batch) in loader.epoch(config.batch_size, true, &mut rng)?.enumerate() {
            let batch = batch?;
            let x = model.batch_tensor(&batch.images)?;
            let (_, logits) = model.forward_tensor(&x, true)?;
            let probs = candle_nn::ops::sigmoid(&logits)?;
            let targets: Vec<f32> = batch.labels.iter().map(|l| l.target() as f32).collect();
            let targets = Tensor::from_vec(targets, batch.len(), &Device::Cpu)?;
            let loss = loss_tensor(&probs, &targets, weights)?;
            let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: index, lr });
            }
            optimizer.backward_step(&loss)?;
            loss_sum += value * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = loss_sum / seen as f64;
        let (valid_loss, valid_metrics) = validate_model(model, valid_set, weights, &eval_options)?;
        let valid_kappa = valid_metrics.kappa;
        if !valid_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                lr,
            });
        }
        scheduler.step(valid_loss);

        let record = EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            valid_kappa,
            valid_accuracy: valid_metrics.accuracy,
            lr,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        let metric = match config.checkpoint_metric {
            CheckpointMetric::Kappa => valid_kappa,
            CheckpointMetric::Loss => valid_loss,
        };
        if config.checkpoint_metric.improves(metric, best.map(|(_, m)| m)) {
            best = Some((epoch, metric));
            let meta = CheckpointMeta {
                config: model.config().clone(),
                epoch,
                metric_name: Some(config.checkpoint_metric.name().to_string()),
                best_metric: Some(metric),
                preprocess: config.preprocess.clone(),
            };
            save_checkpoint(model, &meta, &best_path)?;
        }
        log::info!(
            "epoch {epoch}/{}: train loss {train_loss:.4}, valid loss {valid_loss:.4}, kappa {valid_kappa:.3}, lr {lr:e}",
            config.epochs
        );
        serde_json::to_writer(&mut log, &record)?;
        writeln!(log).and_then(|_| log.flush()).map_err(|e| Error::io(&history_path, e))?;
        let reached = config.stop_at_accuracy.is_some_and(|t| record.valid_accuracy >= t);
        history.push(record);
        if reached {
            log::info!("validation accuracy target reached at epoch {epoch}");
            break;
        }
    }

    let (best_epoch, best_metric) = best.expect("at least one epoch ran");
    let result = TrainingResult {
        history,
        best_checkpoint: best_path,
        best_epoch,
        checkpoint_metric: config.checkpoint_metric,
        best_metric,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    let result_path = out_dir.join(RESULT_FILE);
    std::fs::write(&result_path, serde_json::to_vec_pretty(&result)?).map_err(|e| Error::io(&result_path, e))?;
    Ok(result)
}
