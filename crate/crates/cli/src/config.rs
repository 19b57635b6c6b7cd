//! The flat run configuration: every field has a default, a JSON file may set
//! any subset, and command-line flags override both.

use std::path::{Path, PathBuf};

use radscan_core::dataset::{PreprocessConfig, Split};
use radscan_core::metrics::{Level, DEFAULT_THRESHOLD};
use radscan_core::modelzoo::{Backbone, ModelConfig};
use radscan_core::training::{CheckpointMetric, LossWeighting, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset root holding `train/` and `valid/`.
    pub root: PathBuf,
    /// Split read by `scan`, `eval` and `serve`.
    pub split: Split,
    pub backbone: Backbone,
    /// Start from ImageNet weights.
    pub pretrained: bool,
    pub weights_dir: Option<PathBuf>,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub loss_weighting: LossWeighting,
    pub checkpoint_metric: CheckpointMetric,
    pub stop_at_accuracy: Option<f64>,
    pub workers: usize,
    pub target_size: usize,
    pub augment: bool,
    pub max_rotation: f32,
    pub flip_probability: f32,
    pub threshold: f64,
    pub level: Level,
    pub alpha: f32,
    /// Parent of the per-invocation run directories.
    pub out: PathBuf,
    pub port: u16,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let pre = PreprocessConfig::default();
        RunConfig {
            root: PathBuf::from("MURA-v1.1"),
            split: Split::Valid,
            backbone: Backbone::Densenet121,
            pretrained: true,
            weights_dir: None,
            seed: train.seed,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: train.initial_lr,
            lr_decay_factor: train.lr_decay_factor,
            plateau_patience: train.plateau_patience,
            plateau_min_delta: train.plateau_min_delta,
            loss_weighting: train.loss_weighting,
            checkpoint_metric: train.checkpoint_metric,
            stop_at_accuracy: train.stop_at_accuracy,
            workers: train.workers,
            target_size: pre.target_size,
            augment: pre.augment,
            max_rotation: pre.max_rotation,
            flip_probability: pre.flip_probability,
            threshold: DEFAULT_THRESHOLD,
            level: Level::Study,
            alpha: radscan_core::cam::DEFAULT_ALPHA,
            out: PathBuf::from("runs"),
            port: 8080,
        }
    }
}

/// Flag values that replace config-file values when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub root: Option<PathBuf>,
    pub split: Option<Split>,
    pub backbone: Option<Backbone>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub out: Option<PathBuf>,
    pub port: Option<u16>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Defaults, then the optional file, then the flags.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match file {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &o.$field {
                    self.$field = v.clone();
                })*
            };
        }
        set!(root, split, backbone, epochs, batch_size, lr, seed, threshold, out, port);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config().validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CliError::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            target_size: self.target_size,
            augment: self.augment,
            max_rotation: self.max_rotation,
            flip_probability: self.flip_probability,
            ..PreprocessConfig::default()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut config = ModelConfig::new(self.backbone).pretrained(self.pretrained).seed(self.seed);
        config.weights_dir = self.weights_dir.clone();
        config
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            initial_lr: self.lr,
            lr_decay_factor: self.lr_decay_factor,
            plateau_patience: self.plateau_patience,
            plateau_min_delta: self.plateau_min_delta,
            loss_weighting: self.loss_weighting,
            seed: self.seed,
            checkpoint_metric: self.checkpoint_metric,
            workers: self.workers,
            preprocess: self.preprocess(),
            stop_at_accuracy: self.stop_at_accuracy,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 8 hex digits of the SHA-256 of the canonical JSON.
    pub fn short_hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        hex::encode(&digest[..4])
    }
}
