use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduce-on-plateau settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    /// Consecutive non-improving epochs that trigger one decay.
    pub patience: usize,
    /// An epoch improves only if it beats the best loss by at least this much.
    pub min_delta: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            initial_lr: 1e-4,
            decay_factor: 10.0,
            patience: 1,
            min_delta: 1e-4,
        }
    }
}

/// Stateful plateau rule. The counter restarts after each decay, so one
/// plateau window never triggers two decays.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    config: PlateauConfig,
    best: Option<f64>,
    bad_epochs: usize,
    decays: i32,
}

impl PlateauScheduler {
    pub fn new(config: PlateauConfig) -> Self {
        PlateauScheduler {
            config,
            best: None,
            bad_epochs: 0,
            decays: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.initial_lr / self.config.decay_factor.powi(self.decays)
    }

    pub fn decays(&self) -> i32 {
        self.decays
    }

    /// Record one validation loss; returns the learning rate for the next epoch.
    pub fn step(&mut self, valid_loss: f64) -> f64 {
        let improved = match self.best {
            None => true,
            Some(best) => best - valid_loss >= self.config.min_delta,
        };
        if improved {
            self.best = Some(valid_loss);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.config.patience {
                self.decays += 1;
                self.bad_epochs = 0;
            }
        }
        self.lr()
    }
}

/// Learning rate after the last entry of `history`, given the rate in effect during it.
pub fn lr_schedule_step(history: &[f64], current_lr: f64, config: &PlateauConfig) -> Result<f64> {
    let (last, earlier) = history
        .split_last()
        .ok_or_else(|| Error::contract("learning-rate schedule needs at least one validation loss"))?;
    let mut scheduler = PlateauScheduler::new(*config);
    for &loss in earlier {
        scheduler.step(loss);
    }
    let before = scheduler.decays();
    scheduler.step(*last);
    Ok(if scheduler.decays() > before {
        current_lr / config.decay_factor
    } else {
        current_lr
    })
}
