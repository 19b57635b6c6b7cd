use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{aggregate_study, predict_label, ConfusionMatrix, Metrics, DEFAULT_THRESHOLD};
use crate::dataset::{BatchLoader, BodyPart, Label, Manifest, Mode, PreprocessConfig};
use crate::error::{Error, Result};
use crate::modelzoo::{Backbone, Classifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Image,
    Study,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "image" => Ok(Level::Image),
            "study" => Ok(Level::Study),
            _ => Err(Error::Config(format!("unknown evaluation level `{s}`"))),
        }
    }
}

/// Model output for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub study_id: String,
    pub body_part: BodyPart,
    pub label: Label,
    pub path: PathBuf,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub preprocess: PreprocessConfig,
    pub batch_size: usize,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            preprocess: PreprocessConfig::default(),
            batch_size: 16,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    #[serde(default)]
    pub backbone: Option<Backbone>,
    pub level: Level,
    pub threshold: f64,
    pub overall: Metrics,
    pub per_body_part: BTreeMap<BodyPart, Metrics>,
    #[serde(default)]
    pub parameter_count: Option<u64>,
    #[serde(default)]
    pub training_seconds: Option<f64>,
}

/// Eval-mode forward pass over every image in manifest order.
pub fn score_images(model: &dyn Classifier, manifest: &Manifest, options: &EvalOptions) -> Result<Vec<ImageScore>> {
    let preprocess = PreprocessConfig {
        augment: false,
        ..options.preprocess.clone()
    };
    let loader = BatchLoader::new(manifest, preprocess, Mode::Eval)?.with_workers(options.workers)?;
    // no augmentation in eval mode, so the stream never influences pixels
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut scores = Vec::with_capacity(loader.len());
    let mut offset = 0;
    for batch in loader.epoch(options.batch_size, false, &mut rng)? {
        let batch = batch?;
        let prediction = model.predict(&batch.images, false).map_err(|e| match &batch.study_ids[..] {
            [only] => Error::Study {
                study_id: only.clone(),
                source: Box::new(e),
            },
            _ => e,
        })?;
        if prediction.probabilities.len() != batch.len() {
            return Err(Error::contract(format!(
                "model returned {} probabilities for {} images",
                prediction.probabilities.len(),
                batch.len()
            )));
        }
        for (i, p) in prediction.probabilities.iter().enumerate() {
            let record = &loader.records()[offset + i];
            scores.push(ImageScore {
                study_id: record.study_id.clone(),
                body_part: record.body_part,
                label: record.label,
                path: record.path.clone(),
                probability: *p as f64,
            });
        }
        offset += batch.len();
    }
    Ok(scores)
}

/// Turn image scores into a report at the requested level.
pub fn report_from_scores(model: &str, scores: &[ImageScore], level: Level, threshold: f64) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(Error::contract("no scores to evaluate"));
    }
    // (body part, predicted abnormal, actually abnormal)
    let decisions: Vec<(BodyPart, bool, bool)> = match level {
        Level::Image => scores
            .iter()
            .map(|s| (s.body_part, predict_label(s.probability, threshold).is_abnormal(), s.label.is_abnormal()))
            .collect(),
        Level::Study => {
            let mut studies: Vec<(&str, BodyPart, Label, Vec<f64>)> = Vec::new();
            let mut index: BTreeMap<&str, usize> = BTreeMap::new();
            for s in scores {
                match index.get(s.study_id.as_str()) {
                    Some(&i) => studies[i].3.push(s.probability),
                    None => {
                        index.insert(&s.study_id, studies.len());
                        studies.push((&s.study_id, s.body_part, s.label, vec![s.probability]));
                    }
                }
            }
            studies
                .into_iter()
                .map(|(_, part, label, probs)| {
                    let (_, predicted) = aggregate_study(&probs, threshold)?;
                    Ok((part, predicted.is_abnormal(), label.is_abnormal()))
                })
                .collect::<Result<_>>()?
        }
    };

    let mut per_part: BTreeMap<BodyPart, ConfusionMatrix> = BTreeMap::new();
    for (part, predicted, actual) in decisions {
        per_part.entry(part).or_default().record(predicted, actual);
    }
    let overall = per_part.values().copied().sum();
    Ok(EvalReport {
        model: model.to_string(),
        backbone: model.parse().ok(),
        level,
        threshold,
        overall: Metrics::from_confusion(overall),
        per_body_part: per_part
            .into_iter()
            .map(|(part, cm)| (part, Metrics::from_confusion(cm)))
            .collect(),
        parameter_count: None,
        training_seconds: None,
    })
}

/// Score a held-out manifest and compute overall and per-body-part metrics.
pub fn evaluate(
    model: &dyn Classifier,
    manifest: &Manifest,
    level: Level,
    threshold: Option<f64>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let scores = score_images(model, manifest, options)?;
    report_from_scores(&model.name(), &scores, level, threshold.unwrap_or(DEFAULT_THRESHOLD))
}
