use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use radscan_core::dataset::{load_image, preprocess, Manifest, Mode, PreprocessConfig, StudyRecord};
use radscan_core::metrics::aggregate_study;
use radscan_core::modelzoo::Classifier;
use serde::{Deserialize, Serialize};

use crate::error::ServiceResult;
use crate::store::{Store, StudyScore};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub scored: usize,
    /// `(study_id, message)` for studies that could not be scored.
    pub failed: Vec<(String, String)>,
}

fn score_study(
    model: &dyn Classifier,
    study: &StudyRecord,
    config: &PreprocessConfig,
    threshold: f64,
) -> radscan_core::Result<StudyScore> {
    // eval mode never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs = study
        .image_paths
        .iter()
        .map(|path| preprocess(&load_image(path)?, config, Mode::Eval, &mut rng))
        .collect::<radscan_core::Result<Vec<_>>>()?;
    let prediction = model.predict(&inputs, false)?;
    let probs: Vec<f64> = prediction.probabilities.iter().map(|p| *p as f64).collect();
    let (probability, call) = aggregate_study(&probs, threshold)?;
    Ok(StudyScore {
        study_id: study.study_id.clone(),
        body_part: study.body_part,
        probability,
        model_call: call,
        images: study.image_paths.iter().cloned().zip(probs).collect(),
    })
}

/// Score every study and write the results into the worklist. Studies that
/// fail (unreadable images, model errors) are recorded and skipped.
pub fn score_manifest(
    store: &Store,
    model: &dyn Classifier,
    manifest: &Manifest,
    config: &PreprocessConfig,
    threshold: f64,
) -> ServiceResult<ScoreSummary> {
    let mut summary = ScoreSummary::default();
    for study in &manifest.studies {
        match score_study(model, study, config, threshold) {
            Ok(score) => {
                store.upsert_score(&score)?;
                summary.scored += 1;
            }
            Err(e) => {
                log::warn!("could not score {}: {e}", study.study_id);
                store.record_failure(&study.study_id, &e.to_string())?;
                summary.failed.push((study.study_id.clone(), e.to_string()));
            }
        }
    }
    Ok(summary)
}
