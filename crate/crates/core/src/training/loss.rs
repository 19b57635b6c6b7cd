use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::dataset::Manifest;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub abnormal: f64,
    pub normal: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        abnormal: 1.0,
        normal: 1.0,
    };

    /// Each class weighted by the other class's share, so the rarer class counts more.
    pub fn balanced(normal: usize, abnormal: usize) -> Result<Self> {
        let total = (normal + abnormal) as f64;
        if normal == 0 || abnormal == 0 {
            return Err(Error::Config(format!(
                "class balancing needs both labels present (normal {normal}, abnormal {abnormal})"
            )));
        }
        Ok(ClassWeights {
            abnormal: normal as f64 / total,
            normal: abnormal as f64 / total,
        })
    }

    /// Balanced weights from the image-level label counts of a training manifest.
    pub fn from_manifest(manifest: &Manifest) -> Result<Self> {
        let (normal, abnormal) = manifest.image_label_counts();
        Self::balanced(normal, abnormal)
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights::UNIT
    }
}

/// Mean weighted binary cross-entropy; `targets` are 1 for abnormal, 0 for normal.
pub fn compute_loss(probabilities: &[f64], targets: &[f64], weights: ClassWeights) -> Result<f64> {
    if probabilities.len() != targets.len() {
        return Err(Error::contract(format!(
            "{} probabilities vs {} labels",
            probabilities.len(),
            targets.len()
        )));
    }
    if probabilities.is_empty() {
        return Err(Error::contract("loss of an empty batch"));
    }
    let total: f64 = probabilities
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(weights.abnormal * y * p.ln() + weights.normal * (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probabilities.len() as f64)
}

/// Differentiable form of [`compute_loss`] over 1-D tensors of equal length.
pub fn loss_tensor(probabilities: &Tensor, targets: &Tensor, weights: ClassWeights) -> Result<Tensor> {
    if probabilities.dims() != targets.dims() || probabilities.rank() != 1 {
        return Err(Error::contract(format!(
            "loss expects matching 1-D tensors, got {:?} and {:?}",
            probabilities.dims(),
            targets.dims()
        )));
    }
    if probabilities.elem_count() == 0 {
        return Err(Error::contract("loss of an empty batch"));
    }
    let p = probabilities.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let pos = (targets * p.log()?)?.affine(weights.abnormal, 0.0)?;
    let neg = (targets.affine(-1.0, 1.0)? * p.affine(-1.0, 1.0)?.log()?)?.affine(weights.normal, 0.0)?;
    Ok((pos + neg)?.mean_all()?.neg()?)
}
