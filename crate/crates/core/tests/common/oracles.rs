use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radscan_core::cam::compute_cam;
use radscan_core::metrics::{confusion, ConfusionMatrix, Metrics};

pub const METRIC_TOL: f64 = 1e-9;
pub const CAM_TOL: f64 = 1e-6;

/// Expand a confusion matrix into (prediction, label) vectors.
pub fn expand(cm: &ConfusionMatrix) -> (Vec<bool>, Vec<bool>) {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (n, p, t) in [(cm.tp, true, true), (cm.fp, true, false), (cm.tn, false, false), (cm.fn_, false, true)] {
        for _ in 0..n {
            pred.push(p);
            truth.push(t);
        }
    }
    (pred, truth)
}

/// Brute force over label vectors: every quantity is a count of matching pairs.
pub fn brute_force(pred: &[bool], truth: &[bool]) -> [f64; 5] {
    let n = pred.len() as f64;
    let count = |f: &dyn Fn(bool, bool) -> bool| pred.iter().zip(truth).filter(|(p, t)| f(**p, **t)).count() as f64;
    let agree = count(&|p, t| p == t);
    let both = count(&|p, t| p && t);
    let predicted = count(&|p, _| p);
    let actual = count(&|_, t| t);
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let precision = div(both, predicted);
    let recall = div(both, actual);
    // F1 as 2TP / (2TP + FP + FN), not via P and R
    let f1 = div(2.0 * both, predicted + actual);
    // chance agreement from the marginals of each rater
    let pe = (predicted / n) * (actual / n) + (1.0 - predicted / n) * (1.0 - actual / n);
    let kappa = if pe == 1.0 { 0.0 } else { (agree / n - pe) / (1.0 - pe) };
    [agree / n, precision, recall, f1, kappa]
}

/// Closed-form kappa for a 2×2 table.
pub fn kappa_closed_form(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let den = (tp + fp) * (fp + tn) + (tp + fn_) * (fn_ + tn);
    if den == 0.0 {
        0.0
    } else {
        2.0 * (tp * tn - fn_ * fp) / den
    }
}

pub fn library(cm: &ConfusionMatrix) -> [f64; 5] {
    let m = Metrics::from_confusion(*cm);
    [m.accuracy, m.precision, m.recall, m.f1, m.kappa]
}

/// Explicit channel-by-pixel accumulation in f64.
pub fn double_loop(features: &Array3<f32>, weights: &[f32]) -> Array2<f64> {
    let (c, h, w) = features.dim();
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for k in 0..c {
                acc += weights[k] as f64 * features[[k, y, x]] as f64;
            }
            out[[y, x]] = acc;
        }
    }
    out
}

pub fn random_instance(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> (Array3<f32>, Vec<f32>) {
    // non-negative activations, as after a ReLU
    let features = Array3::from_shape_fn((c, h, w), |_| rng.random_range(0.0f32..4.0));
    let weights = (0..c).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    (features, weights)
}


/// Largest deviation of the library metrics from the brute-force and
/// closed-form references over `trials` random matrices.
pub fn metric_oracle_error(trials: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let cm = ConfusionMatrix::new(
            rng.random_range(0..200),
            rng.random_range(0..200),
            rng.random_range(0..200),
            rng.random_range(1..200),
        );
        let (pred, truth) = expand(&cm);
        if confusion(&pred, &truth).map_err(|e| e.to_string())? != cm {
            return Err(format!("confusion does not recount {cm:?}"));
        }
        let got = library(&cm);
        for (g, w) in got.iter().zip(brute_force(&pred, &truth)) {
            worst = worst.max((g - w).abs());
        }
        worst = worst.max((got[4] - kappa_closed_form(&cm)).abs());
    }
    Ok(worst)
}

/// Largest deviation of `compute_cam` from the double loop over random
/// 64-channel 10×10 instances.
pub fn cam_oracle_error(trials: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (features, weights) = random_instance(&mut rng, 64, 10, 10);
        let cam = compute_cam(&features, &weights).map_err(|e| e.to_string())?;
        let err = (&cam.values - &double_loop(&features, &weights)).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        worst = worst.max(err);
    }
    Ok(worst)
}
