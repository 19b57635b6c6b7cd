use std::path::Path;

use candle_core::{Device, Tensor, Var};
use candle_nn::Optimizer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ndarray::Array3;
use radscan_core::dataset::{scan_dataset, ImageTensor, Manifest, PreprocessConfig, Split};
use radscan_core::modelzoo::{build_model, load_checkpoint, save_checkpoint, Backbone, CheckpointMeta, ModelConfig};
use radscan_core::synthetic::{balanced_fixture, write_fixture};
use radscan_core::training::{
    adam, compute_loss, loss_tensor, lr_schedule_step, ClassWeights, PlateauConfig, PlateauScheduler, ADAM_BETA1,
    ADAM_BETA2, ADAM_EPS,
};

pub const GRADIENT_REL_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-6;
pub const ROUND_TRIP_TOL: f64 = 1e-6;
pub const OVERFIT_ACCURACY: f64 = 0.95;
pub const OVERFIT_MAX_EPOCHS: usize = 50;
pub const OVERFIT_IMAGES: usize = 32;
pub const OVERFIT_SIZE: usize = 64;

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Worst relative gradient error of a one-layer head (8 features, batch 4).
pub struct GradientCheck {
    /// Autograd through `loss_tensor` against central differences of `compute_loss`.
    pub autograd_vs_fd: f64,
    /// Autograd against the closed-form BCE gradient.
    pub autograd_vs_closed_form: f64,
}

pub fn head_gradient_check(seed: u64) -> GradientCheck {
    const N: usize = 4;
    const C: usize = 8;
    let dev = Device::Cpu;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..N * C).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = [1.0, 0.0, 0.0, 1.0];
    let w0: Vec<f64> = (0..C).map(|_| rng.random_range(-0.5..0.5)).collect();
    let b0 = 0.1;
    let weights = ClassWeights::balanced(3, 1).unwrap();

    let xt = Tensor::from_vec(x.clone(), (N, C), &dev).unwrap();
    let yt = Tensor::from_vec(y.to_vec(), N, &dev).unwrap();
    let w = Var::from_vec(w0.clone(), (1, C), &dev).unwrap();
    let b = Var::from_vec(vec![b0], 1, &dev).unwrap();
    let logits = xt.matmul(&w.t().unwrap()).unwrap().broadcast_add(&b).unwrap().squeeze(1).unwrap();
    let probs = candle_nn::ops::sigmoid(&logits).unwrap();
    let grads = loss_tensor(&probs, &yt, weights).unwrap().backward().unwrap();
    let mut autograd = grads.get(&w).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    autograd.push(grads.get(&b).unwrap().to_vec1::<f64>().unwrap()[0]);

    let loss_at = |params: &[f64]| {
        let p: Vec<f64> = (0..N)
            .map(|i| sigmoid((0..C).map(|j| x[i * C + j] * params[j]).sum::<f64>() + params[C]))
            .collect();
        compute_loss(&p, &y, weights).unwrap()
    };
    let mut params = w0.clone();
    params.push(b0);
    let fd: Vec<f64> = (0..=C)
        .map(|k| {
            let mut up = params.clone();
            let mut down = params.clone();
            up[k] += FD_STEP;
            down[k] -= FD_STEP;
            (loss_at(&up) - loss_at(&down)) / (2.0 * FD_STEP)
        })
        .collect();

    // dL/dz_i = (−a·y·(1−p) + n·(1−y)·p) / N
    let dz: Vec<f64> = (0..N)
        .map(|i| {
            let p = sigmoid((0..C).map(|j| x[i * C + j] * w0[j]).sum::<f64>() + b0);
            (-weights.abnormal * y[i] * (1.0 - p) + weights.normal * (1.0 - y[i]) * p) / N as f64
        })
        .collect();
    let mut closed: Vec<f64> = (0..C).map(|j| (0..N).map(|i| dz[i] * x[i * C + j]).sum()).collect();
    closed.push(dz.iter().sum());

    let worst = |reference: &[f64]| {
        autograd.iter().zip(reference).map(|(a, r)| relative_error(*a, *r)).fold(0.0, f64::max)
    };
    GradientCheck {
        autograd_vs_fd: worst(&fd),
        autograd_vs_closed_form: worst(&closed),
    }
}

/// Largest deviation between two optimizer steps and a hand-written Adam
/// update on `L = Σ w² / 2`, whose gradient is `w`.
pub fn adam_step_error(lr: f64) -> f64 {
    let start = [0.5, -1.5, 2.0, 1e-3];
    let dev = Device::Cpu;
    let var = Var::from_vec(start.to_vec(), 4, &dev).unwrap();
    let mut opt = adam(vec![var.clone()], lr).unwrap();
    let mut theta = start.to_vec();
    let mut m = [0.0; 4];
    let mut v = [0.0; 4];
    for t in 1..=2 {
        let loss = (var.sqr().unwrap().sum_all().unwrap() * 0.5).unwrap();
        opt.backward_step(&loss).unwrap();
        for k in 0..4 {
            let g = theta[k];
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g;
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[k] / (1.0 - ADAM_BETA1.powi(t));
            let v_hat = v[k] / (1.0 - ADAM_BETA2.powi(t));
            theta[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    let got = var.to_vec1::<f64>().unwrap();
    got.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Two plateaus separated by an improvement, patience 1.
pub const TWO_PLATEAUS: [f64; 6] = [0.50, 0.50, 0.40, 0.30, 0.30, 0.25];
/// Hand simulation: epoch 2 fails to improve (decay), epochs 3-4 improve,
/// epoch 5 fails (decay), epoch 6 improves.
pub const TWO_PLATEAUS_LRS: [f64; 6] = [1e-4, 1e-5, 1e-5, 1e-5, 1e-6, 1e-6];

/// Rate after each scripted loss, through the stateful scheduler and the
/// stateless history function.
pub fn scripted_lrs(losses: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let config = PlateauConfig::default();
    let mut scheduler = PlateauScheduler::new(config);
    let stateful = losses.iter().map(|&l| scheduler.step(l)).collect();
    let mut lr = config.initial_lr;
    let stateless = (1..=losses.len())
        .map(|k| {
            lr = lr_schedule_step(&losses[..k], lr, &config).unwrap();
            lr
        })
        .collect();
    (stateful, stateless)
}

pub fn close_rates(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| relative_error(*x, *y) < 1e-12)
}

/// A balanced synthetic train split of `n` single-view studies.
pub fn synthetic_train_set(root: &Path, n: usize, size: u32, seed: u64) -> Manifest {
    write_fixture(root, Split::Train, &balanced_fixture(n), size, seed).unwrap();
    scan_dataset(root, Split::Train).unwrap()
}

pub fn eval_preprocess(size: usize) -> PreprocessConfig {
    PreprocessConfig {
        target_size: size,
        augment: false,
        ..PreprocessConfig::default()
    }
}

/// Save, reload and compare probe-batch probabilities; returns the largest difference.
pub fn checkpoint_round_trip(backbone: Backbone, size: usize, dir: &Path) -> f64 {
    let model = build_model(&ModelConfig::new(backbone).seed(11)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let probe: Vec<_> = (0..2)
        .map(|_| {
            ImageTensor {
                data: Array3::from_shape_fn((3, size, size), |_| rng.random_range(-2.0f32..2.0)),
                source_path: "probe.png".into(),
            }
        })
        .collect();
    let before = model.forward(&probe, false).unwrap().probabilities;
    let path = dir.join(format!("{}.ckpt", backbone.id()));
    let mut meta = CheckpointMeta::new(model.config().clone(), eval_preprocess(size));
    meta.epoch = 3;
    meta.metric_name = Some("kappa".into());
    meta.best_metric = Some(0.5);
    save_checkpoint(&model, &meta, &path).unwrap();
    let (loaded, loaded_meta) = load_checkpoint(&path).unwrap();
    assert_eq!(loaded_meta, meta);
    let after = loaded.forward(&probe, false).unwrap().probabilities;
    before.iter().zip(&after).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max)
}
