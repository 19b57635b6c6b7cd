mod common;

use common::oracles::{double_loop, random_instance, CAM_TOL};
use image::{Rgb, RgbImage};
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radscan_core::cam::{colormap, compute_cam, localize, normalize_cam, overlay, upscale, CamMap, DEFAULT_ALPHA};
use radscan_core::dataset::{ImageTensor, PreprocessConfig, RawImage};
use radscan_core::modelzoo::{Classifier, Prediction};
use radscan_core::Error;

#[test]
fn cam_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..100 {
        let (features, weights) = random_instance(&mut rng, 64, 10, 10);
        let cam = compute_cam(&features, &weights).unwrap();
        let oracle = double_loop(&features, &weights);
        let err = (&cam.values - &oracle).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(err <= CAM_TOL, "trial {trial}: max error {err}");
        assert_eq!(cam.source_dims, (10, 10));
        assert!(!cam.normalized);
    }
}

#[test]
fn cam_is_linear_in_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (features, w1) = random_instance(&mut rng, 16, 6, 6);
        let w2: Vec<f32> = (0..16).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let (a, b) = (rng.random_range(-2.0f32..2.0), rng.random_range(-2.0f32..2.0));
        let mixed: Vec<f32> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let lhs = compute_cam(&features, &mixed).unwrap().values;
        let rhs = compute_cam(&features, &w1).unwrap().values * a as f64 + compute_cam(&features, &w2).unwrap().values * b as f64;
        let err = (&lhs - &rhs).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
        assert!(err < 1e-4, "linearity error {err}");
    }
}

#[test]
fn normalization_and_upscaling_preserve_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let (features, weights) = random_instance(&mut rng, 64, 10, 10);
        let cam = compute_cam(&features, &weights).unwrap();
        let (r, c) = cam.argmax();
        let norm = normalize_cam(&cam);
        assert_eq!(norm.argmax(), (r, c));
        assert!((norm.max() - 1.0).abs() < 1e-12 && norm.min().abs() < 1e-12);
        // 10 → 91 puts source cell i exactly on target pixel 10·i
        let big = upscale(&norm, (91, 91)).unwrap();
        assert_eq!(big.argmax(), (10 * r, 10 * c));
        assert!((big.max() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn upscale_corners_and_range() {
    let cam = normalize_cam(&CamMap {
        values: ndarray::array![[0.0, 2.0, 1.0], [4.0, 3.0, 0.5]],
        source_dims: (2, 3),
        normalized: false,
    });
    let big = upscale(&cam, (7, 11)).unwrap();
    for ((y, x), (sy, sx)) in [((0, 0), (0, 0)), ((0, 10), (0, 2)), ((6, 0), (1, 0)), ((6, 10), (1, 2))] {
        assert_eq!(big.values[[y, x]], cam.values[[sy, sx]]);
    }
    assert!(big.values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(matches!(upscale(&cam, (1, 11)), Err(Error::Contract(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn positive_weight_scaling_keeps_normalized_map(seed in any::<u64>(), k in 0.01f32..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (features, weights) = random_instance(&mut rng, 8, 5, 5);
        let scaled: Vec<f32> = weights.iter().map(|w| w * k).collect();
        let a = normalize_cam(&compute_cam(&features, &weights).unwrap());
        let b = normalize_cam(&compute_cam(&features, &scaled).unwrap());
        let err = (&a.values - &b.values).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
        prop_assert!(err < 1e-4);
    }

    #[test]
    fn normalized_map_spans_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (features, weights) = random_instance(&mut rng, 4, 3, 7);
        let m = normalize_cam(&compute_cam(&features, &weights).unwrap());
        prop_assert!(m.values.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(m.normalized);
    }
}

fn gray(w: u32, h: u32, level: u8) -> RawImage {
    RawImage {
        path: "gray.png".into(),
        pixels: RgbImage::from_pixel(w, h, Rgb([level; 3])),
    }
}

#[test]
fn overlay_difference_peaks_at_hotspot() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (features, weights) = random_instance(&mut rng, 32, 7, 7);
    let norm = normalize_cam(&compute_cam(&features, &weights).unwrap());
    let big = upscale(&norm, (61, 61)).unwrap();
    let base = gray(61, 61, 128);
    let out = overlay(&base, &big, DEFAULT_ALPHA).unwrap();
    let diff = |x: u32, y: u32| -> i32 {
        let (a, b) = (out.pixels.get_pixel(x, y), base.pixels.get_pixel(x, y));
        (0..3).map(|c| (a[c] as i32 - b[c] as i32).abs()).sum()
    };
    let mut best = (0, 0, i32::MIN);
    for y in 0..61 {
        for x in 0..61 {
            let d = diff(x, y);
            if d > best.2 {
                best = (x, y, d);
            }
        }
    }
    let (ay, ax) = big.argmax();
    assert_eq!((best.0 as usize, best.1 as usize), (ax, ay));
    // full weight at the hotspot: (1 − α)·128 + α·(255, 0, 0)
    let p = out.pixels.get_pixel(ax as u32, ay as u32);
    assert_eq!(p.0, [179, 77, 77]);
}

#[test]
fn overlay_leaves_cold_pixels_alone() {
    let cam = CamMap {
        values: Array2::zeros((4, 4)),
        source_dims: (4, 4),
        normalized: true,
    };
    let base = gray(4, 4, 90);
    assert_eq!(overlay(&base, &cam, 1.0).unwrap().pixels, base.pixels);
    let hot = CamMap {
        values: Array2::from_elem((4, 4), 1.0),
        ..cam.clone()
    };
    assert_eq!(overlay(&base, &hot, 0.0).unwrap().pixels, base.pixels);
    assert_eq!(overlay(&base, &hot, 1.0).unwrap().pixels.get_pixel(0, 0).0, colormap()[255]);
    assert!(matches!(overlay(&base, &hot, 1.5), Err(Error::Contract(_))));
    assert!(matches!(overlay(&gray(5, 4, 0), &hot, 0.4), Err(Error::Contract(_))));
    let raw = CamMap { normalized: false, ..hot };
    assert!(matches!(overlay(&base, &raw, 0.4), Err(Error::Contract(_))));
}

/// A constructed model whose single feature map is the input's red channel
/// average-pooled by `pool`, so the activation map tracks bright regions.
struct BrightnessModel {
    pool: usize,
    probability: f32,
    head: Option<Vec<f32>>,
}

impl Classifier for BrightnessModel {
    fn name(&self) -> String {
        "brightness".into()
    }

    fn predict(&self, batch: &[ImageTensor], capture: bool) -> radscan_core::Result<Prediction> {
        let features = batch
            .iter()
            .map(|t| {
                let (_, h, w) = t.data.dim();
                let (fh, fw) = (h / self.pool, w / self.pool);
                Array3::from_shape_fn((1, fh, fw), |(_, y, x)| {
                    let mut s = 0.0;
                    for dy in 0..self.pool {
                        for dx in 0..self.pool {
                            s += t.data[[0, y * self.pool + dy, x * self.pool + dx]];
                        }
                    }
                    s / (self.pool * self.pool) as f32
                })
            })
            .collect();
        Ok(Prediction {
            probabilities: vec![self.probability; batch.len()],
            features: capture.then_some(features),
        })
    }

    fn head_weights(&self) -> Option<Vec<f32>> {
        self.head.clone()
    }

    fn fingerprint(&self) -> String {
        "brightness".into()
    }
}

fn disc_image(w: u32, h: u32, cx: u32, cy: u32) -> RawImage {
    RawImage {
        path: "disc.png".into(),
        pixels: RgbImage::from_fn(w, h, |x, y| {
            let d2 = (x as i64 - cx as i64).pow(2) + (y as i64 - cy as i64).pow(2);
            Rgb([if d2 <= 36 { 250 } else { 20 }; 3])
        }),
    }
}

#[test]
fn localize_finds_the_bright_region() {
    let model = BrightnessModel {
        pool: 8,
        probability: 0.8,
        head: Some(vec![1.0]),
    };
    let config = PreprocessConfig {
        target_size: 64,
        augment: false,
        ..PreprocessConfig::default()
    };
    let image = disc_image(128, 96, 92, 30);
    let result = localize(&model, &image, &config, 0.5, DEFAULT_ALPHA).unwrap();
    let sidecar = result.sidecar.unwrap();
    let [x, y] = sidecar.argmax_xy;
    assert!((x as i64 - 92).abs() <= 10 && (y as i64 - 30).abs() <= 10, "hotspot at ({x}, {y})");
    assert!(sidecar.cam_max > sidecar.cam_min);
    let overlay = result.overlay.unwrap();
    assert_eq!((overlay.width(), overlay.height()), (128, 96));
    assert_eq!(overlay.probability, Some(0.8f32 as f64));
    let png = overlay.to_png().unwrap();
    assert_eq!(image::load_from_memory(&png).unwrap().to_rgb8(), overlay.pixels);
}

#[test]
fn localize_skips_normal_calls() {
    let model = BrightnessModel {
        pool: 4,
        probability: 0.2,
        head: Some(vec![1.0]),
    };
    let config = PreprocessConfig {
        target_size: 32,
        augment: false,
        ..PreprocessConfig::default()
    };
    let result = localize(&model, &disc_image(40, 40, 20, 20), &config, 0.5, DEFAULT_ALPHA).unwrap();
    assert!(result.overlay.is_none() && result.sidecar.is_none());
    assert!((result.probability - 0.2).abs() < 1e-6);
}

#[test]
fn localize_needs_head_weights() {
    let model = BrightnessModel {
        pool: 4,
        probability: 0.9,
        head: None,
    };
    let config = PreprocessConfig {
        target_size: 32,
        augment: false,
        ..PreprocessConfig::default()
    };
    let err = localize(&model, &disc_image(40, 40, 20, 20), &config, 0.5, DEFAULT_ALPHA).unwrap_err();
    assert!(matches!(err, Error::Capability(_)));
}

#[test]
fn localize_with_a_real_backbone() {
    use radscan_core::modelzoo::{build_model, Backbone, ModelConfig};
    let model = build_model(&ModelConfig::new(Backbone::Resnet34).seed(1)).unwrap();
    let config = PreprocessConfig {
        target_size: 64,
        augment: false,
        ..PreprocessConfig::default()
    };
    let image = disc_image(50, 70, 25, 35);
    let result = localize(&model, &image, &config, 0.0, DEFAULT_ALPHA).unwrap();
    let overlay = result.overlay.unwrap();
    assert_eq!((overlay.width(), overlay.height()), (50, 70));
    let sidecar = result.sidecar.unwrap();
    assert!(sidecar.argmax_xy[0] < 50 && sidecar.argmax_xy[1] < 70);
}
