//! Class activation maps: the head-weighted sum of the last convolutional
//! feature maps, min–max normalized, bilinearly upscaled to the radiograph
//! and blended over it with a fixed blue→red lookup table.

use std::io::Cursor;
use std::path::Path;
use std::sync::OnceLock;

use image::{ImageFormat, Rgb, RgbImage};
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{preprocess, Mode, PreprocessConfig, RawImage};
use crate::error::{Error, Result};
use crate::modelzoo::Classifier;

pub const DEFAULT_ALPHA: f32 = 0.4;
pub const COLORMAP_NAME: &str = "blue_red";

const LUT_SOURCE: &str = include_str!("../assets/blue_red.lut");

/// The 256-entry colormap; entry `i` is the colour for map value `i / 255`.
pub fn colormap() -> &'static [[u8; 3]; 256] {
    static LUT: OnceLock<[[u8; 3]; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [[0u8; 3]; 256];
        let mut rows = 0;
        for (i, line) in LUT_SOURCE.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let rgb: Vec<u8> = line
                .split_whitespace()
                .map(|v| v.parse().expect("colormap entries are bytes"))
                .collect();
            lut[i] = [rgb[0], rgb[1], rgb[2]];
            rows += 1;
        }
        assert_eq!(rows, 256, "colormap must have 256 entries");
        lut
    })
}

fn color_of(m: f64) -> [u8; 3] {
    colormap()[(m.clamp(0.0, 1.0) * 255.0).round() as usize]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CamMap {
    /// `height × width`.
    pub values: Array2<f64>,
    /// Feature-map dimensions the map was computed at.
    pub source_dims: (usize, usize),
    pub normalized: bool,
}

impl CamMap {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(row, col)` of the first maximum in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for ((y, x), &v) in self.values.indexed_iter() {
            if v > best_v {
                best_v = v;
                best = (y, x);
            }
        }
        best
    }
}

/// Weighted sum of `channels × h × w` feature maps, one weight per channel.
pub fn compute_cam(features: &Array3<f32>, weights: &[f32]) -> Result<CamMap> {
    let (channels, h, w) = features.dim();
    if channels == 0 {
        return Err(Error::contract("no feature maps"));
    }
    if weights.len() != channels {
        return Err(Error::contract(format!("{} weights for {channels} feature maps", weights.len())));
    }
    let mut values = Array2::<f64>::zeros((h, w));
    for (map, &wi) in features.outer_iter().zip(weights) {
        values.zip_mut_with(&map, |acc, &f| *acc += wi as f64 * f as f64);
    }
    Ok(CamMap {
        values,
        source_dims: (h, w),
        normalized: false,
    })
}

/// Same as [`compute_cam`] for a list of equally sized maps.
pub fn compute_cam_from_maps(maps: &[Array2<f32>], weights: &[f32]) -> Result<CamMap> {
    let first = maps.first().ok_or_else(|| Error::contract("no feature maps"))?;
    let dims = first.dim();
    if let Some(bad) = maps.iter().find(|m| m.dim() != dims) {
        return Err(Error::contract(format!("feature map dims {:?} differ from {dims:?}", bad.dim())));
    }
    let views: Vec<_> = maps.iter().map(|m| m.view()).collect();
    let stacked = ndarray::stack(ndarray::Axis(0), &views).map_err(|e| Error::contract(e.to_string()))?;
    compute_cam(&stacked, weights)
}

/// Min–max scale into `[0, 1]`; a constant map becomes all zeros.
pub fn normalize_cam(cam: &CamMap) -> CamMap {
    let (lo, hi) = (cam.min(), cam.max());
    let values = if hi > lo {
        cam.values.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array2::zeros(cam.values.dim())
    };
    CamMap {
        values,
        source_dims: cam.source_dims,
        normalized: true,
    }
}

/// Bilinear resize with corner-aligned sampling: the four corners of the
/// output coincide with the four corners of the input.
pub fn upscale(cam: &CamMap, target: (usize, usize)) -> Result<CamMap> {
    let (sh, sw) = cam.dims();
    let (th, tw) = target;
    if th < sh || tw < sw {
        return Err(Error::contract(format!("cannot upscale {sh}×{sw} to smaller {th}×{tw}")));
    }
    let coord = |i: usize, src: usize, dst: usize| -> (usize, usize, f64) {
        if src == 1 || dst == 1 {
            return (0, 0, 0.0);
        }
        let s = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
        let lo = (s.floor() as usize).min(src - 1);
        let hi = (lo + 1).min(src - 1);
        (lo, hi, s - lo as f64)
    };
    let rows: Vec<_> = (0..th).map(|y| coord(y, sh, th)).collect();
    let cols: Vec<_> = (0..tw).map(|x| coord(x, sw, tw)).collect();
    let v = &cam.values;
    let values = Array2::from_shape_fn((th, tw), |(y, x)| {
        let (y0, y1, fy) = rows[y];
        let (x0, x1, fx) = cols[x];
        let top = v[[y0, x0]] * (1.0 - fx) + v[[y0, x1]] * fx;
        let bottom = v[[y1, x0]] * (1.0 - fx) + v[[y1, x1]] * fx;
        top * (1.0 - fy) + bottom * fy
    });
    Ok(CamMap {
        values,
        source_dims: cam.source_dims,
        normalized: cam.normalized,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayImage {
    pub pixels: RgbImage,
    pub alpha: f32,
    pub colormap: &'static str,
    pub probability: Option<f64>,
}

impl OverlayImage {
    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.pixels
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| Error::contract(format!("png encoding failed: {e}")))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_png()?).map_err(|e| Error::io(path, e))
    }
}

/// Blend a normalized map over the radiograph:
/// `(1 − α·m)·pixel + α·m·colour(m)` per channel.
pub fn overlay(image: &RawImage, cam: &CamMap, alpha: f32) -> Result<OverlayImage> {
    let (w, h) = image.pixels.dimensions();
    if cam.dims() != (h as usize, w as usize) {
        return Err(Error::contract(format!(
            "map is {:?}, image is {h}×{w}",
            cam.dims()
        )));
    }
    if !cam.normalized {
        return Err(Error::contract("overlay needs a normalized map"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("alpha {alpha} outside [0, 1]")));
    }
    let a = alpha as f64;
    let mut pixels = image.pixels.clone();
    for (x, y, px) in pixels.enumerate_pixels_mut() {
        let m = cam.values[[y as usize, x as usize]];
        let weight = a * m;
        if weight == 0.0 {
            continue;
        }
        let color = color_of(m);
        let blended: [u8; 3] = std::array::from_fn(|c| {
            ((1.0 - weight) * px[c] as f64 + weight * color[c] as f64).round().clamp(0.0, 255.0) as u8
        });
        *px = Rgb(blended);
    }
    Ok(OverlayImage {
        pixels,
        alpha,
        colormap: COLORMAP_NAME,
        probability: None,
    })
}

/// Summary written next to an overlay PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamSidecar {
    pub probability: f64,
    /// Range of the raw (unnormalized) map.
    pub cam_min: f64,
    pub cam_max: f64,
    /// Hotspot in image pixel coordinates, `[x, y]`.
    pub argmax_xy: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct Localization {
    pub probability: f64,
    /// Present only when the probability reaches the threshold.
    pub overlay: Option<OverlayImage>,
    pub sidecar: Option<CamSidecar>,
}

/// Score one radiograph and, if it is called abnormal, render its activation map.
pub fn localize(
    model: &dyn Classifier,
    image: &RawImage,
    preprocess_config: &PreprocessConfig,
    threshold: f64,
    alpha: f32,
) -> Result<Localization> {
    let weights = model
        .head_weights()
        .ok_or_else(|| Error::Capability(format!("{} exposes no head weights", model.name())))?;
    // eval mode never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let input = preprocess(image, preprocess_config, Mode::Eval, &mut rng)?;
    let prediction = model.predict(std::slice::from_ref(&input), true)?;
    let probability = *prediction
        .probabilities
        .first()
        .ok_or_else(|| Error::contract("model returned no probability"))? as f64;
    if probability < threshold {
        return Ok(Localization {
            probability,
            overlay: None,
            sidecar: None,
        });
    }
    let features = prediction
        .features
        .and_then(|f| f.into_iter().next())
        .ok_or_else(|| Error::Capability(format!("{} returned no feature maps", model.name())))?;
    let raw = compute_cam(&features, &weights)?;
    let target = (image.height() as usize, image.width() as usize);
    let scaled = upscale(&normalize_cam(&raw), target)?;
    let (ay, ax) = scaled.argmax();
    let mut rendered = overlay(image, &scaled, alpha)?;
    rendered.probability = Some(probability);
    Ok(Localization {
        probability,
        overlay: Some(rendered),
        sidecar: Some(CamSidecar {
            probability,
            cam_min: raw.min(),
            cam_max: raw.max(),
            argmax_xy: [ax, ay],
        }),
    })
}
