use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::RgbImage;
use ndarray::{Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A decoded radiograph, always three channels with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub path: PathBuf,
    pub pixels: RgbImage,
}

impl RawImage {
    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    /// Channel-first copy, shape `3 × height × width`.
    pub fn to_array(&self) -> Array3<u8> {
        let (w, h) = self.pixels.dimensions();
        Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
            self.pixels.get_pixel(x as u32, y as u32)[c]
        })
    }
}

/// Decode a raster file. Grayscale inputs are replicated across three channels.
pub fn load_image(path: &Path) -> Result<RawImage> {
    let reader = image::ImageReader::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound {
            path: path.to_path_buf(),
        },
        _ => Error::io(path, e),
    })?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(RawImage {
        path: path.to_path_buf(),
        pixels: decoded.to_rgb8(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_size: usize,
    pub channel_means: [f32; 3],
    pub channel_stds: [f32; 3],
    pub augment: bool,
    /// Degrees; rotation angle is drawn uniformly from `[-max_rotation, max_rotation]`.
    pub max_rotation: f32,
    pub flip_probability: f32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: 320,
            channel_means: [0.485, 0.456, 0.406],
            channel_stds: [0.229, 0.224, 0.225],
            augment: true,
            max_rotation: 30.0,
            flip_probability: 0.5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::Config("target_size must be positive".into()));
        }
        if self.channel_stds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("channel_stds must be strictly positive".into()));
        }
        if self.channel_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("channel_means must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config("flip_probability must lie in [0, 1]".into()));
        }
        if !(self.max_rotation >= 0.0) || !self.max_rotation.is_finite() {
            return Err(Error::Config("max_rotation must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Normalized network input, shape `3 × target_size × target_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub data: Array3<f32>,
    pub source_path: PathBuf,
}

/// Resize, optionally augment, then normalize an image.
///
/// Augmentation (train mode with `augment` set) is a horizontal flip with
/// `flip_probability` followed by a rotation about the centre; pixels
/// uncovered by the rotation are black.
pub fn preprocess<R: Rng + ?Sized>(
    image: &RawImage,
    config: &PreprocessConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<ImageTensor> {
    config.validate()?;
    let size = config.target_size as u32;
    let resized = if image.pixels.dimensions() == (size, size) {
        image.pixels.clone()
    } else {
        imageops::resize(&image.pixels, size, size, FilterType::Triangle)
    };

    let mut data = Array3::from_shape_fn((3, size as usize, size as usize), |(c, y, x)| {
        resized.get_pixel(x as u32, y as u32)[c] as f32
    });

    if mode == Mode::Train && config.augment {
        let flip = rng.random::<f32>() < config.flip_probability;
        if flip {
            data.invert_axis(Axis(2));
        }
        if config.max_rotation > 0.0 {
            let angle = rng.random_range(-config.max_rotation..=config.max_rotation);
            if angle != 0.0 {
                data = rotate(&data, angle);
            }
        }
    }

    for (c, mut plane) in data.axis_iter_mut(Axis(0)).enumerate() {
        let mean = config.channel_means[c];
        let std = config.channel_stds[c];
        plane.mapv_inplace(|v| (v / 255.0 - mean) / std);
    }

    Ok(ImageTensor {
        data,
        source_path: image.path.clone(),
    })
}

/// Rotate each channel counter-clockwise by `degrees` about the image centre
/// with bilinear sampling and zero fill.
fn rotate(data: &Array3<f32>, degrees: f32) -> Array3<f32> {
    let (channels, h, w) = data.dim();
    let (sin, cos) = (degrees.to_radians() as f64).sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = Array3::<f32>::zeros((channels, h, w));
    for y in 0..h {
        for x in 0..w {
            // inverse map: output pixel -> source coordinate
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                continue;
            }
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = (sx - x0 as f64) as f32;
            let fy = (sy - y0 as f64) as f32;
            for c in 0..channels {
                let top = data[[c, y0, x0]] * (1.0 - fx) + data[[c, y0, x1]] * fx;
                let bottom = data[[c, y1, x0]] * (1.0 - fx) + data[[c, y1, x1]] * fx;
                out[[c, y, x]] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}
