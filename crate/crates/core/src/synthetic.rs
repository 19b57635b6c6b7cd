//! Small synthetic datasets in the MURA directory layout, for tests and demos.
//!
//! Normal images show a mid-gray bar on a dark background; abnormal images
//! add one bright disc, so the two classes are separable by design.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{BodyPart, Label, Split};
use crate::error::{Error, Result};

/// One study folder to create.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureStudy {
    pub body_part: BodyPart,
    pub patient: u32,
    /// The `K` in `studyK_positive`.
    pub study: u32,
    pub label: Label,
    pub images: usize,
}

impl FixtureStudy {
    pub fn new(body_part: BodyPart, patient: u32, study: u32, label: Label, images: usize) -> Self {
        FixtureStudy {
            body_part,
            patient,
            study,
            label,
            images,
        }
    }

    pub fn patient_dir(&self) -> String {
        format!("patient{:05}", self.patient)
    }

    pub fn study_dir(&self) -> String {
        let suffix = if self.label.is_abnormal() { "positive" } else { "negative" };
        format!("study{}_{suffix}", self.study)
    }

    pub fn dir(&self, root: &Path, split: Split) -> PathBuf {
        root.join(split.dir_name())
            .join(format!("XR_{}", self.body_part.as_str()))
            .join(self.patient_dir())
            .join(self.study_dir())
    }
}

/// A `size × size` grayscale radiograph stand-in.
pub fn synthetic_radiograph(size: u32, abnormal: bool, rng: &mut impl Rng) -> GrayImage {
    let mut img = GrayImage::from_fn(size, size, |_, _| Luma([rng.random_range(0..24u8)]));
    let bar_w = (size / 4).max(1);
    let bar_x = rng.random_range(0..=(size - bar_w));
    for y in size / 8..size - size / 8 {
        for x in bar_x..bar_x + bar_w {
            img.put_pixel(x, y, Luma([rng.random_range(110..140u8)]));
        }
    }
    if abnormal {
        let r = (size as f32 / 7.0).max(1.5);
        let cx = rng.random_range(r..size as f32 - r);
        let cy = rng.random_range(r..size as f32 - r);
        for (x, y, px) in img.enumerate_pixels_mut() {
            let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
            if d <= r {
                *px = Luma([250]);
            }
        }
    }
    img
}

/// Write the studies under `root/<split>/…` as PNG files; returns every image path.
pub fn write_fixture(root: &Path, split: Split, studies: &[FixtureStudy], size: u32, seed: u64) -> Result<Vec<PathBuf>> {
    if size < 8 {
        return Err(Error::contract("synthetic images need at least 8 pixels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written = Vec::new();
    for study in studies {
        let dir = study.dir(root, split);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for m in 1..=study.images {
            let path = dir.join(format!("image{m}.png"));
            synthetic_radiograph(size, study.label.is_abnormal(), &mut rng)
                .save(&path)
                .map_err(|source| Error::Decode {
                    path: path.clone(),
                    source,
                })?;
            written.push(path);
        }
    }
    Ok(written)
}

/// The census fixture: two patients, each with a two-view positive elbow
/// study and a one-view negative wrist study.
pub fn census_fixture() -> Vec<FixtureStudy> {
    [1, 2]
        .into_iter()
        .flat_map(|patient| {
            [
                FixtureStudy::new(BodyPart::Elbow, patient, 1, Label::Abnormal, 2),
                FixtureStudy::new(BodyPart::Wrist, patient, 1, Label::Normal, 1),
            ]
        })
        .collect()
}

/// `n` single-view studies alternating abnormal/normal over all body parts.
pub fn balanced_fixture(n: usize) -> Vec<FixtureStudy> {
    (0..n)
        .map(|i| {
            let part = BodyPart::ALL[i % BodyPart::ALL.len()];
            let label = Label::from_abnormal(i % 2 == 0);
            FixtureStudy::new(part, i as u32 + 1, 1, label, 1)
        })
        .collect()
}
