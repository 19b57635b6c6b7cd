use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{load_image, preprocess, BodyPart, ImageTensor, Label, Manifest, Mode, PreprocessConfig};
use crate::error::{Error, Result};

/// One image with its study's label broadcast onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub study_id: String,
    pub body_part: BodyPart,
    pub label: Label,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<Label>,
    pub study_ids: Vec<String>,
    pub body_parts: Vec<BodyPart>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Flattens a manifest to image granularity and produces preprocessed batches.
pub struct BatchLoader {
    records: Vec<ImageRecord>,
    preprocess: PreprocessConfig,
    mode: Mode,
    pool: Option<rayon::ThreadPool>,
}

impl BatchLoader {
    pub fn new(manifest: &Manifest, preprocess: PreprocessConfig, mode: Mode) -> Result<Self> {
        preprocess.validate()?;
        let records = manifest
            .studies
            .iter()
            .flat_map(|study| {
                study.image_paths.iter().map(move |path| ImageRecord {
                    path: path.clone(),
                    study_id: study.study_id.clone(),
                    body_part: study.body_part,
                    label: study.label,
                })
            })
            .collect();
        Ok(BatchLoader {
            records,
            preprocess,
            mode,
            pool: None,
        })
    }

    /// Decode with `workers` threads. Batch contents do not depend on the worker count.
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        self.pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start loader pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn preprocess_config(&self) -> &PreprocessConfig {
        &self.preprocess
    }

    /// One pass over every image. With `shuffle`, the order is a fresh
    /// permutation drawn from `rng`; otherwise manifest order.
    pub fn epoch<'a, R: Rng + ?Sized>(&'a self, batch_size: usize, shuffle: bool, rng: &mut R) -> Result<Batches<'a>> {
        if batch_size == 0 {
            return Err(Error::contract("batch_size must be at least 1"));
        }
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        if shuffle {
            order.shuffle(rng);
        }
        Ok(Batches {
            loader: self,
            order,
            position: 0,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(rng.next_u64()),
        })
    }

    fn load_one(&self, index: usize, seed: u64) -> Result<ImageTensor> {
        let record = &self.records[index];
        let raw = load_image(&record.path).map_err(|e| Error::Study {
            study_id: record.study_id.clone(),
            source: Box::new(e),
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        preprocess(&raw, &self.preprocess, self.mode, &mut rng)
    }
}

/// Iterator over the batches of one epoch.
pub struct Batches<'a> {
    loader: &'a BatchLoader,
    order: Vec<usize>,
    position: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl Batches<'_> {
    /// Record indices in emission order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for Batches<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.position >= self.order.len() {
            return None;
        }
        let end = (self.position + self.batch_size).min(self.order.len());
        let indices = &self.order[self.position..end];
        self.position = end;

        // Per-sample seeds are drawn up front so parallel decoding cannot
        // change which random stream an image sees.
        let jobs: Vec<(usize, u64)> = indices.iter().map(|&i| (i, self.rng.next_u64())).collect();
        let loader = self.loader;
        let decoded: Vec<Result<ImageTensor>> = match &loader.pool {
            Some(pool) => pool.install(|| jobs.par_iter().map(|&(i, s)| loader.load_one(i, s)).collect()),
            None => jobs.iter().map(|&(i, s)| loader.load_one(i, s)).collect(),
        };
        let images = match decoded.into_iter().collect::<Result<Vec<_>>>() {
            Ok(images) => images,
            Err(e) => return Some(Err(e)),
        };

        let records: Vec<&ImageRecord> = indices.iter().map(|&i| &loader.records[i]).collect();
        Some(Ok(Batch {
            images,
            labels: records.iter().map(|r| r.label).collect(),
            study_ids: records.iter().map(|r| r.study_id.clone()).collect(),
            body_parts: records.iter().map(|r| r.body_part).collect(),
        }))
    }
}
