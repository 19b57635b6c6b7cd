use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::{BodyPart, Label, Manifest, ScanDiagnostic, Split, StudyRecord};
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Index one split of a MURA-layout tree.
///
/// Studies come out in lexicographic path order. A study folder without any
/// image is skipped and reported in [`Manifest::diagnostics`].
pub fn scan_dataset(root: &Path, split: Split) -> Result<Manifest> {
    if !root.is_dir() {
        return Err(Error::NotFound {
            path: root.to_path_buf(),
        });
    }
    let split_dir = root.join(split.dir_name());
    if !split_dir.is_dir() {
        return Err(Error::NotFound { path: split_dir });
    }

    let mut studies = Vec::new();
    let mut diagnostics = Vec::new();

    for part_dir in sorted_subdirs(&split_dir)? {
        let name = file_name(&part_dir);
        let body_part =
            BodyPart::from_dir_name(&name).ok_or_else(|| Error::UnknownBodyPart { path: part_dir.clone() })?;

        for patient_dir in sorted_subdirs(&part_dir)? {
            let patient_id = file_name(&patient_dir);
            for study_dir in sorted_subdirs(&patient_dir)? {
                let study_name = file_name(&study_dir);
                let label = Label::from_study_dir(&study_name)
                    .ok_or_else(|| Error::MalformedLabel { path: study_dir.clone() })?;
                let image_paths = sorted_images(&study_dir)?;
                if image_paths.is_empty() {
                    warn!("skipping study without images: {}", study_dir.display());
                    diagnostics.push(ScanDiagnostic {
                        path: study_dir.clone(),
                        message: "study folder contains no images; skipped".into(),
                    });
                    continue;
                }
                studies.push(StudyRecord {
                    study_id: StudyRecord::make_id(body_part, &patient_id, &study_name),
                    patient_id: patient_id.clone(),
                    body_part,
                    label,
                    image_paths,
                });
            }
        }
    }

    let mut manifest = Manifest::new(split, root.to_path_buf(), studies)?;
    manifest.diagnostics = diagnostics;
    Ok(manifest)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn is_hidden(path: &Path) -> bool {
    path.file_name()
        .map(|n| n.to_string_lossy().starts_with('.'))
        .unwrap_or(false)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !is_hidden(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(read_dir_sorted(dir)?.into_iter().filter(|p| p.is_dir()).collect())
}

fn sorted_images(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(read_dir_sorted(dir)?
        .into_iter()
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
                    .unwrap_or(false)
        })
        .collect())
}
