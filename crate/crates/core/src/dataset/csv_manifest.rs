use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BodyPart, Label, Manifest, Split, StudyRecord};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    study_id: String,
    patient_id: String,
    body_part: BodyPart,
    label: Label,
    image_path: String,
}

/// Flat export, one row per image. Paths under the manifest root are written relative to it.
pub fn write_manifest_csv(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for study in &manifest.studies {
        for image in &study.image_paths {
            let rel = image.strip_prefix(&manifest.root).unwrap_or(image);
            writer.serialize(Row {
                study_id: study.study_id.clone(),
                patient_id: study.patient_id.clone(),
                body_part: study.body_part,
                label: study.label,
                image_path: rel.to_string_lossy().into_owned(),
            })?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Inverse of [`write_manifest_csv`]. Relative image paths are resolved against `root`.
pub fn read_manifest_csv(path: &Path, split: Split, root: &Path) -> Result<Manifest> {
    if !path.is_file() {
        return Err(Error::NotFound { path: path.to_path_buf() });
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut studies: Vec<StudyRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row?;
        let image = {
            let p = PathBuf::from(&row.image_path);
            if p.is_absolute() {
                p
            } else {
                root.join(p)
            }
        };
        match index.get(&row.study_id) {
            Some(&i) => {
                let study = &mut studies[i];
                if study.label != row.label || study.body_part != row.body_part || study.patient_id != row.patient_id {
                    return Err(Error::contract(format!("inconsistent rows for study {}", row.study_id)));
                }
                study.image_paths.push(image);
            }
            None => {
                index.insert(row.study_id.clone(), studies.len());
                studies.push(StudyRecord {
                    study_id: row.study_id,
                    patient_id: row.patient_id,
                    body_part: row.body_part,
                    label: row.label,
                    image_paths: vec![image],
                });
            }
        }
    }
    Manifest::new(split, root.to_path_buf(), studies)
}

/// Read MURA's `<split>_image_paths.csv` (one relative image path per line, no header).
///
/// Each path is interpreted from its `<split>` component onward, resolved under `root`.
pub fn read_mura_csv(path: &Path, split: Split, root: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound { path: path.to_path_buf() },
        _ => Error::io(path, e),
    })?;
    let mut studies: Vec<StudyRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let first = line.split(',').next().unwrap_or(line);
        let parts: Vec<&str> = first.split('/').filter(|s| !s.is_empty()).collect();
        let at = parts
            .iter()
            .position(|p| *p == split.dir_name())
            .filter(|&i| parts.len() >= i + 5)
            .ok_or_else(|| Error::contract(format!("unrecognised MURA path `{first}`")))?;
        let (part_dir, patient, study_dir) = (parts[at + 1], parts[at + 2], parts[at + 3]);
        let body_part = BodyPart::from_dir_name(part_dir).ok_or_else(|| Error::UnknownBodyPart {
            path: PathBuf::from(first),
        })?;
        let label = Label::from_study_dir(study_dir).ok_or_else(|| Error::MalformedLabel {
            path: PathBuf::from(first),
        })?;
        let image: PathBuf = std::iter::once(root.to_path_buf())
            .chain(parts[at..].iter().map(PathBuf::from))
            .collect();
        let study_id = StudyRecord::make_id(body_part, patient, study_dir);
        match index.get(&study_id) {
            Some(&i) => studies[i].image_paths.push(image),
            None => {
                index.insert(study_id.clone(), studies.len());
                studies.push(StudyRecord {
                    study_id,
                    patient_id: patient.to_string(),
                    body_part,
                    label,
                    image_paths: vec![image],
                });
            }
        }
    }
    Manifest::new(split, root.to_path_buf(), studies)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsvDiscrepancy {
    MissingFromCsv(String),
    MissingFromDirectory(String),
    LabelMismatch { study_id: String, directory: Label, csv: Label },
    ImageSetMismatch(String),
}

/// Compare a directory scan against a CSV-derived manifest. The directory
/// scan is authoritative; this only reports where the two disagree.
pub fn cross_check(directory: &Manifest, csv: &Manifest) -> Vec<CsvDiscrepancy> {
    let dir_ids: BTreeSet<&str> = directory.studies.iter().map(|s| s.study_id.as_str()).collect();
    let csv_ids: BTreeSet<&str> = csv.studies.iter().map(|s| s.study_id.as_str()).collect();
    let mut out = Vec::new();
    for id in dir_ids.difference(&csv_ids) {
        out.push(CsvDiscrepancy::MissingFromCsv(id.to_string()));
    }
    for id in csv_ids.difference(&dir_ids) {
        out.push(CsvDiscrepancy::MissingFromDirectory(id.to_string()));
    }
    for study in &directory.studies {
        if let Some(other) = csv.study(&study.study_id) {
            if other.label != study.label {
                out.push(CsvDiscrepancy::LabelMismatch {
                    study_id: study.study_id.clone(),
                    directory: study.label,
                    csv: other.label,
                });
            }
            let a: BTreeSet<_> = study.image_paths.iter().collect();
            let b: BTreeSet<_> = other.image_paths.iter().collect();
            if a != b {
                out.push(CsvDiscrepancy::ImageSetMismatch(study.study_id.clone()));
            }
        }
    }
    out
}
