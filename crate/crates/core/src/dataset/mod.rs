//! Dataset indexing, image loading, preprocessing and batching.
//!
//! The on-disk layout follows the MURA v1.1 convention:
//! `<root>/<split>/XR_<PART>/patient<NNNNN>/study<K>_<positive|negative>/image<M>.png`.
//! Labels live at study level and are read from the study folder suffix.

mod batch;
mod csv_manifest;
mod image_io;
mod scan;
mod summary;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use batch::{Batch, BatchLoader, Batches, ImageRecord};
pub use csv_manifest::{cross_check, read_manifest_csv, read_mura_csv, write_manifest_csv, CsvDiscrepancy};
pub use image_io::{load_image, preprocess, ImageTensor, Mode, PreprocessConfig, RawImage};
pub use scan::scan_dataset;
pub use summary::{summarize, CellCount, DatasetSummary};

use crate::error::{Error, Result};

/// The seven upper-extremity study types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BodyPart {
    Elbow,
    Finger,
    Forearm,
    Hand,
    Humerus,
    Shoulder,
    Wrist,
}

impl BodyPart {
    pub const ALL: [BodyPart; 7] = [
        BodyPart::Elbow,
        BodyPart::Finger,
        BodyPart::Forearm,
        BodyPart::Hand,
        BodyPart::Humerus,
        BodyPart::Shoulder,
        BodyPart::Wrist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BodyPart::Elbow => "ELBOW",
            BodyPart::Finger => "FINGER",
            BodyPart::Forearm => "FOREARM",
            BodyPart::Hand => "HAND",
            BodyPart::Humerus => "HUMERUS",
            BodyPart::Shoulder => "SHOULDER",
            BodyPart::Wrist => "WRIST",
        }
    }

    /// Title-case name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            BodyPart::Elbow => "Elbow",
            BodyPart::Finger => "Finger",
            BodyPart::Forearm => "Forearm",
            BodyPart::Hand => "Hand",
            BodyPart::Humerus => "Humerus",
            BodyPart::Shoulder => "Shoulder",
            BodyPart::Wrist => "Wrist",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Parse an `XR_<PART>` directory name.
    pub fn from_dir_name(name: &str) -> Option<BodyPart> {
        name.strip_prefix("XR_").and_then(|p| p.parse().ok())
    }
}

impl FromStr for BodyPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BodyPart::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown body part `{s}`")))
    }
}

impl fmt::Display for BodyPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }

    pub fn from_abnormal(abnormal: bool) -> Label {
        if abnormal {
            Label::Abnormal
        } else {
            Label::Normal
        }
    }

    /// Target value for the abnormality logit.
    pub fn target(self) -> f64 {
        if self.is_abnormal() {
            1.0
        } else {
            0.0
        }
    }

    /// Derive a label from a study folder name. Only the suffix matters.
    pub fn from_study_dir(name: &str) -> Option<Label> {
        if name.ends_with("positive") {
            Some(Label::Abnormal)
        } else if name.ends_with("negative") {
            Some(Label::Normal)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "NORMAL",
            Label::Abnormal => "ABNORMAL",
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NORMAL" | "0" | "NEGATIVE" => Ok(Label::Normal),
            "ABNORMAL" | "1" | "POSITIVE" => Ok(Label::Abnormal),
            _ => Err(Error::Config(format!("unknown label `{s}`"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            _ => Err(Error::Config(format!("unknown split `{s}` (expected train or valid)"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// One labelled study: every view of one body part for one patient visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    pub patient_id: String,
    pub body_part: BodyPart,
    pub label: Label,
    pub image_paths: Vec<PathBuf>,
}

impl StudyRecord {
    /// URL-safe identifier built from the directory names, e.g.
    /// `XR_WRIST-patient11185-study1_positive`.
    pub fn make_id(body_part: BodyPart, patient_id: &str, study_dir: &str) -> String {
        format!("XR_{}-{}-{}", body_part.as_str(), patient_id, study_dir)
    }
}

/// Something noteworthy found while scanning that did not abort the scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanDiagnostic {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub split: Split,
    pub root: PathBuf,
    pub studies: Vec<StudyRecord>,
    #[serde(default)]
    pub diagnostics: Vec<ScanDiagnostic>,
}

impl Manifest {
    /// Build a manifest, checking study-id uniqueness and that every image exists.
    pub fn new(split: Split, root: PathBuf, studies: Vec<StudyRecord>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for study in &studies {
            if !seen.insert(study.study_id.as_str()) {
                return Err(Error::contract(format!("duplicate study id {}", study.study_id)));
            }
            if study.image_paths.is_empty() {
                return Err(Error::contract(format!("study {} has no images", study.study_id)));
            }
            for path in &study.image_paths {
                if !path.is_file() {
                    return Err(Error::NotFound { path: path.clone() });
                }
            }
        }
        Ok(Manifest {
            split,
            root,
            studies,
            diagnostics: Vec::new(),
        })
    }

    pub fn image_count(&self) -> usize {
        self.studies.iter().map(|s| s.image_paths.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn study(&self, study_id: &str) -> Option<&StudyRecord> {
        self.studies.iter().find(|s| s.study_id == study_id)
    }

    /// Study counts per label, used for class-balanced loss weights.
    pub fn label_counts(&self) -> (usize, usize) {
        let abnormal = self.studies.iter().filter(|s| s.label.is_abnormal()).count();
        (self.studies.len() - abnormal, abnormal)
    }

    /// Image counts per label (normal, abnormal).
    pub fn image_label_counts(&self) -> (usize, usize) {
        self.studies.iter().fold((0, 0), |(n, a), s| {
            if s.label.is_abnormal() {
                (n, a + s.image_paths.len())
            } else {
                (n + s.image_paths.len(), a)
            }
        })
    }
}
