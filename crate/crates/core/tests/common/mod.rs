#![allow(dead_code)]

pub mod oracles;
pub mod training;

use std::path::{Path, PathBuf};

use radscan_core::dataset::{BodyPart, DatasetSummary, Label, Split};

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mura_mini")
}

/// Hand-counted contents of `tests/fixtures/mura_mini`:
/// (split, part, normal studies, abnormal studies, images).
pub const FIXTURE_CELLS: [(Split, BodyPart, usize, usize, usize); 8] = [
    (Split::Train, BodyPart::Elbow, 1, 1, 3),
    (Split::Train, BodyPart::Finger, 1, 0, 3),
    (Split::Train, BodyPart::Humerus, 0, 1, 1),
    (Split::Train, BodyPart::Wrist, 1, 1, 3),
    (Split::Valid, BodyPart::Forearm, 0, 1, 2),
    (Split::Valid, BodyPart::Hand, 1, 0, 2),
    (Split::Valid, BodyPart::Shoulder, 0, 1, 1),
    (Split::Valid, BodyPart::Wrist, 0, 0, 0),
];

/// (split, total studies, normal, abnormal, images)
pub const FIXTURE_TOTALS: [(Split, usize, usize, usize, usize); 2] = [(Split::Train, 6, 3, 3, 10), (Split::Valid, 3, 1, 2, 5)];

/// Published study census of MURA v1.1: (part, train normal, train abnormal, valid normal, valid abnormal).
pub const MURA_CENSUS: [(BodyPart, usize, usize, usize, usize); 7] = [
    (BodyPart::Elbow, 1094, 660, 92, 66),
    (BodyPart::Finger, 1280, 655, 92, 83),
    (BodyPart::Hand, 1497, 521, 101, 66),
    (BodyPart::Humerus, 321, 271, 68, 67),
    (BodyPart::Forearm, 590, 287, 69, 64),
    (BodyPart::Shoulder, 1364, 1457, 99, 95),
    (BodyPart::Wrist, 2134, 1326, 140, 97),
];

/// Compare a fixture summary against the hand counts; `Err` names the first mismatch.
pub fn check_fixture_summary(summary: &DatasetSummary) -> Result<(), String> {
    for (split, part, normal, abnormal, images) in FIXTURE_CELLS {
        if split != summary.split {
            continue;
        }
        let got = (
            summary.cell(part, Label::Normal).studies,
            summary.cell(part, Label::Abnormal).studies,
            summary.part_total(part).images,
        );
        if got != (normal, abnormal, images) {
            return Err(format!("{split} {part:?}: got {got:?}, want {:?}", (normal, abnormal, images)));
        }
    }
    let (_, studies, normal, abnormal, images) = FIXTURE_TOTALS.iter().find(|t| t.0 == summary.split).unwrap();
    let got = (
        summary.total_studies,
        summary.label_total(Label::Normal).studies,
        summary.label_total(Label::Abnormal).studies,
        summary.total_images,
    );
    if got != (*studies, *normal, *abnormal, *images) {
        return Err(format!("{} totals: got {got:?}", summary.split));
    }
    Ok(())
}

/// Compare a real MURA summary against the published census.
pub fn check_mura_summary(summary: &DatasetSummary) -> Result<(), String> {
    let (want_normal, want_abnormal) = match summary.split {
        Split::Train => (8280, 5177),
        Split::Valid => (661, 538),
    };
    for (part, tn, ta, vn, va) in MURA_CENSUS {
        let want = match summary.split {
            Split::Train => (tn, ta),
            Split::Valid => (vn, va),
        };
        let got = (summary.cell(part, Label::Normal).studies, summary.cell(part, Label::Abnormal).studies);
        if got != want {
            return Err(format!("{} {part:?}: got {got:?}, want {want:?}", summary.split));
        }
    }
    let got = (summary.label_total(Label::Normal).studies, summary.label_total(Label::Abnormal).studies);
    if got != (want_normal, want_abnormal) {
        return Err(format!("{} totals: got {got:?}", summary.split));
    }
    Ok(())
}

/// `MURA_ROOT` when it points at an extracted dataset.
pub fn mura_root() -> Option<PathBuf> {
    std::env::var_os("MURA_ROOT").map(PathBuf::from).filter(|p| p.join("train").is_dir())
}
