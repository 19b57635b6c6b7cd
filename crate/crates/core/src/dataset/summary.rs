use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BodyPart, Label, Manifest, Split};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub studies: usize,
    pub images: usize,
}

impl std::ops::AddAssign for CellCount {
    fn add_assign(&mut self, rhs: Self) {
        self.studies += rhs.studies;
        self.images += rhs.images;
    }
}

/// Study and image counts per body part and label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub split: Split,
    /// Indexed by `BodyPart::index()`, then `[normal, abnormal]`.
    pub cells: [[CellCount; 2]; 7],
    pub total_studies: usize,
    pub total_images: usize,
}

impl DatasetSummary {
    pub fn empty(split: Split) -> Self {
        DatasetSummary {
            split,
            cells: [[CellCount::default(); 2]; 7],
            total_studies: 0,
            total_images: 0,
        }
    }

    pub fn cell(&self, part: BodyPart, label: Label) -> CellCount {
        self.cells[part.index()][label_index(label)]
    }

    pub fn part_total(&self, part: BodyPart) -> CellCount {
        let mut c = self.cells[part.index()][0];
        c += self.cells[part.index()][1];
        c
    }

    pub fn label_total(&self, label: Label) -> CellCount {
        let mut total = CellCount::default();
        for row in &self.cells {
            total += row[label_index(label)];
        }
        total
    }
}

fn label_index(label: Label) -> usize {
    match label {
        Label::Normal => 0,
        Label::Abnormal => 1,
    }
}

pub fn summarize(manifest: &Manifest) -> DatasetSummary {
    let mut summary = DatasetSummary::empty(manifest.split);
    for study in &manifest.studies {
        let cell = &mut summary.cells[study.body_part.index()][label_index(study.label)];
        cell.studies += 1;
        cell.images += study.image_paths.len();
        summary.total_studies += 1;
        summary.total_images += study.image_paths.len();
    }
    summary
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Renders the study census as a plain-text table.
impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "split: {}", self.split)?;
        writeln!(f, "{:<10} {:>10} {:>10} {:>10} {:>10}", "Study", "Normal", "Abnormal", "Total", "Images")?;
        for part in BodyPart::ALL {
            let total = self.part_total(part);
            writeln!(
                f,
                "{:<10} {:>10} {:>10} {:>10} {:>10}",
                part.display_name(),
                thousands(self.cell(part, Label::Normal).studies),
                thousands(self.cell(part, Label::Abnormal).studies),
                thousands(total.studies),
                thousands(total.images),
            )?;
        }
        write!(
            f,
            "{:<10} {:>10} {:>10} {:>10} {:>10}",
            "Total",
            thousands(self.label_total(Label::Normal).studies),
            thousands(self.label_total(Label::Abnormal).studies),
            thousands(self.total_studies),
            thousands(self.total_images),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_summary_is_all_zero() {
        let m = Manifest {
            split: Split::Train,
            root: "/".into(),
            studies: vec![],
            diagnostics: vec![],
        };
        let s = summarize(&m);
        assert_eq!(s, DatasetSummary::empty(Split::Train));
        assert_eq!(s.total_images, 0);
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(8280), "8,280");
        assert_eq!(thousands(1234567), "1,234,567");
    }
}
