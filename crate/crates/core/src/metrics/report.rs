//! Side-by-side comparison of evaluation reports: one overall table (a row
//! per model) and one kappa table (a row per body part, a column per model).
//! Best values are bolded in markdown and named in a `best_*` CSV column.

use std::path::{Path, PathBuf};

use super::EvalReport;
use crate::dataset::BodyPart;
use crate::error::{Error, Result};
use crate::modelzoo::Backbone;

const MISSING: &str = "n/a";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Better {
    Higher,
    Lower,
}

struct Column {
    header: &'static str,
    csv_name: &'static str,
    better: Better,
    decimals: usize,
    value: fn(&EvalReport) -> Option<f64>,
}

const COLUMNS: [Column; 7] = [
    Column {
        header: "Accuracy",
        csv_name: "accuracy",
        better: Better::Higher,
        decimals: 3,
        value: |r| Some(r.overall.accuracy),
    },
    Column {
        header: "Precision",
        csv_name: "precision",
        better: Better::Higher,
        decimals: 3,
        value: |r| Some(r.overall.precision),
    },
    Column {
        header: "Recall",
        csv_name: "recall",
        better: Better::Higher,
        decimals: 3,
        value: |r| Some(r.overall.recall),
    },
    Column {
        header: "F1 score",
        csv_name: "f1",
        better: Better::Higher,
        decimals: 3,
        value: |r| Some(r.overall.f1),
    },
    Column {
        header: "Cohen's kappa",
        csv_name: "kappa",
        better: Better::Higher,
        decimals: 3,
        value: |r| Some(r.overall.kappa),
    },
    Column {
        header: "Parameters (M)",
        csv_name: "parameters_millions",
        better: Better::Lower,
        decimals: 1,
        value: |r| r.parameter_count.map(|p| p as f64 / 1e6),
    },
    Column {
        header: "Training time (s)",
        csv_name: "training_seconds",
        better: Better::Lower,
        decimals: 0,
        value: |r| r.training_seconds,
    },
];

/// Rendered comparison tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Row labels in table order.
    pub models: Vec<String>,
    pub markdown: String,
    pub overall_csv: String,
    pub body_part_csv: String,
}

impl ComparisonReport {
    /// Write `comparison.md`, `comparison.csv` and `comparison_by_body_part.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("comparison.md", &self.markdown),
            ("comparison.csv", &self.overall_csv),
            ("comparison_by_body_part.csv", &self.body_part_csv),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn label(report: &EvalReport) -> String {
    match report.backbone {
        Some(b) => b.display_name().to_string(),
        None => report.model.clone(),
    }
}

fn catalogue_rank(report: &EvalReport) -> usize {
    report
        .backbone
        .and_then(|b| Backbone::ALL.iter().position(|x| *x == b))
        .unwrap_or(Backbone::ALL.len())
}

/// Indices of the best entries; values are compared as displayed, so ties on screen are ties here.
fn best_indices(values: &[Option<f64>], better: Better, decimals: usize) -> Vec<usize> {
    let scale = 10f64.powi(decimals as i32);
    let keyed: Vec<Option<f64>> = values.iter().map(|v| v.filter(|x| x.is_finite()).map(|x| (x * scale).round())).collect();
    let best = keyed.iter().flatten().copied().reduce(|a, b| match better {
        Better::Higher => a.max(b),
        Better::Lower => a.min(b),
    });
    match best {
        Some(best) => keyed
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == Some(best))
            .map(|(i, _)| i)
            .collect(),
        None => Vec::new(),
    }
}

fn fmt_value(value: Option<f64>, decimals: usize) -> String {
    match value {
        Some(v) => format!("{v:.decimals$}"),
        None => MISSING.to_string(),
    }
}

fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    let rule: Vec<&str> = header.iter().enumerate().map(|(i, _)| if i == 0 { "---" } else { "---:" }).collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for row in rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

fn csv_string(records: Vec<Vec<String>>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in records {
        writer.write_record(&record)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::contract(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Build both comparison tables from one or more reports.
pub fn compare_report(reports: &[EvalReport]) -> Result<ComparisonReport> {
    if reports.is_empty() {
        return Err(Error::contract("nothing to compare"));
    }
    let mut ordered: Vec<&EvalReport> = reports.iter().collect();
    // stable: unknown models keep their input order after the catalogue
    ordered.sort_by_key(|r| catalogue_rank(r));
    let models: Vec<String> = ordered.iter().map(|r| label(r)).collect();

    // overall table
    let mut best_in: Vec<Vec<&str>> = vec![Vec::new(); ordered.len()];
    let mut cells: Vec<Vec<String>> = ordered.iter().map(|_| Vec::new()).collect();
    let mut raw: Vec<Vec<String>> = ordered.iter().map(|_| Vec::new()).collect();
    for col in &COLUMNS {
        let values: Vec<Option<f64>> = ordered.iter().map(|r| (col.value)(r)).collect();
        let best = best_indices(&values, col.better, col.decimals);
        for (i, v) in values.iter().enumerate() {
            let text = fmt_value(*v, col.decimals);
            if best.contains(&i) {
                best_in[i].push(col.csv_name);
                cells[i].push(format!("**{text}**"));
            } else {
                cells[i].push(text);
            }
            raw[i].push(v.map(|x| x.to_string()).unwrap_or_default());
        }
    }
    let mut header = vec!["Model".to_string()];
    header.extend(COLUMNS.iter().map(|c| c.header.to_string()));
    let md_rows: Vec<Vec<String>> = models
        .iter()
        .zip(cells)
        .map(|(m, mut row)| {
            row.insert(0, m.clone());
            row
        })
        .collect();
    let mut markdown = String::from("## Overall performance\n\n");
    markdown.push_str(&markdown_table(&header, &md_rows));

    let mut csv_rows = vec![{
        let mut h = vec!["model".to_string()];
        h.extend(COLUMNS.iter().map(|c| c.csv_name.to_string()));
        h.push("best_in".to_string());
        h
    }];
    for ((m, mut row), best) in models.iter().zip(raw).zip(&best_in) {
        row.insert(0, m.clone());
        row.push(best.join(";"));
        csv_rows.push(row);
    }
    let overall_csv = csv_string(csv_rows)?;

    // per-body-part kappa table
    let mut part_header = vec!["Body part".to_string()];
    part_header.extend(models.iter().cloned());
    let mut part_md = Vec::new();
    let mut part_csv = vec![{
        let mut h = vec!["body_part".to_string()];
        h.extend(models.iter().cloned());
        h.push("best_model".to_string());
        h
    }];
    for part in BodyPart::ALL {
        let values: Vec<Option<f64>> = ordered
            .iter()
            .map(|r| r.per_body_part.get(&part).map(|m| m.kappa))
            .collect();
        if values.iter().all(Option::is_none) {
            continue;
        }
        let best = best_indices(&values, Better::Higher, 3);
        let mut md_row = vec![part.display_name().to_string()];
        let mut csv_row = vec![part.as_str().to_string()];
        for (i, v) in values.iter().enumerate() {
            let text = fmt_value(*v, 3);
            md_row.push(if best.contains(&i) { format!("**{text}**") } else { text });
            csv_row.push(v.map(|x| x.to_string()).unwrap_or_default());
        }
        csv_row.push(best.iter().map(|&i| models[i].as_str()).collect::<Vec<_>>().join(";"));
        part_md.push(md_row);
        part_csv.push(csv_row);
    }
    markdown.push_str("\n## Cohen's kappa by body part\n\n");
    markdown.push_str(&markdown_table(&part_header, &part_md));

    Ok(ComparisonReport {
        models,
        markdown,
        overall_csv,
        body_part_csv: csv_string(part_csv)?,
    })
}
