//! Deterministic CSV report tables.
//!
//! Every emitted file is a byte-deterministic function of its inputs:
//! fixed column order, 6-decimal fixed-point numbers, and a provenance
//! header embedding the toolkit version and config hash.

mod svg;

pub use svg::{render_plot, PlotStyle};

use std::path::Path;

use crate::corrupt::CorruptionTarget;
use crate::error::{Error, Result};
use crate::metrics::{CurvePoint, PerceptualScoreResult};
use crate::rng::fnv1a64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    PerceptualScores,
    RobustnessCurves,
    Confusion,
    IouSummary,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::PerceptualScores => "perceptual_scores",
            ReportKind::RobustnessCurves => "robustness_curves",
            ReportKind::Confusion => "confusion",
            ReportKind::IouSummary => "iou_summary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Number(f64),
    Int(i64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => {
                if s.contains(',') || s.contains('"') || s.contains('\n') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Cell::Number(v) => format!("{v:.6}"),
            Cell::Int(v) => v.to_string(),
        }
    }
}

/// Rectangular numeric/text table with provenance metadata.
#[derive(Debug, Clone)]
pub struct ReportTable {
    pub kind: ReportKind,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Hash of the run configuration, embedded in the header.
    pub config_hash: String,
}

impl ReportTable {
    pub fn new(kind: ReportKind, columns: Vec<&str>, config_hash: String) -> Self {
        Self {
            kind,
            columns: columns.into_iter().map(String::from).collect(),
            rows: Vec::new(),
            config_hash,
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidParameter(format!(
                "row of {} cells in a {}-column table",
                row.len(),
                self.columns.len()
            )));
        }
        for cell in &row {
            if let Cell::Number(v) = cell {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("non-finite cell {v}")));
                }
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Parse a CSV produced by [`ReportTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("empty report file".into()))?;
        let kind_token = header
            .split_whitespace()
            .find_map(|t| t.strip_prefix("kind="))
            .ok_or_else(|| Error::Data("report header missing kind=".into()))?;
        let kind = [
            ReportKind::PerceptualScores,
            ReportKind::RobustnessCurves,
            ReportKind::Confusion,
            ReportKind::IouSummary,
        ]
        .into_iter()
        .find(|k| k.name() == kind_token)
        .ok_or_else(|| Error::Data(format!("unknown report kind {kind_token:?}")))?;
        let config_hash = header
            .split_whitespace()
            .find_map(|t| t.strip_prefix("config_hash="))
            .unwrap_or("")
            .to_string();
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Data("report missing column row".into()))?
            .split(',')
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cells: Vec<Cell> = split_csv_line(line)
                .into_iter()
                .map(|field| {
                    if let Ok(v) = field.parse::<i64>() {
                        Cell::Int(v)
                    } else if let Ok(v) = field.parse::<f64>() {
                        Cell::Number(v)
                    } else {
                        Cell::Text(field)
                    }
                })
                .collect();
            if cells.len() != columns.len() {
                return Err(Error::Data(format!(
                    "row with {} cells in a {}-column report",
                    cells.len(),
                    columns.len()
                )));
            }
            rows.push(cells);
        }
        Ok(Self {
            kind,
            columns,
            rows,
            config_hash,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# specband v{} kind={} config_hash={}\n",
            env!("CARGO_PKG_VERSION"),
            self.kind.name(),
            self.config_hash
        ));
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                current.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(std::mem::take(&mut current)),
            c => current.push(c),
        }
    }
    fields.push(current);
    fields
}

/// Stable 64-bit hash of a serializable config, for provenance headers.
pub fn config_hash<T: serde::Serialize>(config: &T) -> Result<String> {
    let canonical = serde_json::to_string(config).map_err(|e| Error::Data(e.to_string()))?;
    Ok(format!("{:016x}", fnv1a64(canonical.as_bytes())))
}

/// Write a table as `<out_dir>/<kind>.csv`; rewriting identical inputs
/// yields identical bytes.
pub fn write_report_tables(report: &ReportTable, out_dir: &Path) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(format!("{}.csv", report.kind.name()));
    std::fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Build the perceptual-scores table: one row per (model, channel) with
/// both normalizations and their permutation-spread standard errors.
pub fn perceptual_scores_table(
    results: &[(String, PerceptualScoreResult)],
    config_hash: String,
) -> Result<ReportTable> {
    let mut table = ReportTable::new(
        ReportKind::PerceptualScores,
        vec![
            "model",
            "channel",
            "ps_model",
            "ps_model_stderr",
            "ps_task",
            "ps_task_stderr",
            "k_permutations",
            "acc_clean",
            "baseline_acc",
        ],
        config_hash,
    );
    for (model, r) in results {
        let k = r.shuffled_accs.len() as f64;
        let spread = |values: &[f64]| {
            if values.len() > 1 {
                let mean = values.iter().sum::<f64>() / k;
                let var =
                    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            } else {
                0.0
            }
        };
        let model_err = spread(&r.per_permutation_ps);
        let task_scores: Vec<f64> = r
            .shuffled_accs
            .iter()
            .map(|&s| (r.acc_clean - s) / r.baseline_acc)
            .collect();
        let task_err = spread(&task_scores);
        table.push_row(vec![
            Cell::Text(model.clone()),
            Cell::Text(r.channel.name().to_string()),
            Cell::Number(r.ps_model),
            Cell::Number(model_err),
            Cell::Number(r.ps_task),
            Cell::Number(task_err),
            Cell::Int(k as i64),
            Cell::Number(r.acc_clean),
            Cell::Number(r.baseline_acc),
        ])?;
    }
    Ok(table)
}

/// Build the robustness-curves table from per-(model, target) curves.
pub fn robustness_table(
    curves: &std::collections::BTreeMap<(String, CorruptionTarget), Vec<CurvePoint>>,
    config_hash: String,
) -> Result<ReportTable> {
    let mut table = ReportTable::new(
        ReportKind::RobustnessCurves,
        vec!["model", "target", "severity", "mean", "ci_low", "ci_high"],
        config_hash,
    );
    for ((model, target), points) in curves {
        for p in points {
            table.push_row(vec![
                Cell::Text(model.clone()),
                Cell::Text(target.name().to_string()),
                Cell::Int(i64::from(p.severity)),
                Cell::Number(p.mean),
                Cell::Number(p.ci_low),
                Cell::Number(p.ci_high),
            ])?;
        }
    }
    Ok(table)
}

/// Build a confusion-matrix table in long form.
pub fn confusion_table(
    model: &str,
    matrix: &[Vec<u64>],
    label_set: &[String],
    config_hash: String,
) -> Result<ReportTable> {
    let mut table = ReportTable::new(
        ReportKind::Confusion,
        vec!["model", "label", "pred", "count"],
        config_hash,
    );
    for (i, row) in matrix.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            table.push_row(vec![
                Cell::Text(model.to_string()),
                Cell::Text(label_set.get(i).cloned().unwrap_or_else(|| i.to_string())),
                Cell::Text(label_set.get(j).cloned().unwrap_or_else(|| j.to_string())),
                Cell::Int(count as i64),
            ])?;
        }
    }
    Ok(table)
}

/// Build the per-class IoU summary table.
pub fn iou_summary_table(
    model: &str,
    per_class: &[Option<f64>],
    mean: Option<f64>,
    label_set: &[String],
    config_hash: String,
) -> Result<ReportTable> {
    let mut table = ReportTable::new(
        ReportKind::IouSummary,
        vec!["model", "class", "iou"],
        config_hash,
    );
    for (i, value) in per_class.iter().enumerate() {
        let name = label_set.get(i).cloned().unwrap_or_else(|| i.to_string());
        if let Some(v) = value {
            table.push_row(vec![
                Cell::Text(model.to_string()),
                Cell::Text(name),
                Cell::Number(*v),
            ])?;
        }
    }
    if let Some(mean) = mean {
        table.push_row(vec![
            Cell::Text(model.to_string()),
            Cell::Text("mean".to_string()),
            Cell::Number(mean),
        ])?;
    }
    Ok(table)
}
