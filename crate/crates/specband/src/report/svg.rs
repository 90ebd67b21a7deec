//! Self-contained SVG plots: severity curves with CI bands and grouped
//! perceptual-score bars with error bars.
//!
//! Output bytes are deterministic: fixed float formatting, stable
//! iteration order, no timestamps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Cell, ReportKind, ReportTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotStyle {
    /// One subplot per model; one line per corruption target with a shaded
    /// CI band; x = severity 0-5, y = accuracy.
    SeverityLines,
    /// Grouped bars per (model, channel) with error bars.
    PsBars,
}

impl std::str::FromStr for PlotStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "severity_lines" => Ok(PlotStyle::SeverityLines),
            "ps_bars" => Ok(PlotStyle::PsBars),
            other => Err(Error::InvalidParameter(format!("unknown plot style {other:?}"))),
        }
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn column_index(table: &ReportTable, name: &str) -> Result<usize> {
    table
        .columns
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| Error::Data(format!("report has no column {name:?}")))
}

fn text_cell(row: &[Cell], idx: usize) -> String {
    match &row[idx] {
        Cell::Text(s) => s.clone(),
        Cell::Number(v) => format!("{v}"),
        Cell::Int(v) => format!("{v}"),
    }
}

fn number_cell(row: &[Cell], idx: usize) -> Result<f64> {
    match &row[idx] {
        Cell::Number(v) => Ok(*v),
        Cell::Int(v) => Ok(*v as f64),
        Cell::Text(s) => s
            .parse()
            .map_err(|_| Error::Data(format!("cell {s:?} is not numeric"))),
    }
}

/// Render `report` in the requested style to a standalone SVG file.
pub fn render_plot(report: &ReportTable, style: PlotStyle, out_path: &Path) -> Result<()> {
    if report.rows.is_empty() {
        return Err(Error::Data("cannot plot an empty report".into()));
    }
    let svg = match style {
        PlotStyle::SeverityLines => severity_lines_svg(report)?,
        PlotStyle::PsBars => ps_bars_svg(report)?,
    };
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(out_path, svg).map_err(|e| Error::io(out_path, e))
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.x_min) / (self.x_max - self.x_min) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.y_min) / (self.y_max - self.y_min) * self.h
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let _ = write!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="1"/>"#,
            fmt(self.x0),
            fmt(self.y0),
            fmt(self.w),
            fmt(self.h)
        );
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{x_label}</text>"#,
            fmt(self.x0 + self.w / 2.0),
            fmt(self.y0 + self.h + 30.0)
        );
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="11" transform="rotate(-90 {} {})">{y_label}</text>"#,
            fmt(self.x0 - 32.0),
            fmt(self.y0 + self.h / 2.0),
            fmt(self.x0 - 32.0),
            fmt(self.y0 + self.h / 2.0)
        );
    }

    fn y_ticks(&self, out: &mut String, n: usize) {
        for i in 0..=n {
            let v = self.y_min + (self.y_max - self.y_min) * i as f64 / n as f64;
            let y = self.py(v);
            let _ = write!(
                out,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1"/>"#,
                fmt(self.x0 - 4.0),
                fmt(y),
                fmt(self.x0),
                fmt(y)
            );
            let _ = write!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end" font-size="9">{}</text>"#,
                fmt(self.x0 - 6.0),
                fmt(y + 3.0),
                fmt(v)
            );
        }
    }
}

fn severity_lines_svg(report: &ReportTable) -> Result<String> {
    if report.kind != ReportKind::RobustnessCurves {
        return Err(Error::InvalidParameter(
            "severity_lines expects a robustness_curves report".into(),
        ));
    }
    let model_idx = column_index(report, "model")?;
    let target_idx = column_index(report, "target")?;
    let severity_idx = column_index(report, "severity")?;
    let mean_idx = column_index(report, "mean")?;
    let lo_idx = column_index(report, "ci_low")?;
    let hi_idx = column_index(report, "ci_high")?;

    // model -> target -> sorted (severity, mean, lo, hi)
    type Series = Vec<(f64, f64, f64, f64)>;
    let mut models: BTreeMap<String, BTreeMap<String, Series>> = BTreeMap::new();
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for row in &report.rows {
        let severity = number_cell(row, severity_idx)?;
        let mean = number_cell(row, mean_idx)?;
        let lo = number_cell(row, lo_idx)?;
        let hi = number_cell(row, hi_idx)?;
        y_min = y_min.min(lo);
        y_max = y_max.max(hi);
        models
            .entry(text_cell(row, model_idx))
            .or_default()
            .entry(text_cell(row, target_idx))
            .or_default()
            .push((severity, mean, lo, hi));
    }
    let pad = ((y_max - y_min) * 0.08).max(0.01);
    y_min = (y_min - pad).max(0.0);
    y_max = (y_max + pad).min(1.05);

    let subplot_w = 260.0;
    let subplot_h = 200.0;
    let margin = 56.0;
    let gap = 30.0;
    let n = models.len() as f64;
    let width = margin + n * subplot_w + (n - 1.0) * gap + 110.0;
    let height = subplot_h + 100.0;

    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        fmt(width),
        fmt(height),
        fmt(width),
        fmt(height)
    );
    out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);

    let mut legend: Vec<String> = Vec::new();
    for (mi, (model, targets)) in models.iter().enumerate() {
        let frame = Frame {
            x0: margin + mi as f64 * (subplot_w + gap),
            y0: 40.0,
            w: subplot_w,
            h: subplot_h,
            x_min: 0.0,
            x_max: 5.0,
            y_min,
            y_max,
        };
        frame.axes(&mut out, "severity", "accuracy");
        frame.y_ticks(&mut out, 4);
        for s in 0..=5 {
            let x = frame.px(f64::from(s));
            let _ = write!(
                out,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1"/><text x="{}" y="{}" text-anchor="middle" font-size="9">{s}</text>"#,
                fmt(x),
                fmt(frame.y0 + frame.h),
                fmt(x),
                fmt(frame.y0 + frame.h + 4.0),
                fmt(x),
                fmt(frame.y0 + frame.h + 14.0)
            );
        }
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" font-weight="bold">{model}</text>"#,
            fmt(frame.x0 + frame.w / 2.0),
            fmt(frame.y0 - 10.0)
        );

        for (ti, (target, points)) in targets.iter().enumerate() {
            let color = COLORS[ti % COLORS.len()];
            if mi == 0 {
                legend.push(format!("{target}|{color}"));
            }
            let mut points = points.clone();
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            // shaded CI band: forward along ci_high, back along ci_low
            let mut band = String::new();
            for (i, p) in points.iter().enumerate() {
                let cmd = if i == 0 { 'M' } else { 'L' };
                let _ = write!(band, "{cmd}{},{} ", fmt(frame.px(p.0)), fmt(frame.py(p.3)));
            }
            for p in points.iter().rev() {
                let _ = write!(band, "L{},{} ", fmt(frame.px(p.0)), fmt(frame.py(p.2)));
            }
            band.push('Z');
            let _ = write!(
                out,
                r#"<path d="{band}" fill="{color}" opacity="0.18" stroke="none"/>"#
            );

            let line: Vec<String> = points
                .iter()
                .map(|p| format!("{},{}", fmt(frame.px(p.0)), fmt(frame.py(p.1))))
                .collect();
            let _ = write!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
            for p in &points {
                let _ = write!(
                    out,
                    r#"<circle cx="{}" cy="{}" r="2.2" fill="{color}"/>"#,
                    fmt(frame.px(p.0)),
                    fmt(frame.py(p.1))
                );
            }
        }
    }

    // legend on the right
    let lx = margin + n * subplot_w + (n - 1.0) * gap + 14.0;
    for (i, entry) in legend.iter().enumerate() {
        let (target, color) = entry.split_once('|').unwrap();
        let y = 50.0 + i as f64 * 18.0;
        let _ = write!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="10">corrupt {target}</text>"#,
            fmt(lx),
            fmt(y),
            fmt(lx + 20.0),
            fmt(y),
            fmt(lx + 25.0),
            fmt(y + 3.0)
        );
    }

    out.push_str("</svg>\n");
    Ok(out)
}

fn ps_bars_svg(report: &ReportTable) -> Result<String> {
    if report.kind != ReportKind::PerceptualScores {
        return Err(Error::InvalidParameter(
            "ps_bars expects a perceptual_scores report".into(),
        ));
    }
    let model_idx = column_index(report, "model")?;
    let channel_idx = column_index(report, "channel")?;
    let ps_model_idx = column_index(report, "ps_model")?;
    let ps_model_err_idx = column_index(report, "ps_model_stderr")?;
    let ps_task_idx = column_index(report, "ps_task")?;
    let ps_task_err_idx = column_index(report, "ps_task_stderr")?;

    // (model) -> [(channel, norm, score, err)]: two bars per channel, one
    // per normalization
    let mut models: BTreeMap<String, Vec<(String, String, f64, f64)>> = BTreeMap::new();
    let mut y_max = 0.0f64;
    let mut y_min = 0.0f64;
    for row in &report.rows {
        for (norm, score_idx, err_idx) in [
            ("model", ps_model_idx, ps_model_err_idx),
            ("task", ps_task_idx, ps_task_err_idx),
        ] {
            let score = number_cell(row, score_idx)?;
            let err = number_cell(row, err_idx)?;
            y_max = y_max.max(score + err);
            y_min = y_min.min(score - err);
            models.entry(text_cell(row, model_idx)).or_default().push((
                text_cell(row, channel_idx),
                norm.to_string(),
                score,
                err,
            ));
        }
    }
    y_max = (y_max * 1.15).max(0.1);
    y_min = (y_min * 1.15).min(0.0);

    let bars_per_model = models.values().map(Vec::len).max().unwrap_or(1);
    let bar_w = 26.0;
    let group_gap = 34.0;
    let margin = 60.0;
    let plot_h = 220.0;
    let group_w = bars_per_model as f64 * (bar_w + 4.0);
    let n = models.len() as f64;
    let width = margin + n * group_w + (n - 1.0) * group_gap + 130.0;
    let height = plot_h + 90.0;

    let frame = Frame {
        x0: margin,
        y0: 30.0,
        w: width - margin - 130.0,
        h: plot_h,
        x_min: 0.0,
        x_max: 1.0,
        y_min,
        y_max,
    };

    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        fmt(width),
        fmt(height),
        fmt(width),
        fmt(height)
    );
    out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    frame.axes(&mut out, "", "perceptual score");
    frame.y_ticks(&mut out, 4);
    let zero_y = frame.py(0.0);
    let _ = write!(
        out,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-width="0.7" stroke-dasharray="3,3"/>"##,
        fmt(frame.x0),
        fmt(zero_y),
        fmt(frame.x0 + frame.w),
        fmt(zero_y)
    );

    let mut legend: Vec<String> = Vec::new();
    let mut x = margin + 8.0;
    for (model, bars) in &models {
        let group_start = x;
        for (channel, norm, score, err) in bars {
            let key = format!("{channel}/{norm}");
            let color_idx = legend.iter().position(|e| e.starts_with(&key)).unwrap_or_else(|| {
                legend.push(format!("{key}|{}", COLORS[legend.len() % COLORS.len()]));
                legend.len() - 1
            });
            let color = legend[color_idx].split_once('|').unwrap().1.to_string();
            let top = frame.py(score.max(0.0));
            let bottom = frame.py(score.min(0.0));
            let _ = write!(
                out,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}" opacity="0.85"/>"#,
                fmt(x),
                fmt(top),
                fmt(bar_w),
                fmt((bottom - top).max(0.5))
            );
            // error bar
            let cx = x + bar_w / 2.0;
            let e_top = frame.py(score + err);
            let e_bot = frame.py(score - err);
            let _ = write!(
                out,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1"/><line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1"/><line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="1"/>"#,
                fmt(cx),
                fmt(e_top),
                fmt(cx),
                fmt(e_bot),
                fmt(cx - 4.0),
                fmt(e_top),
                fmt(cx + 4.0),
                fmt(e_top),
                fmt(cx - 4.0),
                fmt(e_bot),
                fmt(cx + 4.0),
                fmt(e_bot)
            );
            x += bar_w + 4.0;
        }
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{model}</text>"#,
            fmt((group_start + x - 4.0) / 2.0),
            fmt(frame.y0 + frame.h + 16.0)
        );
        x += group_gap;
    }

    let lx = width - 120.0;
    for (i, entry) in legend.iter().enumerate() {
        let (key, color) = entry.split_once('|').unwrap();
        let y = 40.0 + i as f64 * 18.0;
        let _ = write!(
            out,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}" font-size="10">{key}</text>"#,
            fmt(lx),
            fmt(y),
            fmt(lx + 16.0),
            fmt(y + 10.0)
        );
    }

    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{Cell, ReportKind, ReportTable};

    fn curve_table() -> ReportTable {
        let mut table = ReportTable::new(
            ReportKind::RobustnessCurves,
            vec!["model", "target", "severity", "mean", "ci_low", "ci_high"],
            "0".into(),
        );
        for target in ["rgb", "nir"] {
            for s in 0..=5 {
                let mean = 0.9 - 0.1 * s as f64 * if target == "rgb" { 1.0 } else { 0.5 };
                table
                    .push_row(vec![
                        Cell::Text("early_fusion".into()),
                        Cell::Text(target.into()),
                        Cell::Int(s),
                        Cell::Number(mean),
                        Cell::Number(mean - 0.02),
                        Cell::Number(mean + 0.02),
                    ])
                    .unwrap();
            }
        }
        table
    }

    #[test]
    fn severity_lines_has_one_polyline_per_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.svg");
        render_plot(&curve_table(), PlotStyle::SeverityLines, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<path").count(), 2); // CI bands
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn svg_output_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.svg");
        let p2 = dir.path().join("b.svg");
        render_plot(&curve_table(), PlotStyle::SeverityLines, &p1).unwrap();
        render_plot(&curve_table(), PlotStyle::SeverityLines, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn single_point_series_renders() {
        let mut table = ReportTable::new(
            ReportKind::RobustnessCurves,
            vec!["model", "target", "severity", "mean", "ci_low", "ci_high"],
            "0".into(),
        );
        table
            .push_row(vec![
                Cell::Text("m".into()),
                Cell::Text("both".into()),
                Cell::Int(0),
                Cell::Number(0.9),
                Cell::Number(0.9),
                Cell::Number(0.9),
            ])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.svg");
        render_plot(&table, PlotStyle::SeverityLines, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("<circle"));
    }

    #[test]
    fn ps_bars_render_with_error_bars() {
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
            "0".into(),
        );
        for (model, channel, score) in [
            ("early", "rgb", 0.5),
            ("early", "nir", 0.2),
            ("late", "rgb", 0.3),
            ("late", "nir", 0.4),
        ] {
            table
                .push_row(vec![
                    Cell::Text(model.into()),
                    Cell::Text(channel.into()),
                    Cell::Number(score),
                    Cell::Number(0.03),
                    Cell::Number(score * 2.0),
                    Cell::Number(0.06),
                    Cell::Int(10),
                    Cell::Number(0.9),
                    Cell::Number(0.2),
                ])
                .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ps.svg");
        render_plot(&table, PlotStyle::PsBars, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        // two bars (model/task normalization) per (model, channel) row
        assert_eq!(svg.matches("opacity=\"0.85\"").count(), 8);
        // each bar carries a 3-segment error bar plus axis/tick lines
        assert!(svg.matches("<line").count() >= 24);
    }

    #[test]
    fn empty_report_is_an_error() {
        let table = ReportTable::new(
            ReportKind::RobustnessCurves,
            vec!["model", "target", "severity", "mean", "ci_low", "ci_high"],
            "0".into(),
        );
        let dir = tempfile::tempdir().unwrap();
        assert!(render_plot(&table, PlotStyle::SeverityLines, &dir.path().join("x.svg")).is_err());
    }

    #[test]
    fn style_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_plot(&curve_table(), PlotStyle::PsBars, &dir.path().join("x.svg")).is_err());
    }
}
