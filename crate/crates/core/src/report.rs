//! Selection report CSV, dominance matrix CSV and Pareto projection plots.
//!
//! All writers are deterministic: identical inputs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::select::{dominates, pareto_indices, MetricRecord, MetricTable, SelectionReport, SelectionRow};

pub const SELECTION_REPORT_FILE: &str = "selection_report.csv";
pub const DOMINANCE_MATRIX_FILE: &str = "dominance_matrix.csv";
pub const PARETO_AUC_CMAP_FILE: &str = "pareto_auc_cmap.svg";
pub const PARETO_AUC_F1_FILE: &str = "pareto_auc_f1.svg";

pub const REPORT_HEADER: [&str; 10] = [
    "setting",
    "a_norm",
    "f_norm",
    "c_norm",
    "pareto",
    "distance",
    "weighted_score",
    "rank_d",
    "rank_w",
    "rank_combined",
];

const CANVAS_WIDTH: f64 = 800.0;
const CANVAS_HEIGHT: f64 = 600.0;
const MARGIN_FRACTION: f64 = 0.10;
const RANGE_PAD_FRACTION: f64 = 0.05;
const TICKS: usize = 5;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("malformed report {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, rows: Vec<Vec<String>>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        wtr.write_record(&row).map_err(csv_err(path))?;
    }
    let bytes = wtr.into_inner().map_err(|e| ReportError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    fs::write(path, bytes).map_err(io_err(path))
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes one row per setting, sorted by ascending combined rank then id.
pub fn write_selection_report(report: &SelectionReport, path: &Path) -> Result<()> {
    let mut rows = vec![REPORT_HEADER.iter().map(|s| s.to_string()).collect()];
    for r in report.sorted_rows() {
        rows.push(vec![
            r.setting_id.clone(),
            fmt6(r.a_norm),
            fmt6(r.f_norm),
            fmt6(r.c_norm),
            u8::from(r.pareto).to_string(),
            fmt6(r.distance),
            fmt6(r.weighted_score),
            fmt6(r.rank_d),
            fmt6(r.rank_w),
            fmt6(r.rank_combined),
        ]);
    }
    write_csv(path, rows)
}

/// Parses a file written by [`write_selection_report`].
pub fn read_selection_report(path: &Path) -> Result<Vec<SelectionRow>> {
    let malformed = |reason: String| ReportError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = rdr.headers().map_err(csv_err(path))?.iter().map(str::to_owned).collect();
    if header != REPORT_HEADER {
        return Err(malformed(format!("unexpected header {}", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| malformed(format!("column {} value {:?}", REPORT_HEADER[i], &rec[i])))
        };
        let pareto = match &rec[4] {
            "1" => true,
            "0" => false,
            other => return Err(malformed(format!("pareto flag {other:?}"))),
        };
        out.push(SelectionRow {
            setting_id: rec[0].to_owned(),
            a_norm: num(1)?,
            f_norm: num(2)?,
            c_norm: num(3)?,
            pareto,
            distance: num(5)?,
            weighted_score: num(6)?,
            rank_d: num(7)?,
            rank_w: num(8)?,
            rank_combined: num(9)?,
        });
    }
    Ok(out)
}

/// `matrix[i][j]` is true iff record `i` dominates record `j`.
pub fn dominance_matrix(table: &MetricTable) -> Vec<Vec<bool>> {
    let recs = table.records();
    recs.iter()
        .map(|a| recs.iter().map(|b| dominates(a, b)).collect())
        .collect()
}

/// Writes the labelled N×N dominance matrix: a header row of ids, then one
/// row per setting starting with its id.
pub fn write_dominance_matrix(table: &MetricTable, path: &Path) -> Result<()> {
    let ids: Vec<String> = table.records().iter().map(|r| r.setting_id.clone()).collect();
    let mut rows = Vec::with_capacity(ids.len() + 1);
    rows.push(std::iter::once("setting".to_string()).chain(ids.iter().cloned()).collect());
    for (id, row) in ids.iter().zip(dominance_matrix(table)) {
        rows.push(
            std::iter::once(id.clone())
                .chain(row.into_iter().map(|d| u8::from(d).to_string()))
                .collect(),
        );
    }
    write_csv(path, rows)
}

/// Which privacy metric goes on the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    AucCmap,
    AucF1,
}

impl Plane {
    pub fn file_name(self) -> &'static str {
        match self {
            Plane::AucCmap => PARETO_AUC_CMAP_FILE,
            Plane::AucF1 => PARETO_AUC_F1_FILE,
        }
    }

    fn privacy(self, r: &MetricRecord) -> f64 {
        match self {
            Plane::AucCmap => r.cmap,
            Plane::AucF1 => r.f1,
        }
    }

    fn y_label(self) -> &'static str {
        match self {
            Plane::AucCmap => "cMAP (%), lower is better",
            Plane::AucF1 => "F1, lower is better",
        }
    }

    fn y_decimals(self) -> usize {
        match self {
            Plane::AucCmap => 2,
            Plane::AucF1 => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint {
    pub setting_id: String,
    pub x: f64,
    pub y: f64,
    /// Non-dominated over all three objectives.
    pub pareto_3d: bool,
    /// Non-dominated in this plane alone.
    pub pareto_2d: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPlot {
    pub plane: Plane,
    pub points: Vec<ProjectedPoint>,
    pub width: f64,
    pub height: f64,
}

fn dominates_2d(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    ax >= bx && ay <= by && (ax > bx || ay < by)
}

impl ProjectionPlot {
    pub fn new(table: &MetricTable, plane: Plane) -> Self {
        let pareto = pareto_indices(table);
        let recs = table.records();
        let coords: Vec<(f64, f64)> = recs.iter().map(|r| (r.auc, plane.privacy(r))).collect();
        let points = recs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (x, y) = coords[i];
                ProjectedPoint {
                    setting_id: r.setting_id.clone(),
                    x,
                    y,
                    pareto_3d: pareto.binary_search(&i).is_ok(),
                    pareto_2d: !coords.iter().any(|&(ox, oy)| dominates_2d(ox, oy, x, y)),
                }
            })
            .collect();
        Self {
            plane,
            points,
            width: CANVAS_WIDTH,
            height: CANVAS_HEIGHT,
        }
    }

    pub fn to_svg(&self) -> String {
        let (w, h) = (self.width, self.height);
        let (left, right) = (w * MARGIN_FRACTION, w * (1.0 - MARGIN_FRACTION));
        let (top, bottom) = (h * MARGIN_FRACTION, h * (1.0 - MARGIN_FRACTION));
        let (x_lo, x_hi) = padded_range(self.points.iter().map(|p| p.x));
        let (y_lo, y_hi) = padded_range(self.points.iter().map(|p| p.y));
        let px = |v: f64| left + (v - x_lo) / (x_hi - x_lo) * (right - left);
        // lower leakage is drawn higher up
        let py = |v: f64| top + (v - y_lo) / (y_hi - y_lo) * (bottom - top);

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white"/>"#);
        let title = match self.plane {
            Plane::AucCmap => "AUC vs cMAP",
            Plane::AucF1 => "AUC vs F1",
        };
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"#,
            w / 2.0,
            top / 2.0
        );

        // axes
        let _ = writeln!(
            s,
            r##"<g stroke="#333333" stroke-width="1"><line x1="{left:.2}" y1="{bottom:.2}" x2="{right:.2}" y2="{bottom:.2}"/><line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{bottom:.2}"/></g>"##
        );
        let _ = writeln!(s, r##"<g font-family="sans-serif" font-size="11" fill="#333333">"##);
        for i in 0..=TICKS {
            let t = i as f64 / TICKS as f64;
            let xv = x_lo + t * (x_hi - x_lo);
            let x = px(xv);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{xv:.2}</text>"##,
                bottom + 5.0,
                bottom + 18.0
            );
            let yv = y_lo + t * (y_hi - y_lo);
            let y = py(yv);
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="#333333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.prec$}</text>"##,
                left - 5.0,
                left - 8.0,
                y + 4.0,
                prec = self.plane.y_decimals()
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">AUC (%), higher is better</text>"#,
            (left + right) / 2.0,
            h - 12.0
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (top + bottom) / 2.0,
            (top + bottom) / 2.0,
            self.plane.y_label()
        );
        let _ = writeln!(s, "</g>");

        // 2-D frontier
        let mut frontier: Vec<&ProjectedPoint> = self.points.iter().filter(|p| p.pareto_2d).collect();
        frontier.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        if frontier.len() > 1 {
            let pts: Vec<String> = frontier.iter().map(|p| format!("{:.2},{:.2}", px(p.x), py(p.y))).collect();
            let _ = writeln!(
                s,
                r##"<polyline class="frontier-2d" points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5" stroke-dasharray="4 3"/>"##,
                pts.join(" ")
            );
        }

        // points
        let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="10">"#);
        for p in &self.points {
            let (x, y) = (px(p.x), py(p.y));
            let stroke = if p.pareto_2d { "#1f77b4" } else { "#555555" };
            if p.pareto_3d {
                let _ = writeln!(
                    s,
                    r##"<polygon class="pareto" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="#d62728" stroke="{stroke}"/>"##,
                    x,
                    y - 7.0,
                    x - 6.0,
                    y + 4.5,
                    x + 6.0,
                    y + 4.5
                );
            } else {
                let _ = writeln!(
                    s,
                    r##"<circle class="dominated" cx="{x:.2}" cy="{y:.2}" r="4.5" fill="#bbbbbb" stroke="{stroke}"/>"##
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                x + 8.0,
                y - 6.0,
                escape_xml(&p.setting_id)
            );
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, "</svg>");
        s
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let pad = if span > 0.0 {
        span * RANGE_PAD_FRACTION
    } else if lo != 0.0 {
        lo.abs() * RANGE_PAD_FRACTION
    } else {
        1.0
    };
    (lo - pad, hi + pad)
}

fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn render_pareto_projection(table: &MetricTable, plane: Plane, path: &Path) -> Result<()> {
    let svg = ProjectionPlot::new(table, plane).to_svg();
    fs::write(path, svg).map_err(io_err(path))
}

/// Writes every report artifact into `dir`, creating it if needed. Returns the
/// paths written.
pub fn write_all(table: &MetricTable, report: &SelectionReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let p = dir.join(SELECTION_REPORT_FILE);
    write_selection_report(report, &p)?;
    written.push(p);
    let p = dir.join(DOMINANCE_MATRIX_FILE);
    write_dominance_matrix(table, &p)?;
    written.push(p);
    for plane in [Plane::AucCmap, Plane::AucF1] {
        let p = dir.join(plane.file_name());
        render_pareto_projection(table, plane, &p)?;
        written.push(p);
    }
    Ok(written)
}
