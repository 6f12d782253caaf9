//! Round reports: JSON details, the consolidated CSV, and SVG plots.
//!
//! CSV cells are written with the shortest decimal form that parses back
//! to the same f64, so two identical runs produce byte-identical files
//! and CSV values equal the JSON values exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pipeline::PipelineError;

/// One row of the consolidated report.  Lengths are meters, the ground
/// metrics centimeters, rates fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
    pub fid: f64,
    pub div: f64,
    pub penetrate: f64,
    pub float: f64,
    pub skate: f64,
    pub succ: f64,
    pub e_mpjpe: f64,
    pub e_mpkpe: f64,
    /// Empty for the round-0 baseline, which gates nothing.
    pub accepted_fraction: Option<f64>,
}

/// Everything recorded per round beyond the CSV row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundDetail {
    pub report: RoundReport,
    /// Absolute gap between sample diversity and reference diversity.
    pub div_gap: f64,
    /// Tracking of the same evaluation samples without refinement.
    pub raw_succ: f64,
    pub raw_e_mpjpe: f64,
    pub raw_e_mpkpe: f64,
    /// False when the gate accepted nothing and fine-tuning was skipped,
    /// and for the round-0 baseline.
    pub finetuned: bool,
    pub n_sampled: usize,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

pub const CSV_HEADER: &str =
    "round,top1,top2,top3,fid,div,penetrate,float,skate,succ,e_mpjpe,e_mpkpe,accepted_fraction";

/// Shortest decimal digits that round-trip to the same f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn csv_row(r: &RoundReport) -> String {
    let cells = [
        r.round.to_string(),
        fmt_f64(r.top1),
        fmt_f64(r.top2),
        fmt_f64(r.top3),
        fmt_f64(r.fid),
        fmt_f64(r.div),
        fmt_f64(r.penetrate),
        fmt_f64(r.float),
        fmt_f64(r.skate),
        fmt_f64(r.succ),
        fmt_f64(r.e_mpjpe),
        fmt_f64(r.e_mpkpe),
        r.accepted_fraction.map(fmt_f64).unwrap_or_default(),
    ];
    cells.join(",")
}

pub fn render_csv(reports: &[RoundReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), source }
}

pub fn write_csv(path: &Path, reports: &[RoundReport]) -> Result<(), PipelineError> {
    fs::write(path, render_csv(reports)).map_err(|e| io_err(path, e))
}

pub fn write_detail(path: &Path, detail: &RoundDetail) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(detail)
        .map_err(|source| PipelineError::Format { path: path.to_path_buf(), source })?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_detail(path: &Path) -> Result<RoundDetail, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|source| PipelineError::Format { path: path.to_path_buf(), source })
}

/// Reads every `rounds/round_*.json` under `out_dir`, ordered by round.
pub fn read_details(out_dir: &Path) -> Result<Vec<RoundDetail>, PipelineError> {
    let dir = out_dir.join("rounds");
    let entries = fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_stem().and_then(|s| s.to_str()).is_some_and(|s| s.starts_with("round_"))
        })
        .collect();
    paths.sort();
    let mut details = Vec::with_capacity(paths.len());
    for p in paths {
        details.push(read_detail(&p)?);
    }
    details.sort_by_key(|d| d.report.round);
    Ok(details)
}

/// Rebuilds the consolidated CSV and the per-metric plots from the round
/// JSON files.  Errors when no round files exist.
pub fn consolidate(out_dir: &Path) -> Result<Vec<RoundReport>, PipelineError> {
    let details = read_details(out_dir)?;
    if details.is_empty() {
        return Err(PipelineError::Invalid(format!(
            "no round reports found under {}",
            out_dir.join("rounds").display()
        )));
    }
    let reports: Vec<RoundReport> = details.iter().map(|d| d.report.clone()).collect();
    write_csv(&out_dir.join("reports.csv"), &reports)?;
    write_plots(out_dir, &reports)?;
    Ok(reports)
}

const PLOT_METRICS: [(&str, fn(&RoundReport) -> Option<f64>); 12] = [
    ("top1", |r| Some(r.top1)),
    ("top2", |r| Some(r.top2)),
    ("top3", |r| Some(r.top3)),
    ("fid", |r| Some(r.fid)),
    ("div", |r| Some(r.div)),
    ("penetrate", |r| Some(r.penetrate)),
    ("float", |r| Some(r.float)),
    ("skate", |r| Some(r.skate)),
    ("succ", |r| Some(r.succ)),
    ("e_mpjpe", |r| Some(r.e_mpjpe)),
    ("e_mpkpe", |r| Some(r.e_mpkpe)),
    ("accepted_fraction", |r| r.accepted_fraction),
];

/// One SVG line plot per metric under `out_dir/plots/`.
pub fn write_plots(out_dir: &Path, reports: &[RoundReport]) -> Result<(), PipelineError> {
    let dir = out_dir.join("plots");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    for (name, get) in PLOT_METRICS {
        let points: Vec<(usize, f64)> =
            reports.iter().filter_map(|r| get(r).map(|v| (r.round, v))).collect();
        if points.is_empty() {
            continue;
        }
        let path = dir.join(format!("{name}.svg"));
        fs::write(&path, render_plot(name, &points)).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Minimal line plot, fixed 640 x 400 canvas.  Coordinates use fixed
/// two-decimal formatting so output is reproducible byte for byte.
fn render_plot(title: &str, points: &[(usize, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 30.0;
    const B: f64 = 40.0;

    let x_min = points.first().map(|p| p.0).unwrap_or(0) as f64;
    let x_max = points.last().map(|p| p.0).unwrap_or(1) as f64;
    let x_span = (x_max - x_min).max(1.0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &(_, v) in points {
        y_min = y_min.min(v);
        y_max = y_max.max(v);
    }
    if !(y_max - y_min > 0.0) {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let px = |x: f64| L + (x - x_min) / x_span * (W - L - R);
    let py = |y: f64| H - B - (y - y_min) / (y_max - y_min) * (H - T - B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{title} vs round</text>\n",
        W / 2.0
    ));
    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        H - B,
        W - R,
        H - B
    ));
    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        H - B
    ));
    for &(round, _) in points {
        let x = px(round as f64);
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{round}</text>\n",
            H - B + 16.0
        ));
    }
    for frac in [0.0, 0.5, 1.0] {
        let v = y_min + frac * (y_max - y_min);
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{:.4}</text>\n",
            L - 6.0,
            py(v) + 4.0,
            v
        ));
    }
    let path: Vec<String> = points
        .iter()
        .map(|&(r, v)| format!("{:.2},{:.2}", px(r as f64), py(v)))
        .collect();
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n",
        path.join(" ")
    ));
    for &(r, v) in points {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>\n",
            px(r as f64),
            py(v)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
