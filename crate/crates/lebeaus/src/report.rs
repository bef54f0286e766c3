//! Sweep reporting: a results CSV, a JSON summary, and dependency-free SVG
//! slice plots (metric vs. each hyperparameter, with the baseline drawn as a
//! horizontal line and the best record marked).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::pipeline::SweepRecord;

/// Column order of the results CSV.
pub const CSV_HEADER: &str = "gamma,beta,min_k,ibate,mse,runtime_ms";

/// The record with the smallest metric; ties keep the earliest record.
pub fn best_record(records: &[SweepRecord]) -> Result<&SweepRecord> {
    records
        .iter()
        .min_by(|a, b| a.mse.partial_cmp(&b.mse).expect("metrics are validated finite"))
        .ok_or_else(|| Error::InvalidParam("cannot report on zero sweep records".into()))
}

/// The results table as CSV text (shortest round-trip float formatting).
pub fn results_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.gamma, r.beta, r.min_k, r.ibate, r.mse, r.runtime_ms
        );
    }
    out
}

/// The JSON summary: best configuration, best metric, baseline metric, and
/// the relative improvement. Runtimes are excluded so the summary is
/// bit-reproducible across runs.
pub fn summary_json(records: &[SweepRecord], baseline_mse: f64) -> Result<serde_json::Value> {
    let best = best_record(records)?;
    Ok(json!({
        "records": records.len(),
        "best": {
            "gamma": best.gamma,
            "beta": best.beta,
            "min_k": best.min_k,
            "ibate": best.ibate,
            "mse": best.mse,
        },
        "baseline_mse": baseline_mse,
        "improvement_over_baseline": if baseline_mse > 0.0 {
            1.0 - best.mse / baseline_mse
        } else {
            0.0
        },
    }))
}

/// Hyperparameters a slice plot can put on its categorical x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    Gamma,
    Beta,
    MinK,
    Ibate,
}

impl SliceAxis {
    pub const ALL: [SliceAxis; 4] = [SliceAxis::Gamma, SliceAxis::Beta, SliceAxis::MinK, SliceAxis::Ibate];

    pub fn name(self) -> &'static str {
        match self {
            SliceAxis::Gamma => "gamma",
            SliceAxis::Beta => "beta",
            SliceAxis::MinK => "min_k",
            SliceAxis::Ibate => "ibate",
        }
    }

    /// Sort key and display label of a record on this axis.
    fn category(self, r: &SweepRecord) -> (f64, String) {
        match self {
            SliceAxis::Gamma => (r.gamma, format!("{}", r.gamma)),
            SliceAxis::Beta => (r.beta, format!("{}", r.beta)),
            SliceAxis::MinK => (r.min_k as f64, format!("{}", r.min_k)),
            SliceAxis::Ibate => (if r.ibate { 1.0 } else { 0.0 }, if r.ibate { "on".into() } else { "off".into() }),
        }
    }
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (0.01..10_000.0).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// One slice plot: every record scattered over the distinct values of one
/// hyperparameter, the baseline as a horizontal line, the best record as a
/// cross marker.
pub fn slice_plot_svg(records: &[SweepRecord], baseline_mse: f64, axis: SliceAxis) -> Result<String> {
    let best = best_record(records)?;

    // Distinct categories, ascending by numeric key.
    let mut cats: Vec<(f64, String)> = Vec::new();
    for r in records {
        let c = axis.category(r);
        if !cats.iter().any(|(k, _)| k.to_bits() == c.0.to_bits()) {
            cats.push(c);
        }
    }
    cats.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("category keys are finite"));
    let cat_index = |r: &SweepRecord| -> usize {
        let key = axis.category(r).0;
        cats.iter().position(|(k, _)| k.to_bits() == key.to_bits()).expect("own category")
    };

    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 74.0; // left margin (y tick labels)
    const MR: f64 = 20.0;
    const MT: f64 = 34.0;
    const MB: f64 = 52.0;
    let pw = W - ML - MR;
    let ph = H - MT - MB;

    let mut y_max = baseline_mse;
    for r in records {
        y_max = y_max.max(r.mse);
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    y_max *= 1.08;
    let x_of = |i: usize| ML + pw * (i as f64 + 0.5) / cats.len() as f64;
    let y_of = |v: f64| MT + ph * (1.0 - v / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">whitened background MSE vs {}</text>"#,
        W / 2.0,
        axis.name()
    );

    // Axes.
    let _ = writeln!(
        s,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" stroke="black"/>"#,
        MT + ph
    );
    let _ = writeln!(
        s,
        r#"<line x1="{ML}" y1="{}" x2="{}" y2="{0}" stroke="black"/>"#,
        MT + ph,
        ML + pw
    );

    // Y ticks.
    for t in 0..=4 {
        let v = y_max * t as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y}" x2="{ML}" y2="{y}" stroke="black"/>"#, ML - 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            ML - 7.0,
            y + 4.0,
            format_tick(v)
        );
    }

    // X categories.
    for (i, (_, label)) in cats.iter().enumerate() {
        let x = x_of(i);
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/>"#,
            MT + ph,
            MT + ph + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{label}</text>"#,
            MT + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        ML + pw / 2.0,
        H - 14.0,
        axis.name()
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {0})">MSE</text>"#,
        MT + ph / 2.0
    );

    // Baseline.
    let yb = y_of(baseline_mse);
    let _ = writeln!(
        s,
        r#"<line x1="{ML}" y1="{yb}" x2="{}" y2="{yb}" stroke="gray" stroke-dasharray="6 4"/>"#,
        ML + pw
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end" fill="gray">global baseline</text>"#,
        ML + pw - 4.0,
        yb - 5.0
    );

    // Records.
    for r in records {
        let x = x_of(cat_index(r));
        let y = y_of(r.mse);
        let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="steelblue" fill-opacity="0.6"/>"#);
    }

    // Best-record marker drawn last, on top.
    let bx = x_of(cat_index(best));
    let by = y_of(best.mse);
    for (dx1, dy1, dx2, dy2) in [(-6.0, -6.0, 6.0, 6.0), (-6.0, 6.0, 6.0, -6.0)] {
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="darkorange" stroke-width="2.5"/>"#,
            bx + dx1,
            by + dy1,
            bx + dx2,
            by + dy2
        );
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub slices: Vec<PathBuf>,
}

/// Writes `results.csv`, `summary.json`, and one `slice_<param>.svg` per
/// hyperparameter into `out_dir` (created if missing).
pub fn emit_report(
    records: &[SweepRecord],
    baseline_mse: f64,
    out_dir: &Path,
) -> Result<ReportFiles> {
    if records.is_empty() {
        return Err(Error::InvalidParam("cannot report on zero sweep records".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let csv = out_dir.join("results.csv");
    fs::write(&csv, results_csv(records)).map_err(|e| Error::io(&csv, e))?;

    let summary = out_dir.join("summary.json");
    let mut summary_text = serde_json::to_string_pretty(&summary_json(records, baseline_mse)?)
        .expect("summary serializes");
    summary_text.push('\n');
    fs::write(&summary, summary_text).map_err(|e| Error::io(&summary, e))?;

    let mut slices = Vec::new();
    for axis in SliceAxis::ALL {
        let path = out_dir.join(format!("slice_{}.svg", axis.name()));
        fs::write(&path, slice_plot_svg(records, baseline_mse, axis)?)
            .map_err(|e| Error::io(&path, e))?;
        slices.push(path);
    }
    Ok(ReportFiles { csv, summary, slices })
}
