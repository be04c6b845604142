//! Tabular and SVG output.
//!
//! Every CSV starts with the caller's `#` metadata lines. Floats use Rust's
//! shortest round-trip formatting, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::io::Write;

use crate::bootstrap::{BootstrapResult, BootstrapSummary};
use crate::data::{StudyDataset, ValidationReport};
use crate::error::Result;
use crate::sensitivity::{SensitivityResult, SensitivityValue, Target};
use crate::simlab::{Counterfactual, TidyRow, TruthRecord, MISSING_STUDY, OBSERVED_STUDY};
use crate::transport::AteEstimate;

fn preamble<W: Write>(out: &mut W, meta: &[String]) -> Result<()> {
    for line in meta {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

fn target_label(data: &StudyDataset, target: Target) -> String {
    match target {
        Target::Overall => "overall".into(),
        Target::Study(s) => data.label(s).to_string(),
    }
}

/// One row per study plus an `overall` row for each estimate, with
/// percentile intervals when a bootstrap accompanies it.
pub fn write_estimates<W: Write>(
    out: W,
    meta: &[String],
    data: &StudyDataset,
    estimates: &[(&AteEstimate, Option<&BootstrapResult>)],
) -> Result<()> {
    let mut out = out;
    preamble(&mut out, meta)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variant",
        "study",
        "ate",
        "weight",
        "n_rows",
        "outcome_observed",
        "ci_lower",
        "ci_upper",
        "std_error",
    ])
    .map_err(csv_err)?;
    let ci = |b: Option<&BootstrapSummary>| match b {
        Some(b) => [b.lower.to_string(), b.upper.to_string(), b.std_error.to_string()],
        None => Default::default(),
    };
    for (est, boot) in estimates {
        let tag = est.variant.tag().to_string();
        for s in &est.studies {
            let [lo, hi, se] = ci(boot.map(|b| &b.studies[s.study]));
            w.write_record([
                tag.clone(),
                s.label.to_string(),
                s.ate.to_string(),
                s.weight.to_string(),
                s.n_rows.to_string(),
                s.outcome_observed.to_string(),
                lo,
                hi,
                se,
            ])
            .map_err(csv_err)?;
        }
        let [lo, hi, se] = ci(boot.map(|b| &b.overall));
        w.write_record([
            tag,
            "overall".into(),
            est.overall.to_string(),
            "1".into(),
            data.n_rows().to_string(),
            String::new(),
            lo,
            hi,
            se,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_validation<W: Write>(out: W, meta: &[String], report: &ValidationReport) -> Result<()> {
    let mut out = out;
    preamble(&mut out, meta)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "kind", "status", "offending"]).map_err(csv_err)?;
    for c in &report.checks {
        w.write_record([
            c.name.to_string(),
            format!("{:?}", c.kind).to_lowercase(),
            format!("{:?}", c.status).to_lowercase(),
            c.offending.join("; "),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Potential outcomes of a simulated draw, row-aligned with its dataset.
pub fn write_counterfactuals<W: Write>(out: W, meta: &[String], rows: &[Counterfactual]) -> Result<()> {
    let mut out = out;
    preamble(&mut out, meta)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["study", "arm", "w1", "t0", "t1", "y0", "y1"]).map_err(csv_err)?;
    for c in rows {
        w.write_record([
            c.study.to_string(),
            c.arm.to_string(),
            c.w.to_string(),
            c.t0.to_string(),
            c.t1.to_string(),
            c.y0.to_string(),
            c.y1.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth<W: Write>(out: W, meta: &[String], truth: &TruthRecord) -> Result<()> {
    let mut out = out;
    preamble(&mut out, meta)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target", "value", "method", "mc_std_error"]).map_err(csv_err)?;
    let method = format!("{:?}", truth.method).to_lowercase();
    let mut put = |target: String, value: f64, se: f64| {
        w.write_record([target, value.to_string(), method.clone(), se.to_string()])
    };
    put("overall".into(), truth.overall, truth.mc_std_error).map_err(csv_err)?;
    put(OBSERVED_STUDY.to_string(), truth.studies[0], 0.0).map_err(csv_err)?;
    put(MISSING_STUDY.to_string(), truth.studies[1], 2.0 * truth.mc_std_error).map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

/// Sensitivity grid. Point adjustments put the estimate in `lower` and
/// `upper` alike.
pub fn write_sensitivity<W: Write>(
    out: W,
    meta: &[String],
    data: &StudyDataset,
    results: &[SensitivityResult],
) -> Result<()> {
    let mut out = out;
    preamble(&mut out, meta)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variant", "kind", "target", "parameter", "lower", "upper", "ci_lower", "ci_upper"])
        .map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for res in results {
        for c in &res.cells {
            let (lo, hi) = match c.value {
                SensitivityValue::Point(v) => (v, v),
                SensitivityValue::Bounds(b) => (b.lower, b.upper),
            };
            w.write_record([
                res.base.variant.tag().to_string(),
                res.kind.to_string(),
                target_label(data, c.target),
                c.parameter.to_string(),
                lo.to_string(),
                hi.to_string(),
                opt(c.ci.map(|i| i.lower)),
                opt(c.ci.map(|i| i.upper)),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_tidy<W: Write>(out: W, meta: &[String], rows: &[TidyRow]) -> Result<()> {
    let mut out = out;
    preamble(&mut out, meta)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "replicate", "parameter", "estimate", "lower", "upper", "truth"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.replicate.map(|i| i.to_string()).unwrap_or_else(|| "all".into()),
            r.parameter.to_string(),
            r.estimate.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.truth.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::error::Error::Structural(format!("csv: {other:?}")),
    }
}

const PANEL_W: f64 = 240.0;
const PANEL_H: f64 = 180.0;
const PAD: f64 = 36.0;
const COLS: usize = 3;
const SERIES_COLOURS: [&str; 3] = ["#1f4e9c", "#c0392b", "#2e7d32"];

/// Small-multiples plot: one panel per scenario, shared axes, estimate with
/// interval bars, a dashed truth line and a dotted line at the true
/// sensitivity parameter.
pub fn render_svg(title: &str, x_label: &str, rows: &[TidyRow]) -> String {
    let mut panels: Vec<&str> = Vec::new();
    let mut series = Vec::new();
    for r in rows {
        if !panels.contains(&r.panel.as_str()) {
            panels.push(&r.panel);
        }
        if !series.contains(&r.series) {
            series.push(r.series);
        }
    }
    let finite = |v: f64| v.is_finite();
    let xs: Vec<f64> = rows.iter().map(|r| r.parameter).filter(|v| finite(*v)).collect();
    let ys: Vec<f64> = rows
        .iter()
        .flat_map(|r| [r.lower, r.upper, r.truth, r.estimate])
        .filter(|v| finite(*v))
        .collect();
    let (x0, x1) = padded_range(&xs);
    let (y0, y1) = padded_range(&ys);
    let n_rows = panels.len().div_ceil(COLS).max(1);
    let width = COLS as f64 * (PANEL_W + PAD) + PAD;
    let height = n_rows as f64 * (PANEL_H + PAD) + PAD + 40.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" font-size="13" text-anchor="middle">{}</text>"#, width / 2.0, escape(title));
    for (k, v) in series.iter().enumerate() {
        let c = SERIES_COLOURS[k % SERIES_COLOURS.len()];
        let lx = PAD + k as f64 * 90.0;
        let _ = writeln!(s, r#"<circle cx="{lx}" cy="30" r="3" fill="{c}"/><text x="{}" y="33">{v}</text>"#, lx + 6.0);
    }
    for (p, name) in panels.iter().enumerate() {
        let ox = PAD + (p % COLS) as f64 * (PANEL_W + PAD);
        let oy = 40.0 + PAD + (p / COLS) as f64 * (PANEL_H + PAD);
        let sx = |x: f64| ox + (x - x0) / (x1 - x0) * PANEL_W;
        let sy = |y: f64| oy + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;
        let _ = writeln!(s, r##"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#888"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ox + PANEL_W / 2.0, oy - 4.0, escape(name));
        for (v, y) in [(y0, oy + PANEL_H), (y1, oy)] {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, ox - 3.0, y + 3.0, tick(v));
        }
        for (v, x) in [(x0, ox), (x1, ox + PANEL_W)] {
            let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, oy + PANEL_H + 12.0, tick(v));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ox + PANEL_W / 2.0, oy + PANEL_H + 24.0, escape(x_label));

        let in_panel: Vec<&TidyRow> = rows.iter().filter(|r| r.panel == *name).collect();
        if let Some(r) = in_panel.first() {
            if r.truth.is_finite() {
                let y = sy(r.truth);
                let _ = writeln!(s, r##"<line x1="{ox}" y1="{y}" x2="{}" y2="{y}" stroke="#555" stroke-dasharray="5,3"/>"##, ox + PANEL_W);
            }
            if let Some(x) = r.reference.filter(|x| (x0..=x1).contains(x)) {
                let x = sx(x);
                let _ = writeln!(s, r##"<line x1="{x}" y1="{oy}" x2="{x}" y2="{}" stroke="#999" stroke-dasharray="1,3"/>"##, oy + PANEL_H);
            }
        }
        for (k, v) in series.iter().enumerate() {
            let c = SERIES_COLOURS[k % SERIES_COLOURS.len()];
            let dx = (k as f64 - (series.len() as f64 - 1.0) / 2.0) * 4.0;
            for r in in_panel.iter().filter(|r| r.series == *v) {
                let x = sx(r.parameter) + dx;
                let _ = writeln!(
                    s,
                    r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="{c}"/><circle cx="{x}" cy="{}" r="2.5" fill="{c}"/>"#,
                    sy(r.lower),
                    sy(r.upper),
                    sy(r.estimate)
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn padded_range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.5);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    format!("{v:.1}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
