//! Static SVG rendering of balance reports.

use std::fmt::Write;

use crate::entanglement::{BalanceReport, ClassMatrix, EntanglementDegree};
use crate::scoring::{AttributeClass, Group};

const CELL: f64 = 44.0;
const LABEL: f64 = 70.0;
const PAD: f64 = 20.0;

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t.clamp(0.0, 1.0)).round() as u8
}

/// White to dark blue over [0, 1].
fn sequential(v: f64) -> String {
    format!("rgb({},{},{})", lerp(255, 8, v), lerp(255, 48, v), lerp(255, 107, v))
}

/// Red for negative, white at zero, blue for positive, saturating at ±`scale`.
fn diverging(v: f64, scale: f64) -> String {
    let t = if scale > 0.0 { v / scale } else { 0.0 };
    if t >= 0.0 {
        format!("rgb({},{},{})", lerp(255, 33, t), lerp(255, 102, t), lerp(255, 172, t))
    } else {
        format!("rgb({},{},{})", lerp(255, 178, -t), lerp(255, 24, -t), lerp(255, 43, -t))
    }
}

fn heatmap(out: &mut String, x0: f64, y0: f64, title: &str, m: &ClassMatrix, color: impl Fn(f64) -> String) {
    let _ = writeln!(out, r#"<text x="{x0}" y="{y}" font-size="14" font-weight="bold">{title}</text>"#, y = y0 - 8.0);
    for (i, a) in AttributeClass::ALL.iter().enumerate() {
        let y = y0 + LABEL + i as f64 * CELL;
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{ty:.1}" font-size="11" text-anchor="end">{a}</text>"#,
            x = x0 + LABEL - 4.0,
            ty = y + CELL / 2.0 + 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{tx:.1}" y="{ty}" font-size="11" text-anchor="start" transform="rotate(-45 {tx:.1} {ty})">{a}</text>"#,
            tx = x0 + LABEL + i as f64 * CELL + CELL / 2.0,
            ty = y0 + LABEL - 4.0
        );
        for (j, v) in m[i].iter().enumerate() {
            let x = x0 + LABEL + j as f64 * CELL;
            let _ = writeln!(
                out,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#ccc"/>"##,
                color(*v)
            );
            let _ = writeln!(
                out,
                r#"<text x="{tx:.1}" y="{ty:.1}" font-size="10" text-anchor="middle">{pct:.1}</text>"#,
                tx = x + CELL / 2.0,
                ty = y + CELL / 2.0 + 3.5,
                pct = v * 100.0
            );
        }
    }
}

fn histograms(out: &mut String, x0: f64, y0: f64, report: &BalanceReport) {
    const BAR_W: f64 = 36.0;
    const BAR_H: f64 = 120.0;
    let _ = writeln!(out, r#"<text x="{x0}" y="{y}" font-size="14" font-weight="bold">class histograms (%)</text>"#, y = y0 - 8.0);
    let mut x = x0;
    for g in Group::ALL {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" font-size="12">{g}</text>"#, y = y0 + 12.0);
        for (c, f) in g.classes().iter().zip(&report.histograms[&g]) {
            let h = f * BAR_H;
            let base = y0 + 24.0 + BAR_H;
            let _ = writeln!(
                out,
                r##"<rect x="{x}" y="{top:.2}" width="{w}" height="{h:.2}" fill="#2166ac"/>"##,
                top = base - h,
                w = BAR_W - 6.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{tx:.1}" y="{ty:.1}" font-size="10" text-anchor="middle">{pct:.1}</text>"#,
                tx = x + (BAR_W - 6.0) / 2.0,
                ty = base - h - 3.0,
                pct = f * 100.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{tx:.1}" y="{ty}" font-size="10" text-anchor="middle">{c}</text>"#,
                tx = x + (BAR_W - 6.0) / 2.0,
                ty = base + 12.0
            );
            x += BAR_W;
        }
        x += BAR_W / 2.0;
    }
}

pub fn render(report: &BalanceReport, degree: Option<&EntanglementDegree>) -> String {
    let grid = LABEL + 10.0 * CELL;
    let panels = if degree.is_some() { 2.0 } else { 1.0 };
    let width = PAD + panels * (grid + PAD);
    let height = PAD * 2.0 + grid + 220.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    heatmap(
        &mut out,
        PAD,
        PAD + 10.0,
        &format!("co-occurrence (%), n = {}, sparsity = {:.3}", report.n, report.sparsity),
        &report.matrix,
        sequential,
    );
    if let Some(d) = degree {
        let scale = d.matrix.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        heatmap(&mut out, PAD * 2.0 + grid, PAD + 10.0, "entanglement degree (%)", &d.matrix, |v| diverging(v, scale));
    }
    histograms(&mut out, PAD, PAD * 2.0 + grid + 30.0, report);
    out.push_str("</svg>\n");
    out
}
