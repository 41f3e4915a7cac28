//! Per-setting summary plot as a dependency-free SVG.

use std::fmt::Write;

use crate::commands::EvalRow;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 160.0;
const MARGIN: f64 = 40.0;

fn panel(out: &mut String, index: usize, title: &str, labels: &[String], values: &[Option<f64>]) {
    let x0 = MARGIN + index as f64 * (PANEL_W + MARGIN);
    let y0 = MARGIN;
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let (lo, hi) = present
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x_at = |i: usize| {
        if labels.len() < 2 {
            x0 + PANEL_W / 2.0
        } else {
            x0 + PANEL_W * i as f64 / (labels.len() - 1) as f64
        }
    };
    let y_at = |v: f64| y0 + PANEL_H - PANEL_H * (v - lo) / span;

    let _ = writeln!(
        out,
        r##"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#999"/>"##
    );
    let _ = writeln!(out, r#"<text x="{x0}" y="{}" font-size="14">{title}</text>"#, y0 - 10.0);
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{label}</text>"#,
            x_at(i),
            y0 + PANEL_H + 16.0
        );
    }
    if present.is_empty() {
        return;
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10">{hi:.3}</text>"#, x0 + 4.0, y0 + 12.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10">{lo:.3}</text>"#, x0 + 4.0, y0 + PANEL_H - 4.0);
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| format!("{:.2},{:.2}", x_at(i), y_at(v))))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        points.join(" ")
    );
    for p in &points {
        let (x, y) = p.split_once(',').expect("point has a comma");
        let _ = writeln!(out, r##"<circle cx="{x}" cy="{y}" r="3" fill="#1f77b4"/>"##);
    }
}

/// One panel per metric, x axis = setting, y axis scaled to the panel's range.
pub fn summary_svg(summary: &[EvalRow]) -> String {
    let labels: Vec<String> = summary.iter().map(|r| r.setting.to_string()).collect();
    let series: [(&str, Vec<Option<f64>>); 3] = [
        ("psnr (dB)", summary.iter().map(|r| r.psnr).collect()),
        ("ssim", summary.iter().map(|r| r.ssim).collect()),
        ("proxy", summary.iter().map(|r| r.proxy).collect()),
    ];
    let width = MARGIN + series.len() as f64 * (PANEL_W + MARGIN);
    let height = PANEL_H + 2.5 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for (i, (title, values)) in series.iter().enumerate() {
        panel(&mut out, i, title, &labels, values);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use toolseq::degrade::Setting;

    fn row(setting: Setting, psnr: f64) -> EvalRow {
        EvalRow {
            image: "mean".into(),
            case_id: None,
            setting,
            plan: String::new(),
            psnr: Some(psnr),
            ssim: None,
            proxy: Some(3.0),
        }
    }

    #[test]
    fn one_polyline_per_metric_with_data() {
        let svg = summary_svg(&[row(Setting::I, 20.0), row(Setting::II, 18.0)]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 4);
    }
}
