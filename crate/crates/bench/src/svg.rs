//! Minimal SVG: heatmap cells and horizontal bars.

use std::fmt::Write as _;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// White to dark blue over `[0, 1]`.
fn blue(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let ch = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(255.0, 8.0), ch(255.0, 48.0), ch(255.0, 107.0))
}

/// Cells coloured by value in `[0, 1]`; `None` cells are grey and labelled NA.
pub fn heatmap(title: &str, rows: &[String], cols: &[String], cells: &[Vec<Option<f64>>]) -> String {
    let cell = 34.0;
    let left = 110.0;
    let top = 130.0;
    let w = left + cell * cols.len() as f64 + 20.0;
    let h = top + cell * rows.len() as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="16" font-size="13">{}</text>"#, escape(title));
    for (j, c) in cols.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let y = top - 6.0;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#,
            escape(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell * 0.6,
            escape(r)
        );
        for j in 0..cols.len() {
            let x = left + cell * j as f64;
            let v = cells[i][j];
            let (fill, label) = match v {
                Some(v) => (blue(v), format!("{v:.2}")),
                None => ("#cccccc".to_string(), "NA".to_string()),
            };
            let ink = if v.unwrap_or(0.0) > 0.55 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#ffffff"/><text x="{}" y="{}" text-anchor="middle" fill="{ink}" font-size="8">{label}</text>"##,
                x + cell / 2.0,
                y + cell * 0.6
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One horizontal bar per label, with an optional error whisker.
pub fn bars(title: &str, labels: &[String], values: &[f64], errors: Option<&[f64]>) -> String {
    let bar = 16.0;
    let gap = 4.0;
    let left = 110.0;
    let width = 320.0;
    let top = 30.0;
    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let h = top + (bar + gap) * labels.len() as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" font-family="sans-serif" font-size="10">"#,
        left + width + 80.0
    );
    let _ = writeln!(s, r#"<text x="{left}" y="16" font-size="13">{}</text>"#, escape(title));
    for (i, (l, &v)) in labels.iter().zip(values).enumerate() {
        let y = top + (bar + gap) * i as f64;
        let len = width * v.max(0.0) / vmax;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text><rect x="{left}" y="{y}" width="{len:.2}" height="{bar}" fill="{}"/><text x="{:.2}" y="{}">{v:.3}</text>"#,
            left - 6.0,
            y + bar * 0.75,
            escape(l),
            blue(0.8),
            left + len + 4.0,
            y + bar * 0.75
        );
        if let Some(e) = errors.and_then(|e| e.get(i)) {
            let a = left + width * (v - e).max(0.0) / vmax;
            let b = left + width * (v + e).max(0.0) / vmax;
            let _ = writeln!(
                s,
                r##"<line x1="{a:.2}" x2="{b:.2}" y1="{m}" y2="{m}" stroke="#000000"/>"##,
                m = y + bar / 2.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
