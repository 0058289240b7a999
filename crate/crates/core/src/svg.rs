//! Minimal SVG line plots and heat maps.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(s: &mut String, title: &str, width: f64, height: f64) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, esc(title));
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut s = String::new();
    header(&mut s, title, W, H);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#, px(xv), H - MARGIN + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, MARGIN - 4.0, py(yv) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = MARGIN + 14.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, W - MARGIN - 120.0, esc(ser.label));
    }
    s.push_str("</svg>\n");
    s
}

/// Diverging blue-white-red colour for `v` in `[-m, m]`.
fn diverging(v: f64, m: f64) -> String {
    if !v.is_finite() {
        return "#cccccc".into();
    }
    let t = (v / m).clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Heat map of `values[row][col]` (NaN cells grey), symmetric colour scale about 0.
pub fn heat_map(title: &str, row_labels: &[String], col_labels: &[String], values: &[Vec<f64>]) -> Result<String> {
    if values.len() != row_labels.len() || values.iter().any(|r| r.len() != col_labels.len()) {
        return Err(Error::shape(
            "heat map",
            format!("{}x{}", row_labels.len(), col_labels.len()),
            format!("{} rows", values.len()),
        ));
    }
    let m = values
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1e-12);
    let (left, top) = (110.0, 40.0);
    let cell_w = ((W - left - 20.0) / col_labels.len().max(1) as f64).max(4.0);
    let cell_h = 18.0;
    let width = left + cell_w * col_labels.len() as f64 + 20.0;
    let height = top + cell_h * row_labels.len() as f64 + 60.0;
    let mut s = String::new();
    header(&mut s, title, width, height);
    for (r, row) in values.iter().enumerate() {
        let y = top + cell_h * r as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 4.0, y + 13.0, esc(&row_labels[r]));
        for (c, v) in row.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{y:.1}" width="{cell_w:.1}" height="{cell_h}" fill="{}"><title>{v}</title></rect>"#,
                left + cell_w * c as f64,
                diverging(*v, m)
            );
        }
    }
    let step = (col_labels.len() / 10).max(1);
    for (c, label) in col_labels.iter().enumerate().step_by(step) {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            left + cell_w * (c as f64 + 0.5),
            top + cell_h * row_labels.len() as f64 + 16.0,
            esc(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="{:.1}">scale: blue -{m:.3} .. white 0 .. red +{m:.3}</text>"#,
        height - 12.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_svg() {
        let s = line_plot("t", "x", "y", &[Series { label: "a<b", points: vec![(0.0, 1.0), (1.0, 2.0)] }]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b"));
        assert!(s.contains("<polyline"));
    }

    #[test]
    fn zero_heat_map_is_white() {
        let rows = vec!["d1".to_string()];
        let cols = vec!["10".to_string(), "20".to_string()];
        let s = heat_map("ss", &rows, &cols, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(s.matches("fill=\"#ffffff\"").count(), 2);
        assert!(heat_map("ss", &rows, &cols, &[vec![0.0]]).is_err());
    }
}
