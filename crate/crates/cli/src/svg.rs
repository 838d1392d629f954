//! Minimal SVG document builder. Coordinates are printed with two decimals
//! so identical inputs give identical bytes.

use std::fmt::Write as _;

pub struct Svg {
    body: String,
    width: f64,
    height: f64,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            body: String::new(),
            width,
            height,
        }
    }

    pub fn raw(&mut self, element: &str) {
        self.body.push_str(element);
        self.body.push('\n');
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, attrs: &str) {
        self.raw(&format!(
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {attrs}/>"#
        ));
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, attrs: &str) {
        self.raw(&format!(r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" {attrs}/>"#));
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, attrs: &str) {
        self.raw(&format!(
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" {attrs}/>"#
        ));
    }

    pub fn text(&mut self, x: f64, y: f64, text: &str, attrs: &str) {
        self.raw(&format!(
            r#"<text x="{x:.2}" y="{y:.2}" {attrs}>{}</text>"#,
            escape(text)
        ));
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], attrs: &str) {
        self.raw(&format!(r#"<polyline points="{}" {attrs}/>"#, point_list(points)));
    }

    pub fn polygon(&mut self, points: &[(f64, f64)], attrs: &str) {
        self.raw(&format!(r#"<polygon points="{}" {attrs}/>"#, point_list(points)));
    }

    pub fn finish(self, defs: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#,
            w = self.width,
            h = self.height
        );
        if !defs.is_empty() {
            let _ = writeln!(out, "<defs>{defs}</defs>");
        }
        let _ = writeln!(
            out,
            r#"<rect x="0" y="0" width="{:.0}" height="{:.0}" fill="white"/>"#,
            self.width, self.height
        );
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

fn point_list(points: &[(f64, f64)]) -> String {
    let mut s = String::with_capacity(points.len() * 16);
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.2},{y:.2}");
    }
    s
}

/// Affine map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub from: f64,
    pub to: f64,
}

impl Axis {
    pub fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}
