//! Minimal SVG plots: polygon overlays and grid heat maps in the P–Q plane.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 560.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Outline colours for overlays, cycled by series.
pub const SERIES: [&str; 6] = ["#1f77b4", "#d62728", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];
pub const SECURE: &str = "#2ca02c";

/// Diverging red–blue colour for `t ∈ [-1, 1]`; red is positive.
pub fn diverging(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    if t >= 0.0 {
        format!("#ff{:02x}{:02x}", fade(t), fade(t))
    } else {
        format!("#{:02x}{:02x}ff", fade(t), fade(t))
    }
}

/// White-to-red ramp for `t ∈ [0, 1]`.
pub fn sequential(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let g = (255.0 * (1.0 - t)).round() as u8;
    let r = (255.0 - 80.0 * t * t).round() as u8;
    format!("#{r:02x}{g:02x}{g:02x}")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let n = raw / mag;
    mag * if n < 1.5 {
        1.0
    } else if n < 3.5 {
        2.0
    } else if n < 7.5 {
        5.0
    } else {
        10.0
    }
}

pub struct Plot {
    title: String,
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    legend: Vec<(String, String)>,
    timestamp: Option<u64>,
}

impl Plot {
    /// Axes fitted to `bbox = (p_min, p_max, q_min, q_max)` with 5% margin.
    pub fn new(title: &str, bbox: (f64, f64, f64, f64), timestamp: Option<u64>) -> Self {
        let pad = |lo: f64, hi: f64| {
            let m = ((hi - lo) * 0.05).max(1e-3);
            (lo - m, hi + m)
        };
        Plot {
            title: title.into(),
            x: pad(bbox.0, bbox.1),
            y: pad(bbox.2, bbox.3),
            body: String::new(),
            legend: vec![],
            timestamp,
        }
    }

    fn sx(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn sy(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], stroke: &str, fill: Option<&str>, label: &str) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|&(p, q)| format!("{:.2},{:.2}", self.sx(p), self.sy(q))).collect();
        let fill = fill.map_or("none".to_string(), |f| format!("{f}\" fill-opacity=\"0.35"));
        let _ = writeln!(
            self.body,
            "<polygon points=\"{}\" fill=\"{fill}\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>",
            coords.join(" ")
        );
        if !label.is_empty() {
            self.legend.push((stroke.into(), label.into()));
        }
    }

    pub fn marker(&mut self, pt: (f64, f64), colour: &str, label: &str) {
        let _ = writeln!(
            self.body,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{colour}\"/>",
            self.sx(pt.0),
            self.sy(pt.1)
        );
        if !label.is_empty() {
            self.legend.push((colour.into(), label.into()));
        }
    }

    /// Filled cell of side `step` centred on a grid node.
    pub fn cell(&mut self, centre: (f64, f64), step: f64, colour: &str) {
        let (x0, x1) = (self.sx(centre.0 - step / 2.0), self.sx(centre.0 + step / 2.0));
        let (y0, y1) = (self.sy(centre.1 + step / 2.0), self.sy(centre.1 - step / 2.0));
        let _ = writeln!(
            self.body,
            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{colour}\"/>",
            x1 - x0,
            y1 - y0
        );
    }

    /// Vertical colour bar; `colour` maps `t ∈ [0, 1]` bottom to top.
    pub fn colour_bar(&mut self, lo: f64, hi: f64, unit: &str, colour: impl Fn(f64) -> String) {
        let (x, top, bottom) = (W - RIGHT + 40.0, TOP + 20.0, H - BOTTOM - 20.0);
        let n = 40;
        let h = (bottom - top) / n as f64;
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            let _ = writeln!(
                self.body,
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"16\" height=\"{:.2}\" fill=\"{}\"/>",
                bottom - (k + 1) as f64 * h,
                h + 0.3,
                colour(t)
            );
        }
        for (v, y) in [(hi, top), (lo, bottom)] {
            let _ = writeln!(
                self.body,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{v:.3}</text>",
                x + 20.0,
                y + 4.0
            );
        }
        let _ = writeln!(self.body, "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\">{unit}</text>", top - 8.0);
    }

    fn axes(&self, out: &mut String) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(
            out,
            "<rect x=\"{x0}\" y=\"{y0}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>",
            x1 - x0,
            y1 - y0
        );
        let dx = nice_step(self.x.1 - self.x.0);
        let mut v = (self.x.0 / dx).ceil() * dx;
        while v <= self.x.1 {
            let x = self.sx(v);
            let _ = writeln!(out, "<line x1=\"{x:.2}\" y1=\"{y1}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>", y1 + 5.0);
            let _ = writeln!(
                out,
                "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
                y1 + 18.0,
                tick(v, dx)
            );
            v += dx;
        }
        let dy = nice_step(self.y.1 - self.y.0);
        let mut v = (self.y.0 / dy).ceil() * dy;
        while v <= self.y.1 {
            let y = self.sy(v);
            let _ = writeln!(out, "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{x0}\" y2=\"{y:.2}\" stroke=\"#333\"/>", x0 - 5.0);
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
                x0 - 8.0,
                y + 4.0,
                tick(v, dy)
            );
            v += dy;
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">P at interface (MW)</text>",
            (x0 + x1) / 2.0,
            H - 12.0
        );
        let _ = writeln!(
            out,
            "<text x=\"18\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">Q at interface (MVAr)</text>",
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">"
        );
        if let Some(ts) = self.timestamp {
            let _ = writeln!(out, "<metadata>generated-unix {ts}</metadata>");
        }
        let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
            (LEFT + W - RIGHT) / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            "<clipPath id=\"plot\"><rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{}\" height=\"{}\"/></clipPath>",
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        let _ = writeln!(out, "<g clip-path=\"url(#plot)\">");
        out.push_str(&self.body);
        let _ = writeln!(out, "</g>");
        self.axes(&mut out);
        for (k, (colour, label)) in self.legend.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * k as f64;
            let x = W - RIGHT + 10.0;
            let _ = writeln!(out, "<rect x=\"{x}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{colour}\"/>", y - 10.0);
            let _ = writeln!(out, "<text x=\"{}\" y=\"{y:.2}\" font-size=\"11\">{}</text>", x + 16.0, escape(label));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.digits$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_endpoints() {
        assert_eq!(diverging(1.0), "#ff0000");
        assert_eq!(diverging(-1.0), "#0000ff");
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(7.0), "#ff0000");
        assert_eq!(sequential(0.0), "#ffffff");
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_step(6.0), 1.0);
        assert_eq!(nice_step(0.6), 0.1);
        assert_eq!(tick(0.30000000000000004, 0.1), "0.3");
    }
}
