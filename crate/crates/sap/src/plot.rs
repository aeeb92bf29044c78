//! Plain-SVG rendering of attack results and bands. No plotting library:
//! output is deterministic, diffable markup.

use crate::attacks::AttackResult;
use crate::data::Signal;
use crate::existence::Band;
use crate::nn::Prediction;

const WIDTH: f64 = 960.0;
const PANEL_HEIGHT: f64 = 190.0;
const MARGIN: f64 = 46.0;
const GAP: f64 = 26.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    lo: f64,
    hi: f64,
    n: usize,
}

impl Panel {
    fn sx(&self, i: usize) -> f64 {
        if self.n <= 1 {
            return self.x0;
        }
        self.x0 + self.w * i as f64 / (self.n - 1) as f64
    }

    fn sy(&self, v: f64) -> f64 {
        let span = self.hi - self.lo;
        let unit = if span > 0.0 {
            (v - self.lo) / span
        } else {
            0.5
        };
        self.y0 + self.h * (1.0 - unit)
    }

    fn polyline(&self, values: &[f64], stroke: &str) -> String {
        let mut d = String::new();
        for (i, v) in values.iter().enumerate() {
            d.push(if i == 0 { 'M' } else { 'L' });
            d.push_str(&fmt(self.sx(i)));
            d.push(' ');
            d.push_str(&fmt(self.sy(*v)));
        }
        format!(r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="1.2"/>"#)
    }

    fn frame(&self, caption: &str) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="white" stroke="#c8c8c8"/>"##,
            fmt(self.x0),
            fmt(self.y0),
            fmt(self.w),
            fmt(self.h)
        ));
        if self.lo < 0.0 && self.hi > 0.0 {
            let y = fmt(self.sy(0.0));
            s.push_str(&format!(
                r##"<path d="M{} {} L{} {}" stroke="#e6e6e6" stroke-width="1"/>"##,
                fmt(self.x0),
                y,
                fmt(self.x0 + self.w),
                y
            ));
        }
        s.push_str(&format!(
            r##"<text x="{}" y="{}" font-family="monospace" font-size="13" fill="#333">{}</text>"##,
            fmt(self.x0),
            fmt(self.y0 - 7.0),
            escape(caption)
        ));
        s
    }
}

fn header(total_height: f64) -> String {
    format!(
        concat!(
            r#"<?xml version="1.0" encoding="UTF-8"?>"#,
            "\n",
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            "\n",
            r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#,
            "\n"
        ),
        w = WIDTH,
        h = total_height
    )
}

fn describe(tag: &str, pred: &Prediction) -> String {
    format!(
        "{tag} - predicted {} ({:.1}%)",
        pred.class.label(),
        pred.confidence * 100.0
    )
}

/// Three stacked panels: original signal, perturbation, adversarial signal.
/// All three share one vertical scale (units per pixel); the perturbation
/// panel is centered on zero so its small amplitude is visibly small.
pub fn attack_svg(result: &AttackResult) -> String {
    let original = result.original.samples();
    let adversarial = result.adversarial.samples();
    let n = original.len();

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in original.iter().chain(adversarial) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let lo = lo - pad;
    let hi = hi + pad;
    let half_span = (hi - lo) / 2.0;

    let total_height = 3.0 * PANEL_HEIGHT + 2.0 * GAP + 2.0 * MARGIN;
    let panel_at = |row: f64, plo: f64, phi: f64| Panel {
        x0: MARGIN,
        y0: MARGIN + row * (PANEL_HEIGHT + GAP),
        w: WIDTH - 2.0 * MARGIN,
        h: PANEL_HEIGHT,
        lo: plo,
        hi: phi,
        n,
    };

    let top = panel_at(0.0, lo, hi);
    let mid = panel_at(1.0, -half_span, half_span);
    let bottom = panel_at(2.0, lo, hi);

    let title = if result.id.is_empty() {
        format!("{} attack", result.method.name())
    } else {
        format!("{} attack on {}", result.method.name(), result.id)
    };

    let mut svg = header(total_height);
    svg.push_str(&format!(
        r##"<text x="{}" y="{}" font-family="monospace" font-size="14" fill="#000">{}  (true {}; max dev {}; success {})</text>"##,
        fmt(MARGIN),
        fmt(24.0),
        escape(&title),
        result.label.label(),
        fmt(result.linf_norm),
        result.success
    ));
    svg.push('\n');
    svg.push_str(&top.frame(&describe("original", &result.pred_before)));
    svg.push_str(&top.polyline(original, "#1f6fb4"));
    svg.push('\n');
    svg.push_str(&mid.frame("perturbation (same vertical scale)"));
    svg.push_str(&mid.polyline(&result.perturbation, "#c23b22"));
    svg.push('\n');
    svg.push_str(&bottom.frame(&describe("adversarial", &result.pred_after)));
    svg.push_str(&bottom.polyline(adversarial, "#1f6fb4"));
    svg.push_str("\n</svg>\n");
    svg
}

/// Band envelope as a filled region with the original signal overlaid.
pub fn band_svg(x: &Signal, band: &Band, caption: &str) -> String {
    let n = x.len().min(band.len());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in 0..n {
        lo = lo.min(band.min[t]).min(x.samples()[t]);
        hi = hi.max(band.max[t]).max(x.samples()[t]);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);

    let total_height = 2.0 * PANEL_HEIGHT + 2.0 * MARGIN;
    let panel = Panel {
        x0: MARGIN,
        y0: MARGIN,
        w: WIDTH - 2.0 * MARGIN,
        h: 2.0 * PANEL_HEIGHT,
        lo: lo - pad,
        hi: hi + pad,
        n,
    };

    let mut region = String::new();
    for t in 0..n {
        region.push(if t == 0 { 'M' } else { 'L' });
        region.push_str(&fmt(panel.sx(t)));
        region.push(' ');
        region.push_str(&fmt(panel.sy(band.max[t])));
    }
    for t in (0..n).rev() {
        region.push('L');
        region.push_str(&fmt(panel.sx(t)));
        region.push(' ');
        region.push_str(&fmt(panel.sy(band.min[t])));
    }
    region.push('Z');

    let mut svg = header(total_height);
    svg.push_str(&panel.frame(caption));
    svg.push_str(&format!(
        r##"<path d="{region}" fill="#f5c8a0" stroke="none" fill-opacity="0.85"/>"##
    ));
    svg.push('\n');
    svg.push_str(&panel.polyline(&x.samples()[..n], "#1f6fb4"));
    svg.push_str("\n</svg>\n");
    svg
}
