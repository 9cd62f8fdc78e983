//! Minimal SVG charts: grouped bars, box plots and scatter plots.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
];

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;

pub fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    out: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            esc(title)
        );
        Svg { out }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}"/>"#
        );
    }

    fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r##"<rect class="{class}" x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{fill}" stroke="#333"/>"##,
            w.max(0.0),
            h.max(0.0)
        );
    }

    fn circle(&mut self, x: f64, y: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<circle class="point" cx="{x:.1}" cy="{y:.1}" r="3.5" fill="{fill}" fill-opacity="0.8"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        );
    }

    fn vtext(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="middle" transform="rotate(-90 {x:.1} {y:.1})">{}</text>"#,
            esc(s)
        );
    }

    fn legend(&mut self, names: &[String]) {
        for (i, n) in names.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            self.rect("legend", W - RIGHT + 15.0, y - 9.0, 10.0, 10.0, colour(i));
            self.text(W - RIGHT + 30.0, y, "start", n);
        }
    }

    /// Y axis with five ticks over `[lo, hi]`; returns the value→pixel map.
    fn y_axis(&mut self, lo: f64, hi: f64, label: &str) -> impl Fn(f64) -> f64 {
        let span = if hi > lo { hi - lo } else { 1.0 };
        let map = move |v: f64| H - BOTTOM - (v - lo) / span * (H - TOP - BOTTOM);
        self.line(LEFT, TOP, LEFT, H - BOTTOM, "#333");
        self.line(LEFT, H - BOTTOM, W - RIGHT, H - BOTTOM, "#333");
        for t in 0..=4 {
            let v = lo + span * t as f64 / 4.0;
            let y = map(v);
            self.line(LEFT - 4.0, y, LEFT, y, "#333");
            self.line(LEFT, y, W - RIGHT, y, "#eee");
            self.text(LEFT - 6.0, y + 4.0, "end", &tick(v));
        }
        self.vtext(18.0, (TOP + H - BOTTOM) / 2.0, label);
        map
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Clusters of bars: one cluster per group, one colour per series name.
pub fn grouped_bars(title: &str, y_label: &str, groups: &[(String, Vec<(String, f64)>)]) -> String {
    let mut svg = Svg::new(title);
    let mut names: Vec<String> = Vec::new();
    for (_, bars) in groups {
        for (n, _) in bars {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    let (_, hi) = bounds(groups.iter().flat_map(|(_, b)| b.iter().map(|x| x.1)));
    let y = svg.y_axis(0.0, hi.max(1e-9), y_label);
    let gw = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    let bw = 0.8 * gw / names.len().max(1) as f64;
    for (gi, (group, bars)) in groups.iter().enumerate() {
        let x0 = LEFT + gi as f64 * gw + 0.1 * gw;
        for (name, v) in bars {
            let si = names.iter().position(|n| n == name).unwrap_or(0);
            let x = x0 + si as f64 * bw;
            svg.rect("bar", x, y(*v), bw, y(0.0) - y(*v), colour(si));
        }
        svg.text(LEFT + (gi as f64 + 0.5) * gw, H - BOTTOM + 16.0, "middle", group);
    }
    svg.legend(&names);
    svg.finish()
}

/// `(min, q1, median, q3, max)` with linear interpolation between order
/// statistics.
pub fn five_numbers(values: &[f64]) -> Option<[f64; 5]> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        if i + 1 < v.len() {
            v[i] + frac * (v[i + 1] - v[i])
        } else {
            v[i]
        }
    };
    Some([v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]])
}

/// One panel per outer group, one box per inner series.
pub fn boxplots(title: &str, y_label: &str, panels: &[(String, Vec<(String, Vec<f64>)>)]) -> String {
    let mut svg = Svg::new(title);
    let mut names: Vec<String> = Vec::new();
    for (_, boxes) in panels {
        for (n, _) in boxes {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    let (lo, hi) = bounds(panels.iter().flat_map(|(_, b)| b.iter().flat_map(|x| x.1.iter().copied())));
    let y = svg.y_axis(lo, hi, y_label);
    let pw = (W - LEFT - RIGHT) / panels.len().max(1) as f64;
    for (pi, (panel, boxes)) in panels.iter().enumerate() {
        let bw = 0.7 * pw / boxes.len().max(1) as f64;
        for (bi, (name, vals)) in boxes.iter().enumerate() {
            let Some([mn, q1, med, q3, mx]) = five_numbers(vals) else { continue };
            let si = names.iter().position(|n| n == name).unwrap_or(0);
            let x = LEFT + pi as f64 * pw + 0.15 * pw + bi as f64 * bw;
            let cx = x + 0.4 * bw;
            svg.line(cx, y(mn), cx, y(q1), "#333");
            svg.line(cx, y(q3), cx, y(mx), "#333");
            svg.rect("box", x, y(q3), 0.8 * bw, y(q1) - y(q3), colour(si));
            svg.line(x, y(med), x + 0.8 * bw, y(med), "#000");
        }
        if pi > 0 {
            let sep = LEFT + pi as f64 * pw;
            svg.line(sep, TOP, sep, H - BOTTOM, "#bbb");
        }
        svg.text(LEFT + (pi as f64 + 0.5) * pw, H - BOTTOM + 16.0, "middle", panel);
    }
    svg.legend(&names);
    svg.finish()
}

/// Points per named series; `log_x` puts the x axis on a log10 scale.
pub fn scatter(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)], log_x: bool) -> String {
    let mut svg = Svg::new(title);
    let tx = |x: f64| if log_x { x.max(1e-300).log10() } else { x };
    let (xlo, xhi) = bounds(series.iter().flat_map(|(_, p)| p.iter().map(|q| tx(q.0))));
    let (ylo, yhi) = bounds(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let y = svg.y_axis(ylo, yhi, y_label);
    let x = |v: f64| LEFT + (tx(v) - xlo) / (xhi - xlo) * (W - LEFT - RIGHT);
    for t in 0..=4 {
        let v = xlo + (xhi - xlo) * t as f64 / 4.0;
        let px = LEFT + (v - xlo) / (xhi - xlo) * (W - LEFT - RIGHT);
        svg.line(px, H - BOTTOM, px, H - BOTTOM + 4.0, "#333");
        let label = if log_x { tick(10f64.powf(v)) } else { tick(v) };
        svg.text(px, H - BOTTOM + 16.0, "middle", &label);
    }
    svg.text((LEFT + W - RIGHT) / 2.0, H - BOTTOM + 40.0, "middle", x_label);
    for (si, (_, pts)) in series.iter().enumerate() {
        for &(px, py) in pts {
            if px.is_finite() && py.is_finite() {
                svg.circle(x(px), y(py), colour(si));
            }
        }
    }
    let names: Vec<String> = series.iter().map(|s| s.0.clone()).collect();
    svg.legend(&names);
    svg.finish()
}
