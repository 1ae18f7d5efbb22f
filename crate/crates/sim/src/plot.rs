//! Self-contained SVG line plots and heatmaps.

use std::fmt::Write as _;

use membrane_core::{CellMask, StructuredGrid};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
            let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
            lo -= pad;
            hi += pad;
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b >= a {
                return (a..=b).map(|e| 10f64.powi(e)).collect();
            }
            return vec![10f64.powf(0.5 * (self.lo + self.hi))];
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-2..1e4).contains(&v.abs()) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}").replace(".00e", "e")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn frame(out: &mut String, x_label: &str, y_label: &str) {
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
}

impl LinePlot {
    pub fn to_svg(&self) -> Result<String, String> {
        let points = || self.series.iter().flat_map(|s| s.points.iter().copied());
        if points().next().is_none() {
            return Err("nothing to plot".into());
        }
        for (x, y) in points() {
            if !x.is_finite() || !y.is_finite() {
                return Err(format!("non-finite point ({x}, {y})"));
            }
            if (self.log_x && x <= 0.0) || (self.log_y && y <= 0.0) {
                return Err(format!("point ({x}, {y}) is not positive on a log axis"));
            }
        }
        let ax = Axis::fit(points().map(|p| p.0), self.log_x);
        let ay = Axis::fit(points().map(|p| p.1), self.log_y);
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let px = |x: f64| LEFT + ax.unit(x) * pw;
        let py = |y: f64| TOP + (1.0 - ay.unit(y)) * ph;

        let mut out = String::new();
        header(&mut out, &self.title);
        for t in ax.ticks() {
            let x = px(t);
            let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP + ph);
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, label(t));
        }
        for t in ay.ticks() {
            let y = py(t);
            let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, label(t));
        }
        frame(&mut out, &self.x_label, &self.y_label);
        for (n, s) in self.series.iter().enumerate() {
            let color = COLORS[n % COLORS.len()];
            let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
            for &(x, y) in &s.points {
                let _ = writeln!(out, r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
            }
            let ly = TOP + 14.0 + 18.0 * n as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(out, r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="4" fill="{color}"/>"#, ly - 6.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 18.0, escape(&s.label));
        }
        out.push_str("</svg>\n");
        Ok(out)
    }
}

/// Interpolated five-stop blue-to-yellow palette.
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let mix = |p: f64, q: f64| (p + f * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Colors quantized to this many levels; neighboring cells of equal level
/// in a row merge into one rectangle.
const LEVELS: f64 = 64.0;

#[derive(Debug, Clone, Copy)]
pub struct Heatmap<'a> {
    pub title: &'a str,
    pub grid: &'a StructuredGrid,
    pub values: &'a [f64],
    pub mask: Option<&'a CellMask>,
}

impl Heatmap<'_> {
    pub fn to_svg(&self) -> Result<String, String> {
        let g = self.grid;
        if self.values.len() != g.len() {
            return Err("field does not match its grid".into());
        }
        let open = |k: usize| self.mask.map_or(true, |m| m.is_open(k));
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (k, v) in self.values.iter().enumerate() {
            if open(k) {
                if !v.is_finite() {
                    return Err(format!("non-finite value at cell {k}"));
                }
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if lo > hi {
            return Err("no open cells".into());
        }
        let level = |v: f64| if hi > lo { ((v - lo) / (hi - lo) * (LEVELS - 1.0)).round() } else { 0.0 };

        let (x0, x1) = g.x_extent();
        let (y0, y1) = g.y_extent();
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        // keep the aspect ratio of the physical extent
        let scale = (pw / (x1 - x0)).min(ph / (y1 - y0));
        let (w, h) = ((x1 - x0) * scale, (y1 - y0) * scale);
        let (ox, oy) = (LEFT + (pw - w) / 2.0, TOP + (ph - h) / 2.0);
        let (cw, chh) = (w / g.nx as f64, h / g.ny as f64);

        let mut out = String::new();
        header(&mut out, self.title);
        let _ = writeln!(out, r#"<g class="raster" shape-rendering="crispEdges">"#);
        for j in 0..g.ny {
            let y = oy + h - (j + 1) as f64 * chh;
            let mut i = 0;
            while i < g.nx {
                let k = g.index(i, j);
                let key = if open(k) { Some(level(self.values[k])) } else { None };
                let mut e = i + 1;
                while e < g.nx {
                    let k2 = g.index(e, j);
                    let key2 = if open(k2) { Some(level(self.values[k2])) } else { None };
                    if key2 != key {
                        break;
                    }
                    e += 1;
                }
                let fill = key.map_or_else(|| "#808080".to_string(), |l| color(l / (LEVELS - 1.0)));
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                    ox + i as f64 * cw,
                    y,
                    (e - i) as f64 * cw,
                    chh
                );
                i = e;
            }
        }
        out.push_str("</g>\n");
        let _ = writeln!(out, r#"<rect x="{ox:.2}" y="{oy:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="black"/>"#);
        let _ = writeln!(out, r#"<text class="extent" x="{ox:.2}" y="{:.2}" text-anchor="start">x = {}</text>"#, oy + h + 18.0, label(x0));
        let _ = writeln!(out, r#"<text class="extent" x="{:.2}" y="{:.2}" text-anchor="end">x = {}</text>"#, ox + w, oy + h + 18.0, label(x1));
        let _ = writeln!(out, r#"<text class="extent" x="{:.2}" y="{:.2}" text-anchor="end">y = {}</text>"#, ox - 6.0, oy + h, label(y0));
        let _ = writeln!(out, r#"<text class="extent" x="{:.2}" y="{:.2}" text-anchor="end">y = {}</text>"#, ox - 6.0, oy + 10.0, label(y1));
        // color bar
        let bx = WIDTH - RIGHT + 20.0;
        for s in 0..LEVELS as usize {
            let t = s as f64 / (LEVELS - 1.0);
            let _ = writeln!(
                out,
                r#"<rect x="{bx:.1}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
                TOP + ph * (1.0 - (s + 1) as f64 / LEVELS),
                ph / LEVELS + 0.3,
                color(t)
            );
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bx + 22.0, TOP + 10.0, label(hi));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bx + 22.0, TOP + ph, label(lo));
        out.push_str("</svg>\n");
        Ok(out)
    }
}
