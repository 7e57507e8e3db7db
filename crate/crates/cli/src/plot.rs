//! Minimal SVG plots: log-log series and a bound-versus-measured scatter.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Some(Self { lo, hi })
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Frame, ticks and labels; ticks are at integer powers of ten when `log`.
fn axes(out: &mut String, x: &Axis, y: &Axis, log: bool, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (MARGIN, WIDTH - 20.0, 40.0, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    let ticks = |axis: &Axis| -> Vec<f64> {
        if log {
            let (a, z) = (axis.lo.ceil() as i64, axis.hi.floor() as i64);
            let step = ((z - a) / 8).max(1);
            (a..=z).step_by(step as usize).map(|k| k as f64).collect()
        } else {
            (0..=4).map(|k| axis.lo + (axis.hi - axis.lo) * k as f64 / 4.0).collect()
        }
    };
    let label = |v: f64| if log { format!("1e{}", v as i64) } else { format!("{v:.3}") };
    for v in ticks(x) {
        let px = x.map(v, l, r);
        let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(
            out,
            r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            b + 18.0,
            label(v)
        );
    }
    for v in ticks(y) {
        let py = y.map(v, b, t);
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 8.0,
            py + 4.0,
            label(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 18.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

/// Log-log line plot; nonpositive values are dropped.
pub fn log_log(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let logged: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
                .map(|(x, y)| (x.log10(), y.log10()))
                .collect()
        })
        .collect();
    let mut out = String::new();
    header(&mut out, title);
    let (Some(x), Some(y)) = (
        Axis::fit(logged.iter().flatten().map(|p| p.0)),
        Axis::fit(logged.iter().flatten().map(|p| p.1)),
    ) else {
        out.push_str("</svg>\n");
        return out;
    };
    axes(&mut out, &x, &y, true, xlabel, ylabel);
    let (l, r, t, b) = (MARGIN, WIDTH - 20.0, 40.0, HEIGHT - MARGIN);
    for (k, (pts, s)) in logged.iter().zip(series).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(a, c)| format!("{:.2},{:.2}", x.map(*a, l, r), y.map(*c, b, t)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for p in &path {
            let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = t + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            r - 8.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of `(measured, bound)` with the diagonal; infinite bounds are dropped.
pub fn bound_scatter(title: &str, points: &[(f64, f64)]) -> String {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .collect();
    let mut out = String::new();
    header(&mut out, title);
    let Some(axis) = Axis::fit(pts.iter().flat_map(|p| [p.0, p.1]).chain([0.0])) else {
        out.push_str("</svg>\n");
        return out;
    };
    axes(&mut out, &axis, &axis, false, "measured", "bound");
    let (l, r, t, b) = (MARGIN, WIDTH - 20.0, 40.0, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{t}" stroke="gray" stroke-dasharray="4 3"/>"#
    );
    for (m, bound) in pts {
        let color = if bound >= m { COLORS[0] } else { COLORS[1] };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
            axis.map(m, l, r),
            axis.map(bound, b, t)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_log_is_well_formed_and_deterministic() {
        let s = [Series {
            label: "alpha".into(),
            points: vec![(8.0, 1e-2), (16.0, 1e-3), (32.0, 0.0)],
        }];
        let a = log_log("rates", "m", "value", &s);
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<circle").count(), 2);
        assert_eq!(a, log_log("rates", "m", "value", &s));
    }

    #[test]
    fn scatter_drops_infinite_bounds() {
        let svg = bound_scatter("b", &[(0.1, 0.2), (0.3, f64::INFINITY)]);
        assert_eq!(svg.matches("<circle").count(), 1);
    }
}
