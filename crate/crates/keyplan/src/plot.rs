//! Self-contained SVG charts.

use std::fmt::Write;

use keyplan_core::arm::{forward_kinematics, ArmSpec, JointConfig};
use keyplan_core::metrics::HISTOGRAM_BINS;
use keyplan_core::scene::Scene;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn header(w: f64, h: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        w / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(svg: &mut String, x_label: &str, y_label: &str, y_lo: f64, y_hi: f64) {
    let _ = writeln!(
        svg,
        "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/><line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>",
        H - M,
        W - M,
        H - M,
        H - M
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (v, y) in [(y_hi, M), (y_lo, H - M)] {
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", M - 4.0, y + 4.0, fmt_tick(v));
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// One polyline per series against the 1-based index.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, &[f64])]) -> String {
    let mut svg = header(W, H, title);
    let vals = series.iter().flat_map(|s| s.1.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), if hi > lo { hi } else { lo + 1.0 }) } else { (0.0, 1.0) };
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(0).max(2);
    axes(&mut svg, x_label, y_label, lo, hi);
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{n}</text>", W - M, H - M + 14.0);
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_finite())
            .map(|(i, y)| {
                let x = M + (W - 2.0 * M) * i as f64 / (n - 1) as f64;
                let y = H - M - (H - 2.0 * M) * (y - lo) / (hi - lo);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", pts.join(" "));
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>", W - M - 120.0, M + 14.0 * k as f64, escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grouped bars, one group per bin over `[0, 1]` and one bar per series.
pub fn histogram_chart(title: &str, x_label: &str, series: &[(&str, [usize; HISTOGRAM_BINS])]) -> String {
    let mut svg = header(W, H, title);
    let max = series.iter().flat_map(|s| s.1).max().unwrap_or(0).max(1) as f64;
    axes(&mut svg, x_label, "tasks", 0.0, max);
    let group = (W - 2.0 * M) / HISTOGRAM_BINS as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for b in 0..HISTOGRAM_BINS {
        let x0 = M + group * b as f64;
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{:.1}</text>", x0, H - M + 14.0, b as f64 / 10.0);
        for (k, (_, counts)) in series.iter().enumerate() {
            let h = (H - 2.0 * M) * counts[b] as f64 / max;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{bar:.1}\" height=\"{h:.1}\" fill=\"{}\"/>",
                x0 + group * 0.1 + bar * k as f64,
                H - M - h,
                COLORS[k % COLORS.len()]
            );
        }
    }
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">1.0</text>", W - M, H - M + 14.0);
    for (k, (name, _)) in series.iter().enumerate() {
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>", M + 10.0, M + 14.0 * k as f64, COLORS[k % COLORS.len()], escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Planar scene with obstacles, end-effector traces of `paths` and the arm at
/// the first and last configuration of the first path. Only the first two
/// workspace axes are drawn.
pub fn scene_chart(title: &str, scene: &Scene, arm: &ArmSpec, paths: &[(Vec<JointConfig>, &str)]) -> String {
    let size = 480.0;
    let mut svg = header(size, size + 30.0, title);
    let (lo, hi) = (&scene.bounds.lo, &scene.bounds.hi);
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let px = |p: &[f64]| {
        let x = 10.0 + (size - 20.0) * (p[0] - lo[0]) / span;
        let y = 30.0 + (size - 20.0) * (hi[1] - p[1]) / span;
        (x, y)
    };
    let (x0, y0) = px(&[lo[0], hi[1]]);
    let (x1, y1) = px(&[hi[0], lo[1]]);
    let _ = writeln!(svg, "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#999\"/>", x1 - x0, y1 - y0);
    for b in &scene.obstacles {
        let (s, c) = b.rotation.sin_cos();
        let corners: Vec<String> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .iter()
            .map(|(a, bb)| {
                let (dx, dy) = (a * b.half_extents[0], bb * b.half_extents[1]);
                let (x, y) = px(&[b.center[0] + c * dx - s * dy, b.center[1] + s * dx + c * dy]);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(svg, "<polygon points=\"{}\" fill=\"#bbb\" stroke=\"#555\"/>", corners.join(" "));
    }
    let arm_at = |svg: &mut String, q: &[f64], color: &str| {
        let fk = forward_kinematics(arm, q);
        let pts: Vec<String> = fk
            .points
            .iter()
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"3\" stroke-opacity=\"0.6\" points=\"{}\"/>", pts.join(" "));
    };
    if let Some((first, _)) = paths.first() {
        if let (Some(a), Some(b)) = (first.first(), first.last()) {
            arm_at(&mut svg, a, "#2ca02c");
            arm_at(&mut svg, b, "#d62728");
        }
    }
    for (configs, color) in paths {
        let pts: Vec<String> = configs
            .iter()
            .map(|q| {
                let (x, y) = px(forward_kinematics(arm, q).end_effector());
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>", pts.join(" "));
    }
    svg.push_str("</svg>\n");
    svg
}
