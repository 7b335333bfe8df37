//! CSV and SVG emission for trajectories.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::dynamics::{SimFailure, Trajectory};

/// Formats `x` with 9 significant digits in plain decimal notation,
/// falling back to scientific notation outside `[1e-6, 1e15)`.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if !(-6..15).contains(&exp) {
        return sci;
    }
    let decimals = (8 - exp).max(0) as usize;
    let rounded: f64 = sci.parse().unwrap_or(x);
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

pub fn csv_header(traj: &Trajectory) -> String {
    let first = &traj.samples[0];
    let mut cols = vec!["t (s)".to_string()];
    cols.extend((0..first.i.len()).map(|a| format!("i_{a} (A)")));
    cols.extend((0..first.v.len()).map(|k| format!("v_{k} (V)")));
    cols.extend(traj.source_buses.iter().map(|k| format!("u_{k} (V)")));
    cols.extend(traj.source_buses.iter().map(|k| format!("P_{k} (W)")));
    cols.extend(
        ["v_bar (V)", "P_bar (W)", "p_load (W)", "V_lyapunov (W/s)", "P_potential (W)"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

/// Writes the trajectory as CSV. An early stop is marked by a trailing
/// `# incomplete:` line after the last valid sample.
pub fn write_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    writeln!(w, "{}", csv_header(traj))?;
    let mut line = String::new();
    for s in &traj.samples {
        line.clear();
        line.push_str(&format_number(s.t));
        let values = s
            .i
            .iter()
            .chain(&s.v)
            .chain(&s.u)
            .chain(&s.source_power)
            .chain([&s.v_bar, &s.p_bar, &s.load_power, &s.lyapunov, &s.potential]);
        for x in values {
            line.push(',');
            line.push_str(&format_number(*x));
        }
        writeln!(w, "{line}")?;
    }
    if let Some(f) = &traj.failure {
        writeln!(w, "# incomplete: {}", failure_text(f))?;
    }
    Ok(())
}

pub fn failure_text(f: &SimFailure) -> String {
    crate::error::GridError::from(f.clone()).to_string()
}

/// One named polyline.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Renders a line chart with axes, ticks and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5 * y0.abs().max(1.0) };
    y0 -= pad;
    y1 += pad;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e6e6e6"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 16.0,
            tick_label(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e6e6e6"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (j, s) in series.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * j as f64;
        let lx = LEFT + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round tick positions covering `[lo, hi]`, about five of them.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(x: f64) -> String {
    let s = format!("{:.6}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Source powers, source voltages, and total load against time in ms.
pub fn trajectory_plots(traj: &Trajectory) -> Vec<(&'static str, String)> {
    let t: Vec<f64> = traj.samples.iter().map(|s| 1e3 * s.t).collect();
    let per_source = |f: &dyn Fn(&crate::dynamics::Sample, usize) -> f64| -> Vec<Series> {
        traj.source_buses
            .iter()
            .enumerate()
            .map(|(j, &k)| Series {
                label: format!("source {k}"),
                points: traj.samples.iter().zip(&t).map(|(s, &tm)| (tm, f(s, j))).collect(),
            })
            .collect()
    };
    let powers = per_source(&|s, j| s.source_power[j]);
    let voltages = per_source(&|s, j| s.v[traj.source_buses[j]]);
    let load = vec![Series {
        label: "total load".into(),
        points: traj.samples.iter().zip(&t).map(|(s, &tm)| (tm, s.load_power)).collect(),
    }];
    let name = traj.controller;
    vec![
        (
            "power.svg",
            line_chart(&format!("Source power ({name})"), "time (ms)", "power (W)", &powers),
        ),
        (
            "voltage.svg",
            line_chart(&format!("Source voltage ({name})"), "time (ms)", "voltage (V)", &voltages),
        ),
        (
            "load.svg",
            line_chart("Total load power", "time (ms)", "power (W)", &load),
        ),
    ]
}
