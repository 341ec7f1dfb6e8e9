//! Minimal SVG emitters for voltage traces and raster plots. No rendering
//! dependencies; the output is a standalone vector file.

use std::fmt::Write as _;

use memsplit_core::{RasterRow, VoltageEnsemble};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 45.0;

const TRACE_COLORS: [&str; 6] = [
    "#000000", "#c62828", "#1565c0", "#2e7d32", "#ef6c00", "#6a1b9a",
];

struct Frame {
    t_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        MARGIN_L + (t / self.t_max) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN_B - ((v - self.y_min) / span) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
}

fn axes(out: &mut String, frame: &Frame, y_label: &str) {
    let x0 = MARGIN_L;
    let y0 = HEIGHT - MARGIN_B;
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        WIDTH - MARGIN_R
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>"#
    );
    // time ticks every ~1/8 of the span, rounded to a nice step
    let step = nice_step(frame.t_max / 8.0);
    let mut t = 0.0;
    while t <= frame.t_max + 1e-9 {
        let x = frame.x(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" font-size="12" text-anchor="middle">{t:.0}</text>"#,
            y0 + 20.0
        );
        t += step;
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">t (ms)</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    );
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.abs().max(1e-12).log10().floor());
    let frac = raw / mag;
    let nice = if frac < 1.5 {
        1.0
    } else if frac < 3.5 {
        2.0
    } else if frac < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Overlaid per-neuron voltage traces.
pub fn trace_svg(voltages: &VoltageEnsemble) -> String {
    let grid = voltages.grid();
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in voltages.signals() {
        for &v in s.values() {
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    if y_min == y_max {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let frame = Frame {
        t_max: grid.duration_ms(),
        y_min,
        y_max,
    };
    let mut out = String::new();
    header(&mut out);
    axes(&mut out, &frame, "v (mV)");
    for (i, s) in voltages.signals().iter().enumerate() {
        let color = TRACE_COLORS[i % TRACE_COLORS.len()];
        let mut points = String::new();
        for (k, &v) in s.values().iter().enumerate() {
            let _ = write!(points, "{:.2},{:.2} ", frame.x(grid.time_at(k)), frame.y(v));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
            points.trim_end()
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Raster plot: one row per neuron, a short dash per spike. Rows labeled "E"
/// draw black, "I" red, anything else gray. Vertical dashed blue markers can
/// flag event times (e.g. when a delayed connection switches on).
pub fn raster_svg(
    rows: &[RasterRow],
    n_neurons: usize,
    duration_ms: f64,
    markers_ms: &[f64],
) -> String {
    let frame = Frame {
        t_max: duration_ms,
        y_min: -0.5,
        y_max: n_neurons as f64 - 0.5,
    };
    let mut out = String::new();
    header(&mut out);
    axes(&mut out, &frame, "neuron");
    let half = ((HEIGHT - MARGIN_T - MARGIN_B) / n_neurons as f64 * 0.35).min(6.0);
    for row in rows {
        let color = match row.label.as_str() {
            "E" => "black",
            "I" => "#c62828",
            _ => "#757575",
        };
        let x = frame.x(row.t_ms);
        let y = frame.y(row.neuron_id as f64);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
            y - half,
            y + half
        );
    }
    for &m in markers_ms {
        let x = frame.x(m);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{MARGIN_T}" x2="{x:.2}" y2="{:.2}" stroke="#1565c0" stroke-width="1" stroke-dasharray="6 4"/>"#,
            HEIGHT - MARGIN_B
        );
    }
    out.push_str("</svg>\n");
    out
}
