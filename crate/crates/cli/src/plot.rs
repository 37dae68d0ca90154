//! Minimal SVG rendering of turn-on waveforms.

use std::fmt::Write;

use turnon_core::phases::PhaseTimeline;
use turnon_core::trace::WaveformTrace;

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 180.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 30.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Panel<'a> {
    title: &'a str,
    unit: &'a str,
    series: Vec<(&'a str, Vec<f64>)>,
}

/// Renders gate voltage, drain voltage and drain currents of S1 stacked on a
/// shared time axis, with phase events drawn as dashed vertical lines.
pub fn waveforms_svg(
    trace: &WaveformTrace,
    timeline: Option<&PhaseTimeline>,
    caption: &str,
) -> String {
    let col = |name: &str| trace.column(name).unwrap_or_default();
    let panels = [
        Panel {
            title: "gate voltage",
            unit: "V",
            series: vec![("v_gs_s1", col("v_gs_s1")), ("v_gs_s2", col("v_gs_s2"))],
        },
        Panel {
            title: "drain voltage",
            unit: "V",
            series: vec![("v_ds_s1", col("v_ds_s1")), ("v_ds_s2", col("v_ds_s2"))],
        },
        Panel {
            title: "currents",
            unit: "A",
            series: vec![
                ("i_dc", col("i_dc")),
                ("i_rs1", col("i_rs1")),
                ("i_l", col("i_l")),
            ],
        },
    ];
    let height = MARGIN_T + panels.len() as f64 * (PANEL_H + GAP) + 20.0;
    let (t0, t1) = (trace.t_start(), trace.t_end());
    let x_of = |t: f64| MARGIN_L + (t - t0) / (t1 - t0) * (WIDTH - MARGIN_L - MARGIN_R);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<!-- {} -->", escape(caption));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN_L}" y="20" font-size="13">{}</text>"#,
        escape(caption)
    );

    for (p, panel) in panels.iter().enumerate() {
        let top = MARGIN_T + p as f64 * (PANEL_H + GAP);
        let (lo, hi) = range(panel.series.iter().flat_map(|(_, v)| v.iter().copied()));
        let y_of = |v: f64| top + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_L}" y="{top}" width="{}" height="{PANEL_H}" fill="none" stroke="#888"/>"##,
            WIDTH - MARGIN_L - MARGIN_R
        );
        let _ = writeln!(
            s,
            r#"<text x="5" y="{}">{} ({})</text>"#,
            top + 12.0,
            panel.title,
            panel.unit
        );
        let _ = writeln!(
            s,
            r#"<text x="5" y="{}">{}</text>"#,
            top + 28.0,
            fmt_num(hi)
        );
        let _ = writeln!(
            s,
            r#"<text x="5" y="{}">{}</text>"#,
            top + PANEL_H,
            fmt_num(lo)
        );
        if lo < 0.0 && hi > 0.0 {
            let y = y_of(0.0);
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ccc"/>"##,
                WIDTH - MARGIN_R
            );
        }
        for (j, (name, v)) in panel.series.iter().enumerate() {
            if v.is_empty() {
                continue;
            }
            let color = COLORS[j % COLORS.len()];
            let pts: Vec<String> = trace
                .t
                .iter()
                .zip(v)
                .map(|(&t, &y)| format!("{:.2},{:.2}", x_of(t), y_of(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                pts.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
                WIDTH - MARGIN_R - 60.0,
                top + 14.0 + 13.0 * j as f64
            );
        }
        if let Some(tl) = timeline {
            for e in &tl.events {
                let x = x_of(e.t);
                let _ = writeln!(
                    s,
                    r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{}" stroke="#555" stroke-dasharray="3,3"/>"##,
                    top + PANEL_H
                );
                if p == 0 {
                    let _ = writeln!(
                        s,
                        r#"<text x="{x:.2}" y="{}" font-size="9" transform="rotate(-35 {x:.2} {})">{}</text>"#,
                        top - 3.0,
                        top - 3.0,
                        e.kind
                    );
                }
            }
        }
    }
    let axis_y = MARGIN_T + panels.len() as f64 * (PANEL_H + GAP) - GAP + 15.0;
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN_L}" y="{axis_y}">{} ns</text>"#,
        fmt_num(t0 * 1e9)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{axis_y}" text-anchor="end">{} ns</text>"#,
        WIDTH - MARGIN_R,
        fmt_num(t1 * 1e9)
    );
    s.push_str("</svg>\n");
    s
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace("--", "- -")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_pads_and_handles_empty() {
        assert_eq!(range(std::iter::empty()), (0.0, 1.0));
        let (lo, hi) = range([0.0, 10.0].into_iter());
        assert!(lo < 0.0 && hi > 10.0);
        let (lo, hi) = range([3.0, 3.0].into_iter());
        assert!(hi > lo);
    }

    #[test]
    fn caption_cannot_break_out_of_comment() {
        assert_eq!(escape("a-->b<c"), "a- ->b&lt;c".replace('>', "&gt;"));
    }
}
