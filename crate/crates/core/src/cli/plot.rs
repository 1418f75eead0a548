//! Deterministic SVG line plots of trace metrics.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::RunTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Gap,
    Bregman,
    PrimalError,
    Psnr,
    MpDistance,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [PlotKind::Bregman, PlotKind::Gap, PlotKind::PrimalError, PlotKind::Psnr, PlotKind::MpDistance];

    /// Trace column plotted for this kind.
    pub fn column(self) -> &'static str {
        match self {
            PlotKind::Gap => "gap",
            PlotKind::Bregman => "bregman",
            PlotKind::PrimalError => "primal_err_rel",
            PlotKind::Psnr => "psnr",
            PlotKind::MpDistance => "mp_dist",
        }
    }

    pub fn parse(s: &str) -> Option<PlotKind> {
        PlotKind::ALL.into_iter().find(|k| k.column() == s || k.slug() == s)
    }

    pub fn slug(self) -> &'static str {
        match self {
            PlotKind::Gap => "gap",
            PlotKind::Bregman => "bregman",
            PlotKind::PrimalError => "primal_error",
            PlotKind::Psnr => "psnr",
            PlotKind::MpDistance => "mp_distance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotScale {
    /// Logarithmic epoch and value axes.
    #[default]
    Loglog,
    /// Linear epoch axis, logarithmic value axis.
    Semilog,
}

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 420.0;
/// Plot area `[left, right] x [top, bottom]` in pixels.
pub const AREA: [f64; 4] = [70.0, 610.0, 20.0, 340.0];

const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Plotted coordinates of one trace: `(epoch, value)` mapped through the
/// axis transforms, non-finite and nonpositive points dropped.
fn points(t: &RunTrace, column: &str, scale: PlotScale) -> Vec<(f64, f64)> {
    t.records
        .iter()
        .filter_map(|r| {
            let v = r.metric(column)?;
            let x = match scale {
                PlotScale::Loglog => r.epoch.log10(),
                PlotScale::Semilog => r.epoch,
            };
            let y = v.log10();
            (x.is_finite() && y.is_finite()).then_some((x, y))
        })
        .collect()
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
        if b - a <= 12 {
            return (a..=b).map(|v| v as f64).collect();
        }
    }
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        if (v - v.round()).abs() < 1e-9 {
            format!("1e{}", v.round() as i64)
        } else {
            format!("{:.2e}", 10f64.powf(v))
        }
    } else {
        format!("{v:.4}")
    }
}

/// One polyline per trace in input order; the axis ranges (after the log
/// transform) are recorded as `data-x-range` and `data-y-range`.
pub fn emit_plot(traces: &[RunTrace], kind: PlotKind, scale: PlotScale) -> Result<String> {
    if traces.is_empty() {
        return Err(invalid("nothing to plot"));
    }
    let col = kind.column();
    let pts: Vec<Vec<(f64, f64)>> = traces.iter().map(|t| points(t, col, scale)).collect();
    if let Some(t) = traces.iter().zip(&pts).find(|(_, p)| p.is_empty()) {
        return Err(invalid(format!("trace `{}` has no finite {col} values", t.0.label)));
    }
    let (x0, x1) = range(pts.iter().flatten().map(|p| p.0));
    let (y0, y1) = range(pts.iter().flatten().map(|p| p.1));
    let [l, r, top, bot] = AREA;
    let px = |x: f64| l + (x - x0) / (x1 - x0) * (r - l);
    let py = |y: f64| bot - (y - y0) / (y1 - y0) * (bot - top);
    let xlog = scale == PlotScale::Loglog;

    let mut s = String::new();
    let w = &mut s;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-metric="{col}" data-scale="{}" data-x-range="{x0:.12e} {x1:.12e}" data-y-range="{y0:.12e} {y1:.12e}">"#,
        if xlog { "loglog" } else { "semilog" }
    )
    .unwrap();
    writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(w, r#"<g id="axes" stroke="black" stroke-width="1" fill="none">"#).unwrap();
    writeln!(w, r#"<path d="M{l} {top} L{l} {bot} L{r} {bot}"/>"#).unwrap();
    for t in ticks(x0, x1, xlog) {
        writeln!(w, r#"<path d="M{:.3} {bot} L{:.3} {:.3}"/>"#, px(t), px(t), bot + 5.0).unwrap();
    }
    for t in ticks(y0, y1, true) {
        writeln!(w, r#"<path d="M{:.3} {:.3} L{l} {:.3}"/>"#, l - 5.0, py(t), py(t)).unwrap();
    }
    writeln!(w, "</g>").unwrap();
    writeln!(w, r#"<g id="labels" font-family="monospace" font-size="10" fill="black">"#).unwrap();
    for t in ticks(x0, x1, xlog) {
        writeln!(w, r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#, px(t), bot + 16.0, tick_label(t, xlog)).unwrap();
    }
    for t in ticks(y0, y1, true) {
        writeln!(w, r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{}</text>"#, l - 8.0, py(t) + 3.0, tick_label(t, true)).unwrap();
    }
    writeln!(w, r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">epoch</text>"#, 0.5 * (l + r), bot + 32.0).unwrap();
    writeln!(w, r#"<text x="12" y="{:.3}" text-anchor="middle" transform="rotate(-90 12 {:.3})">{col}</text>"#, 0.5 * (top + bot), 0.5 * (top + bot)).unwrap();
    writeln!(w, "</g>").unwrap();
    writeln!(w, r#"<g id="series" fill="none" stroke-width="1.5">"#).unwrap();
    for (i, (t, p)) in traces.iter().zip(&pts).enumerate() {
        let coords: Vec<String> = p.iter().map(|(x, y)| format!("{:.3},{:.3}", px(*x), py(*y))).collect();
        writeln!(w, r#"<polyline data-label="{}" stroke="{}" points="{}"/>"#, escape(&t.label), COLORS[i % COLORS.len()], coords.join(" ")).unwrap();
    }
    writeln!(w, "</g>").unwrap();
    writeln!(w, r#"<g id="legend" font-family="monospace" font-size="10">"#).unwrap();
    for (i, t) in traces.iter().enumerate() {
        let y = HEIGHT - 40.0 + 12.0 * (i % 3) as f64;
        let x = l + 180.0 * (i / 3) as f64;
        let c = COLORS[i % COLORS.len()];
        writeln!(w, r#"<path d="M{x} {y} L{} {y}" stroke="{c}" stroke-width="2"/>"#, x + 20.0).unwrap();
        writeln!(w, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 3.0, escape(&t.label)).unwrap();
    }
    writeln!(w, "</g>").unwrap();
    writeln!(w, "</svg>").unwrap();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::TraceRecord;

    fn trace(label: &str, f: impl Fn(f64) -> f64) -> RunTrace {
        let mut t = RunTrace::new(label, 0);
        for k in 0..=100u64 {
            let e = k as f64;
            let v = if k == 0 { f64::INFINITY } else { f(e) };
            t.push(TraceRecord { k, epoch: e, bregman: Some(v), gap: None, primal: None, primal_err_rel: None, psnr: None, mp_dist: None, wall_ms: 0.0 })
                .unwrap();
        }
        t
    }

    fn attr<'a>(svg: &'a str, name: &str) -> Vec<&'a str> {
        let key = format!("{name}=\"");
        svg.match_indices(&key)
            .map(|(i, _)| {
                let rest = &svg[i + key.len()..];
                &rest[..rest.find('"').unwrap()]
            })
            .collect()
    }

    #[test]
    fn power_law_is_a_straight_line() {
        let svg = emit_plot(&[trace("a", |k| 3.0 / k)], PlotKind::Bregman, PlotScale::Loglog).unwrap();
        let xr: Vec<f64> = attr(&svg, "data-x-range")[0].split(' ').map(|v| v.parse().unwrap()).collect();
        let yr: Vec<f64> = attr(&svg, "data-y-range")[0].split(' ').map(|v| v.parse().unwrap()).collect();
        let [l, r, top, bot] = AREA;
        let pts: Vec<(f64, f64)> = attr(&svg, "points")[0]
            .split(' ')
            .map(|p| {
                let (a, b) = p.split_once(',').unwrap();
                let (px, py): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
                (xr[0] + (px - l) / (r - l) * (xr[1] - xr[0]), yr[0] + (bot - py) / (bot - top) * (yr[1] - yr[0]))
            })
            .collect();
        assert_eq!(pts.len(), 100);
        for w in pts.windows(2) {
            let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            assert!((slope + 1.0).abs() <= 0.2, "{slope}");
        }
        let (a, b) = (pts[0], pts[99]);
        assert!(((b.1 - a.1) / (b.0 - a.0) + 1.0).abs() <= 1e-3);
    }

    #[test]
    fn empty_and_infinite_traces_fail() {
        assert!(emit_plot(&[], PlotKind::Gap, PlotScale::Loglog).is_err());
        let t = trace("inf", |_| f64::INFINITY);
        assert!(emit_plot(&[t], PlotKind::Bregman, PlotScale::Loglog).is_err());
        let t = trace("a", |k| 1.0 / k);
        assert!(emit_plot(&[t], PlotKind::Gap, PlotScale::Loglog).is_err());
    }

    #[test]
    fn two_traces_in_order_and_deterministic() {
        let ts = [trace("first", |k| 1.0 / k), trace("second", |k| 1.0 / (k * k))];
        let a = emit_plot(&ts, PlotKind::Bregman, PlotScale::Semilog).unwrap();
        let b = emit_plot(&ts, PlotKind::Bregman, PlotScale::Semilog).unwrap();
        assert_eq!(a, b);
        assert_eq!(attr(&a, "data-label"), vec!["first", "second"]);
        assert_eq!(a.matches("<polyline").count(), 2);
    }
}
