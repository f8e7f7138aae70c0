//! Standalone SVG charts for profiles and layer sweeps.
//!
//! Output is a pure function of the input: fixed canvas, fixed ordering,
//! fixed number formatting, no fonts or scripts pulled from outside.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{AxisLabel, GroupComparison, LayerBiasCurve, Profile};

pub const WIDTH: f64 = 900.0;
pub const HEIGHT: f64 = 600.0;

const SERIES_COLORS: [&str; 2] = ["#b2182b", "#2166ac"];
const CURVE_COLORS: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];
const FONT: &str = "font-family=\"sans-serif\"";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartStyle {
    #[default]
    PairedBars,
    Radar,
}

impl std::str::FromStr for ChartStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paired_bars" | "paired-bars" | "bars" => Ok(ChartStyle::PairedBars),
            "radar" => Ok(ChartStyle::Radar),
            other => Err(Error::Validation(format!(
                "unknown chart style `{other}` (expected paired_bars or radar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub color: String,
    /// One per dimension; None where the dimension was excluded.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileChartSpec {
    pub title: String,
    pub axes: Vec<AxisLabel>,
    pub series: [Series; 2],
    pub significant: Vec<bool>,
    pub style: ChartStyle,
    /// Written into the document's `<desc>` as `key=value` lines.
    pub metadata: Vec<(String, String)>,
}

impl ProfileChartSpec {
    pub fn from_comparison(
        comparison: &GroupComparison,
        axes: &[AxisLabel],
        style: ChartStyle,
        title: impl Into<String>,
        metadata: Vec<(String, String)>,
    ) -> Result<Self> {
        if comparison.dimensions.len() != axes.len() {
            return Err(Error::Render(format!(
                "comparison has {} dimensions but {} axis labels were given",
                comparison.dimensions.len(),
                axes.len()
            )));
        }
        let values = |pick: fn(&crate::profile::TestStats) -> f64| {
            comparison
                .dimensions
                .iter()
                .map(|d| d.stats.as_ref().map(pick))
                .collect::<Vec<_>>()
        };
        Ok(ProfileChartSpec {
            title: title.into(),
            axes: axes.to_vec(),
            series: [
                Series {
                    label: comparison.population_a.clone(),
                    color: SERIES_COLORS[0].into(),
                    values: values(|s| s.mean_a),
                },
                Series {
                    label: comparison.population_b.clone(),
                    color: SERIES_COLORS[1].into(),
                    values: values(|s| s.mean_b),
                },
            ],
            significant: comparison.dimensions.iter().map(|d| d.is_significant()).collect(),
            style,
            metadata,
        })
    }

    /// Chart for comparison `index` of a saved profile, titled and annotated
    /// from the profile's provenance.
    pub fn from_profile(profile: &Profile, index: usize, style: ChartStyle) -> Result<Self> {
        let comparison = profile.comparisons.get(index).ok_or_else(|| {
            Error::Render(format!(
                "profile has {} comparisons, index {index} requested",
                profile.comparisons.len()
            ))
        })?;
        let m = &profile.metadata;
        let title = format!(
            "{} vs {} ({}, {})",
            comparison.population_a, comparison.population_b, m.model_label, m.scheme
        );
        let metadata = vec![
            ("model".into(), m.model_label.clone()),
            ("scheme".into(), m.scheme.to_string()),
            ("layers".into(), m.layers.to_string()),
            ("dictionary".into(), m.dictionary_label.clone()),
            ("test".into(), format!("{:?}", comparison.test).to_lowercase()),
            ("alpha".into(), comparison.alpha.to_string()),
            ("tool_version".into(), m.tool_version.clone()),
        ];
        Self::from_comparison(comparison, &profile.axes, style, title, metadata)
    }

    fn validate(&self) -> Result<()> {
        let h = self.axes.len();
        if self.series.iter().any(|s| s.values.len() != h) || self.significant.len() != h {
            return Err(Error::Render("series and markers must have one entry per dimension".into()));
        }
        let usable = (0..h).any(|i| self.series.iter().all(|s| s.values[i].is_some()));
        if !usable {
            return Err(Error::Render("every dimension is excluded; nothing to draw".into()));
        }
        if self.series.iter().flat_map(|s| s.values.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Render("non-finite series value".into()));
        }
        Ok(())
    }

    fn included(&self, i: usize) -> bool {
        self.series.iter().all(|s| s.values[i].is_some())
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Fixed two-decimal formatting with negative zero folded to zero.
fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Smallest multiple of 0.25 (at least 0.5) covering `max_abs`.
fn nice_extent(max_abs: f64) -> f64 {
    ((max_abs / 0.25).ceil() * 0.25).max(0.5)
}

fn open_document(out: &mut String, title: &str, metadata: &[(String, String)]) {
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let desc: Vec<String> = metadata
        .iter()
        .map(|(k, v)| format!("{}={}", escape(k), escape(v)))
        .collect();
    let _ = writeln!(out, "<desc>{}</desc>", desc.join("\n"));
    let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        out,
        "<text class=\"chart-title\" x=\"{}\" y=\"28\" text-anchor=\"middle\" {FONT} font-size=\"16\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
}

fn legend(out: &mut String, entries: &[(&str, &str, Option<&str>)], x: f64, y: f64) {
    let _ = writeln!(out, "<g class=\"legend\">");
    for (i, (label, color, dash)) in entries.iter().enumerate() {
        let ly = y + 18.0 * i as f64;
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            out,
            "<g class=\"legend-entry\"><line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"3\"{dash}/><text x=\"{}\" y=\"{}\" {FONT} font-size=\"12\">{}</text></g>",
            num(x),
            num(ly),
            num(x + 20.0),
            num(ly),
            num(x + 26.0),
            num(ly + 4.0),
            escape(label)
        );
    }
    let _ = writeln!(out, "</g>");
}

/// Renders a two-group profile chart.
pub fn render_profile(spec: &ProfileChartSpec) -> Result<String> {
    spec.validate()?;
    let mut out = String::new();
    open_document(&mut out, &spec.title, &spec.metadata);
    match spec.style {
        ChartStyle::PairedBars => paired_bars(&mut out, spec),
        ChartStyle::Radar => radar(&mut out, spec),
    }
    let entries: Vec<(&str, &str, Option<&str>)> = spec
        .series
        .iter()
        .map(|s| (s.label.as_str(), s.color.as_str(), None))
        .collect();
    legend(&mut out, &entries, 730.0, 60.0);
    let _ = writeln!(
        out,
        "<text class=\"footnote\" x=\"20\" y=\"{}\" {FONT} font-size=\"11\">* significant difference between groups</text>",
        HEIGHT - 12.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}

fn extent(spec: &ProfileChartSpec) -> f64 {
    let max = spec
        .series
        .iter()
        .flat_map(|s| s.values.iter().flatten())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    nice_extent(max)
}

fn paired_bars(out: &mut String, spec: &ProfileChartSpec) {
    let h = spec.axes.len();
    let r = extent(spec);
    let (left, right) = (230.0, 690.0);
    let center = (left + right) / 2.0;
    let half = (right - left) / 2.0;
    let (top, bottom) = (60.0, HEIGHT - 50.0);
    let row = (bottom - top) / h as f64;
    let bar = (row * 0.3).min(22.0);
    let x_of = |v: f64| center + v / r * half;

    let _ = writeln!(
        out,
        "<line class=\"zero\" x1=\"{c}\" y1=\"{}\" x2=\"{c}\" y2=\"{}\" stroke=\"#444444\" stroke-width=\"1\"/>",
        num(top),
        num(bottom),
        c = num(center)
    );
    for (i, axis) in spec.axes.iter().enumerate() {
        let y0 = top + row * i as f64;
        let mid = y0 + row / 2.0;
        let _ = writeln!(out, "<g class=\"dimension\" data-axis=\"{}\">", escape(&axis.name));
        let _ = writeln!(
            out,
            "<line class=\"axis\" x1=\"{}\" y1=\"{m}\" x2=\"{}\" y2=\"{m}\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>",
            num(left),
            num(right),
            m = num(mid)
        );
        let _ = writeln!(
            out,
            "<text class=\"axis-label\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"12\">{} \u{2014} {}</text>",
            num(center),
            num(y0 + 12.0),
            escape(&axis.low_label),
            escape(&axis.high_label)
        );
        let _ = writeln!(
            out,
            "<text class=\"pole-low\" x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT} font-size=\"11\">{}</text>",
            num(left - 8.0),
            num(mid + 4.0),
            escape(&axis.low_label)
        );
        let _ = writeln!(
            out,
            "<text class=\"pole-high\" x=\"{}\" y=\"{}\" {FONT} font-size=\"11\">{}</text>",
            num(right + 8.0),
            num(mid + 4.0),
            escape(&axis.high_label)
        );
        if spec.included(i) {
            for (k, s) in spec.series.iter().enumerate() {
                let v = s.values[i].expect("included dimension");
                let x = x_of(v);
                let (x0, w) = if x >= center { (center, x - center) } else { (x, center - x) };
                let y = if k == 0 { mid - bar } else { mid };
                let _ = writeln!(
                    out,
                    "<rect class=\"bar\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"><title>{}: {}</title></rect>",
                    num(x0),
                    num(y),
                    num(w),
                    num(bar),
                    s.color,
                    escape(&s.label),
                    num(v)
                );
            }
            if spec.significant[i] {
                let _ = writeln!(
                    out,
                    "<text class=\"sig\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"18\">*</text>",
                    num(right + 8.0 + 110.0),
                    num(mid + 6.0)
                );
            }
        } else {
            let _ = writeln!(
                out,
                "<text class=\"excluded\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"11\">excluded</text>",
                num(center),
                num(mid + 4.0)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(
        out,
        "<g class=\"ticks\"><text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"10\">{}</text><text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"10\">0</text><text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"10\">{}</text></g>",
        num(left),
        num(bottom + 16.0),
        num(-r),
        num(center),
        num(bottom + 16.0),
        num(right),
        num(bottom + 16.0),
        num(r)
    );
}

fn radar(out: &mut String, spec: &ProfileChartSpec) {
    let h = spec.axes.len();
    let r = extent(spec);
    let (cx, cy, radius) = (420.0, 320.0, 200.0);
    // the centre is −r, the outer ring +r
    let rad = |v: f64| (v + r) / (2.0 * r) * radius;
    let angle = |i: usize| -std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * i as f64 / h as f64;
    let at = |i: usize, dist: f64| (cx + dist * angle(i).cos(), cy + dist * angle(i).sin());

    let zero: Vec<String> = (0..h)
        .map(|i| {
            let (x, y) = at(i, rad(0.0));
            format!("{},{}", num(x), num(y))
        })
        .collect();
    let _ = writeln!(
        out,
        "<polygon class=\"zero\" points=\"{}\" fill=\"none\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>",
        zero.join(" ")
    );
    for (i, axis) in spec.axes.iter().enumerate() {
        let (x1, y1) = at(i, radius);
        let (lx, ly) = at(i, radius + 28.0);
        let (ix, iy) = at(i, 14.0);
        let _ = writeln!(out, "<g class=\"dimension\" data-axis=\"{}\">", escape(&axis.name));
        let _ = writeln!(
            out,
            "<line class=\"axis\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>",
            num(cx),
            num(cy),
            num(x1),
            num(y1)
        );
        let _ = writeln!(
            out,
            "<text class=\"axis-label\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"12\">{} \u{2014} {}</text>",
            num(lx),
            num(ly),
            escape(&axis.low_label),
            escape(&axis.high_label)
        );
        let _ = writeln!(
            out,
            "<text class=\"pole-low\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"9\">{}</text>",
            num(ix),
            num(iy),
            escape(&axis.low_label)
        );
        let _ = writeln!(
            out,
            "<text class=\"pole-high\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"10\">{}</text>",
            num(lx),
            num(ly + 14.0),
            escape(&axis.high_label)
        );
        if !spec.included(i) {
            let _ = writeln!(
                out,
                "<text class=\"excluded\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"10\">excluded</text>",
                num(lx),
                num(ly + 28.0)
            );
        } else if spec.significant[i] {
            let _ = writeln!(
                out,
                "<text class=\"sig\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"18\">*</text>",
                num(lx),
                num(ly - 14.0)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    for s in &spec.series {
        // excluded dimensions sit at zero so the outline stays closed
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (x, y) = at(i, rad(v.unwrap_or(0.0)));
                format!("{},{}", num(x), num(y))
            })
            .collect();
        let _ = writeln!(
            out,
            "<polygon class=\"series\" points=\"{}\" fill=\"{c}\" fill-opacity=\"0.15\" stroke=\"{c}\" stroke-width=\"2\"><title>{}</title></polygon>",
            points.join(" "),
            escape(&s.label),
            c = s.color
        );
    }
}

/// Geometry of a layer chart, exposed so callers can locate points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFrame {
    pub first_layer: usize,
    pub last_layer: usize,
    pub extent: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl CurveFrame {
    pub fn x(&self, layer: f64) -> f64 {
        let span = (self.last_layer - self.first_layer) as f64;
        self.left + (layer - self.first_layer as f64) / span * (self.right - self.left)
    }

    pub fn y(&self, value: f64) -> f64 {
        let mid = (self.top + self.bottom) / 2.0;
        mid - value / self.extent * (self.bottom - self.top) / 2.0
    }

    pub fn from_curves(curves: &[LayerBiasCurve]) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::Render("no curves to draw".into()));
        }
        let layers = curves.iter().flat_map(|c| c.points.iter().map(|p| p.layer));
        let (first, last) = layers.fold((usize::MAX, 0), |(lo, hi), l| (lo.min(l), hi.max(l)));
        if first == usize::MAX || last == first {
            return Err(Error::Render("a layer chart needs at least two layers".into()));
        }
        let values = curves.iter().flat_map(|c| c.points.iter().filter_map(|p| p.value));
        let mut max = 0.0f64;
        for v in values {
            if !v.is_finite() {
                return Err(Error::Render("non-finite layer value".into()));
            }
            max = max.max(v.abs());
        }
        Ok(CurveFrame {
            first_layer: first,
            last_layer: last,
            extent: nice_extent(max),
            left: 80.0,
            right: 680.0,
            top: 60.0,
            bottom: HEIGHT - 70.0,
        })
    }
}

/// One polyline per curve over layer index, with a zero line and legend.
/// Missing points are skipped.
pub fn render_layer_curves(
    curves: &[LayerBiasCurve],
    title: &str,
    metadata: &[(String, String)],
) -> Result<String> {
    let frame = CurveFrame::from_curves(curves)?;
    let mut out = String::new();
    open_document(&mut out, title, metadata);

    let _ = writeln!(out, "<g class=\"frame\">");
    let _ = writeln!(
        out,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#cccccc\"/>",
        num(frame.left),
        num(frame.top),
        num(frame.right - frame.left),
        num(frame.bottom - frame.top)
    );
    for layer in frame.first_layer..=frame.last_layer {
        let x = frame.x(layer as f64);
        let _ = writeln!(
            out,
            "<g class=\"tick\"><line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#cccccc\"/><text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"10\">{layer}</text></g>",
            num(frame.bottom),
            num(frame.bottom + 5.0),
            num(frame.bottom + 18.0),
            x = num(x)
        );
    }
    for v in [-frame.extent, frame.extent] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT} font-size=\"10\">{}</text>",
            num(frame.left - 6.0),
            num(frame.y(v) + 4.0),
            num(v)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"12\">layer</text>",
        num((frame.left + frame.right) / 2.0),
        num(frame.bottom + 38.0)
    );
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        "<line class=\"zero\" x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#444444\" stroke-width=\"1\"/>",
        num(frame.left),
        num(frame.right),
        y = num(frame.y(0.0))
    );

    let mut entries = Vec::with_capacity(curves.len());
    let labels: Vec<String> = curves
        .iter()
        .map(|c| format!("{}: {}", c.dimension, c.comparison))
        .collect();
    for (i, curve) in curves.iter().enumerate() {
        let color = CURVE_COLORS[i % CURVE_COLORS.len()];
        let dash = match (i / CURVE_COLORS.len()) % 3 {
            0 => None,
            1 => Some("6 3"),
            _ => Some("2 2"),
        };
        let points: Vec<String> = curve
            .points
            .iter()
            .filter_map(|p| p.value.map(|v| format!("{},{}", num(frame.x(p.layer as f64)), num(frame.y(v)))))
            .collect();
        let dash_attr = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            out,
            "<polyline class=\"curve\" data-dimension=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash_attr}/>",
            escape(&curve.dimension),
            points.join(" ")
        );
        entries.push((labels[i].as_str(), color, dash));
    }
    legend(&mut out, &entries, 700.0, 70.0);
    out.push_str("</svg>\n");
    Ok(out)
}
