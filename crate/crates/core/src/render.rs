//! Standalone SVG figures: choropleth and hexbin maps, facets, bar/line
//! series and correlation heatmaps.
//!
//! Output is SVG 1.1 with no scripts or external fonts. Every number goes
//! through [`fmt_num`] (six significant digits) so identical inputs produce
//! byte-identical documents.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregate::RateTable;
use crate::cartogram::{hex_center, HexLayout};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point};
use crate::ingest::RegionGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const fn hex(code: u32) -> Rgb {
        Rgb((code >> 16) as u8, (code >> 8) as u8, code as u8)
    }

    fn lerp(self, other: Rgb, t: f64) -> Rgb {
        let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round().clamp(0.0, 255.0) as u8;
        Rgb(mix(self.0, other.0), mix(self.1, other.1), mix(self.2, other.2))
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }
}

/// ColorBrewer RdYlBu, 11 classes, reversed: low values blue, high values red.
pub const RDYLBU_REVERSED: [Rgb; 11] = [
    Rgb::hex(0x313695),
    Rgb::hex(0x4575b4),
    Rgb::hex(0x74add1),
    Rgb::hex(0xabd9e9),
    Rgb::hex(0xe0f3f8),
    Rgb::hex(0xffffbf),
    Rgb::hex(0xfee090),
    Rgb::hex(0xfdae61),
    Rgb::hex(0xf46d43),
    Rgb::hex(0xd73027),
    Rgb::hex(0xa50026),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classing {
    Continuous,
    /// `k` equal-count classes.
    Quantile(usize),
}

impl std::str::FromStr for Classing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "continuous" {
            return Ok(Classing::Continuous);
        }
        let k = s
            .strip_prefix("quantile")
            .map(|rest| rest.trim_start_matches(['(', ':', '-']).trim_end_matches(')'))
            .ok_or_else(|| Error::Config(format!("unknown classing {s:?}")))?;
        let k = if k.is_empty() { 7 } else {
            k.parse().map_err(|_| Error::Config(format!("bad quantile count in {s:?}")))?
        };
        if k < 1 {
            return Err(Error::Config("quantile needs at least one class".into()));
        }
        Ok(Classing::Quantile(k))
    }
}

/// Value → color mapping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColorScale {
    pub stops: Vec<Rgb>,
    pub classing: Classing,
    pub min: f64,
    pub max: f64,
    /// Upper-inclusive class limits for quantile classing; empty otherwise.
    pub breaks: Vec<f64>,
}

impl ColorScale {
    /// Position on the palette in `[0, 1]`.
    pub fn param(&self, v: f64) -> f64 {
        match self.classing {
            Classing::Continuous => {
                if self.max > self.min {
                    ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            }
            Classing::Quantile(_) => {
                let classes = self.breaks.len() + 1;
                if classes == 1 {
                    return 0.5;
                }
                self.class_of(v) as f64 / (classes - 1) as f64
            }
        }
    }

    /// Quantile class index; values equal to a break stay in the lower class.
    pub fn class_of(&self, v: f64) -> usize {
        self.breaks.iter().filter(|b| v > **b).count()
    }

    pub fn color(&self, v: f64) -> Rgb {
        sample(&self.stops, self.param(v))
    }
}

fn sample(stops: &[Rgb], t: f64) -> Rgb {
    let last = stops.len() - 1;
    let x = t.clamp(0.0, 1.0) * last as f64;
    let i = (x.floor() as usize).min(last - 1);
    stops[i].lerp(stops[i + 1], x - i as f64)
}

pub fn build_scale(values: &[f64], classing: Classing, palette: &[Rgb]) -> Result<ColorScale> {
    if palette.len() < 2 {
        return Err(Error::Contract("a palette needs at least two stops".into()));
    }
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Contract("color scale needs at least one finite value".into()));
    }
    finite.sort_by(f64::total_cmp);
    let (min, max) = (finite[0], finite[finite.len() - 1]);
    let breaks = match classing {
        Classing::Continuous => Vec::new(),
        Classing::Quantile(k) => {
            if k == 0 {
                return Err(Error::Contract("quantile needs at least one class".into()));
            }
            let n = finite.len();
            let mut b: Vec<f64> = Vec::new();
            for i in 1..k {
                // nearest rank: ceil(i·n/k), 1-based
                let rank = (i * n).div_ceil(k).max(1);
                let v = finite[rank - 1];
                if v < max && b.last().is_none_or(|last| v > *last) {
                    b.push(v);
                }
            }
            b
        }
    };
    Ok(ColorScale {
        stops: palette.to_vec(),
        classing,
        min,
        max,
        breaks,
    })
}

/// Formats to six significant digits without exponent or trailing zeros.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return "0".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    let rounded: f64 = sci.parse().unwrap_or(x);
    let decimals = (5 - exp).max(0) as usize;
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LegendPlacement {
    Right,
    Bottom,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapStyle {
    pub width: f64,
    pub height: f64,
    pub title: Option<String>,
    pub stroke: String,
    pub stroke_width: f64,
    pub missing_fill: String,
    pub background: String,
    pub legend: LegendPlacement,
    pub font_size: f64,
}

impl Default for MapStyle {
    fn default() -> Self {
        MapStyle {
            width: 800.0,
            height: 600.0,
            title: None,
            stroke: "#ffffff".into(),
            stroke_width: 0.8,
            missing_fill: "#d9d9d9".into(),
            background: "#ffffff".into(),
            legend: LegendPlacement::Right,
            font_size: 12.0,
        }
    }
}

impl MapStyle {
    pub fn titled(title: impl Into<String>) -> Self {
        MapStyle {
            title: Some(title.into()),
            ..Self::default()
        }
    }
}

const MARGIN: f64 = 16.0;
const LEGEND_W: f64 = 110.0;
const LEGEND_H: f64 = 56.0;

/// A rendered figure: its size and the markup inside the root `<svg>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Svg {
    pub width: String,
    pub height: String,
    pub body: String,
}

impl Svg {
    fn new(width: f64, height: f64, body: String) -> Self {
        Svg {
            width: fmt_num(width),
            height: fmt_num(height),
            body,
        }
    }

    pub fn document(&self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }

    /// The figure as a nested `<svg>` element placed at `(x, y)`.
    fn nested(&self, x: f64, y: f64) -> String {
        format!(
            "<svg x=\"{}\" y=\"{}\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{}</svg>\n",
            fmt_num(x),
            fmt_num(y),
            self.body,
            w = self.width,
            h = self.height
        )
    }

    fn width_f(&self) -> f64 {
        self.width.parse().unwrap_or(0.0)
    }

    fn height_f(&self) -> f64 {
        self.height.parse().unwrap_or(0.0)
    }
}

impl fmt::Display for Svg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.document())
    }
}

/// Background, title and the plot rectangle left for content.
fn frame(style: &MapStyle, body: &mut String) -> (f64, f64, f64, f64) {
    let _ = writeln!(
        body,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
        fmt_num(style.width),
        fmt_num(style.height),
        style.background
    );
    let mut top = MARGIN;
    if let Some(title) = &style.title {
        let size = style.font_size * 1.4;
        let _ = writeln!(
            body,
            "<text class=\"title\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{}\" text-anchor=\"middle\">{}</text>",
            fmt_num(style.width / 2.0),
            fmt_num(MARGIN + size),
            fmt_num(size),
            escape(title)
        );
        top += size + 8.0;
    }
    let mut w = style.width - 2.0 * MARGIN;
    let mut h = style.height - top - MARGIN;
    match style.legend {
        LegendPlacement::Right => w -= LEGEND_W,
        LegendPlacement::Bottom => h -= LEGEND_H,
        LegendPlacement::None => {}
    }
    (MARGIN, top, w.max(1.0), h.max(1.0))
}

fn legend(scale: &ColorScale, style: &MapStyle, body: &mut String) {
    let (x0, y0, horizontal) = match style.legend {
        LegendPlacement::None => return,
        LegendPlacement::Right => (style.width - MARGIN - LEGEND_W + 12.0, style.height / 2.0 - 90.0, false),
        LegendPlacement::Bottom => (style.width / 2.0 - 110.0, style.height - MARGIN - LEGEND_H + 8.0, true),
    };
    let swatches: Vec<(Rgb, String)> = match scale.classing {
        Classing::Continuous => {
            let n = scale.stops.len();
            (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    let label = if i == 0 {
                        fmt_num(scale.min)
                    } else if i == n - 1 {
                        fmt_num(scale.max)
                    } else {
                        String::new()
                    };
                    (sample(&scale.stops, t), label)
                })
                .collect()
        }
        Classing::Quantile(_) => {
            let k = scale.breaks.len() + 1;
            (0..k)
                .map(|c| {
                    let t = if k == 1 { 0.5 } else { c as f64 / (k - 1) as f64 };
                    let hi = scale.breaks.get(c).copied().unwrap_or(scale.max);
                    (sample(&scale.stops, t), format!("\u{2264} {}", fmt_num(hi)))
                })
                .collect()
        }
    };
    let font = style.font_size * 0.85;
    let _ = writeln!(body, "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"{}\">", fmt_num(font));
    let (sw, sh) = if horizontal { (20.0, 12.0) } else { (16.0, 16.0) };
    for (i, (color, label)) in swatches.iter().enumerate() {
        let (x, y) = if horizontal {
            (x0 + i as f64 * sw, y0)
        } else {
            (x0, y0 + i as f64 * sh)
        };
        let _ = writeln!(
            body,
            "<rect class=\"swatch\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\"/>",
            fmt_num(x),
            fmt_num(y),
            fmt_num(sw),
            fmt_num(sh)
        );
        if !label.is_empty() {
            let (tx, ty, anchor) = if horizontal {
                (x + sw / 2.0, y + sh + font + 2.0, "middle")
            } else {
                (x + sw + 6.0, y + sh / 2.0 + font / 3.0, "start")
            };
            let _ = writeln!(
                body,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
                fmt_num(tx),
                fmt_num(ty),
                escape(label)
            );
        }
    }
    body.push_str("</g>\n");
}

/// Maps geographic coordinates into a plot rectangle, north up.
struct Projection {
    scale: f64,
    ox: f64,
    oy: f64,
    min: Point,
    max_y: f64,
}

impl Projection {
    fn fit(b: &BoundingBox, x: f64, y: f64, w: f64, h: f64) -> Self {
        let bw = b.width().max(f64::EPSILON);
        let bh = b.height().max(f64::EPSILON);
        let scale = (w / bw).min(h / bh);
        Projection {
            scale,
            ox: x + (w - bw * scale) / 2.0,
            oy: y + (h - bh * scale) / 2.0,
            min: b.min,
            max_y: b.max.y,
        }
    }

    fn apply(&self, p: Point) -> (f64, f64) {
        (
            self.ox + (p.x - self.min.x) * self.scale,
            self.oy + (self.max_y - p.y) * self.scale,
        )
    }
}

fn check_rates_known(rates: &RateTable, known: impl Fn(&str) -> bool) -> Result<()> {
    for code in rates.values.keys() {
        if !known(code) {
            return Err(Error::UnknownRegion(format!(
                "{code} has a value but no geometry or hex"
            )));
        }
    }
    Ok(())
}

pub fn render_choropleth(
    geoms: &[RegionGeometry],
    rates: &RateTable,
    scale: &ColorScale,
    style: &MapStyle,
) -> Result<Svg> {
    check_rates_known(rates, |c| geoms.iter().any(|g| g.region_code == c))?;
    let mut body = String::new();
    let (x, y, w, h) = frame(style, &mut body);
    let extent = geoms
        .iter()
        .map(|g| g.bbox())
        .fold(BoundingBox::empty(), |a, b| a.union(&b));
    if !extent.is_empty() {
        let proj = Projection::fit(&extent, x, y, w, h);
        body.push_str("<g class=\"regions\">\n");
        for g in geoms {
            let value = rates.values.get(&g.region_code);
            let fill = value.map_or_else(|| style.missing_fill.clone(), |v| scale.color(*v).to_string());
            let mut d = String::new();
            for ring in g.polygons.iter().flat_map(|p| p.rings()) {
                for (i, p) in ring[..ring.len() - 1].iter().enumerate() {
                    let (px, py) = proj.apply(*p);
                    let _ = write!(d, "{}{},{}", if i == 0 { "M" } else { "L" }, fmt_num(px), fmt_num(py));
                }
                d.push('Z');
            }
            let _ = writeln!(
                body,
                "<g class=\"region\" data-region=\"{}\"{}><title>{}</title><path d=\"{d}\" fill=\"{fill}\" fill-rule=\"evenodd\" stroke=\"{}\" stroke-width=\"{}\"/></g>",
                escape(&g.region_code),
                value.map_or(String::new(), |v| format!(" data-value=\"{}\"", fmt_num(*v))),
                escape(&g.name),
                style.stroke,
                fmt_num(style.stroke_width)
            );
        }
        body.push_str("</g>\n");
    }
    legend(scale, style, &mut body);
    Ok(Svg::new(style.width, style.height, body))
}

/// Vertex offsets of a pointy-top hexagon with circumradius `size`.
fn hexagon_points(size: f64) -> String {
    (0..6)
        .map(|k| {
            let a = (30.0 + 60.0 * k as f64).to_radians();
            format!("{},{}", fmt_num(size * a.cos()), fmt_num(size * a.sin()))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// One hexagon per region. All hexagons share a single vertex list and are
/// placed by translation, so they are congruent in the output.
pub fn render_hexbin(
    layout: &HexLayout,
    rates: &RateTable,
    scale: &ColorScale,
    style: &MapStyle,
    labels: &BTreeMap<String, String>,
) -> Result<Svg> {
    check_rates_known(rates, |c| layout.get(c).is_some())?;
    let mut body = String::new();
    let (x, y, w, h) = frame(style, &mut body);
    if !layout.is_empty() {
        // unit-size centers; extent padded by the hex's half-width / radius
        let centers: Vec<(&str, (f64, f64))> = layout.iter().map(|(c, a)| (c, hex_center(a, 1.0))).collect();
        let mut b = BoundingBox::empty();
        for (_, (cx, cy)) in &centers {
            b.extend(Point::new(cx - 0.866_025_403_784_438_6, cy - 1.0));
            b.extend(Point::new(cx + 0.866_025_403_784_438_6, cy + 1.0));
        }
        let px = (w / b.width()).min(h / b.height());
        let ox = x + (w - b.width() * px) / 2.0 - b.min.x * px;
        let oy = y + (h - b.height() * px) / 2.0 - b.min.y * px;
        let points = hexagon_points(px * 0.96);
        let font = (px * 0.55).min(style.font_size);
        body.push_str("<g class=\"regions\">\n");
        for (code, (cx, cy)) in centers {
            let value = rates.values.get(code);
            let fill = value.map_or_else(|| style.missing_fill.clone(), |v| scale.color(*v).to_string());
            let (tx, ty) = (fmt_num(ox + cx * px), fmt_num(oy + cy * px));
            let _ = write!(
                body,
                "<g class=\"region\" data-region=\"{}\"{}><polygon class=\"hex\" transform=\"translate({tx},{ty})\" points=\"{points}\" fill=\"{fill}\" stroke=\"{}\" stroke-width=\"{}\"/>",
                escape(code),
                value.map_or(String::new(), |v| format!(" data-value=\"{}\"", fmt_num(*v))),
                style.stroke,
                fmt_num(style.stroke_width)
            );
            if let Some(label) = labels.get(code) {
                let _ = write!(
                    body,
                    "<text x=\"{tx}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{}\" text-anchor=\"middle\">{}</text>",
                    fmt_num(oy + cy * px + font / 3.0),
                    fmt_num(font),
                    escape(label)
                );
            }
            body.push_str("</g>\n");
        }
        body.push_str("</g>\n");
    }
    legend(scale, style, &mut body);
    Ok(Svg::new(style.width, style.height, body))
}

/// Anything a facet panel can show.
pub enum MapSpec<'a> {
    Choropleth {
        geoms: &'a [RegionGeometry],
        rates: RateTable,
        scale: ColorScale,
        style: MapStyle,
    },
    Hexbin {
        layout: &'a HexLayout,
        rates: RateTable,
        scale: ColorScale,
        style: MapStyle,
        labels: &'a BTreeMap<String, String>,
    },
    Prerendered(Svg),
}

impl MapSpec<'_> {
    pub fn render(&self) -> Result<Svg> {
        match self {
            MapSpec::Choropleth { geoms, rates, scale, style } => render_choropleth(geoms, rates, scale, style),
            MapSpec::Hexbin { layout, rates, scale, style, labels } => {
                render_hexbin(layout, rates, scale, style, labels)
            }
            MapSpec::Prerendered(svg) => Ok(svg.clone()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FacetStyle {
    pub title: Option<String>,
    /// Defaults to `min(n, 4)` columns.
    pub columns: Option<usize>,
    /// One legend for the whole figure instead of (or besides) panel legends.
    pub shared_legend: Option<ColorScale>,
}

/// Renders panels (in parallel) and lays them out on a grid, row-major in the
/// given order.
pub fn render_facets(panels: &[(String, MapSpec<'_>)], style: &FacetStyle) -> Result<Svg> {
    let rendered: Vec<(String, Svg)> = panels
        .par_iter()
        .map(|(title, spec)| spec.render().map(|svg| (title.clone(), svg)))
        .collect::<Result<_>>()?;
    compose_facets(&rendered, style)
}

pub fn compose_facets(panels: &[(String, Svg)], style: &FacetStyle) -> Result<Svg> {
    if panels.is_empty() {
        return Err(Error::Contract("a facet figure needs at least one panel".into()));
    }
    let n = panels.len();
    let cols = style.columns.unwrap_or(n.min(4)).clamp(1, n);
    let rows = n.div_ceil(cols);
    let cell_w = panels.iter().map(|(_, s)| s.width_f()).fold(0.0, f64::max);
    let panel_title = 20.0;
    let cell_h = panels.iter().map(|(_, s)| s.height_f()).fold(0.0, f64::max) + panel_title;
    let top = if style.title.is_some() { 36.0 } else { 0.0 };
    let legend_band = if style.shared_legend.is_some() { LEGEND_H + MARGIN } else { 0.0 };
    let width = cols as f64 * cell_w;
    let height = top + rows as f64 * cell_h + legend_band;

    let mut body = String::new();
    let _ = writeln!(
        body,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>",
        fmt_num(width),
        fmt_num(height)
    );
    if let Some(title) = &style.title {
        let _ = writeln!(
            body,
            "<text class=\"title\" x=\"{}\" y=\"26\" font-family=\"sans-serif\" font-size=\"20\" text-anchor=\"middle\">{}</text>",
            fmt_num(width / 2.0),
            escape(title)
        );
    }
    for (i, (title, svg)) in panels.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        let x = c as f64 * cell_w;
        let y = top + r as f64 * cell_h;
        let _ = writeln!(body, "<g class=\"panel\" data-panel=\"{i}\">");
        let _ = writeln!(
            body,
            "<text class=\"panel-title\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
            fmt_num(x + cell_w / 2.0),
            fmt_num(y + 15.0),
            escape(title)
        );
        body.push_str(&svg.nested(x, y + panel_title));
        body.push_str("</g>\n");
    }
    if let Some(scale) = &style.shared_legend {
        let ls = MapStyle {
            width,
            height,
            legend: LegendPlacement::Bottom,
            ..MapStyle::default()
        };
        legend(scale, &ls, &mut body);
    }
    Ok(Svg::new(width, height, body))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Bar,
    Line,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    /// (category or date label, value)
    pub points: Vec<(String, f64)>,
}

/// Rounds up to 1, 2, 2.5 or 5 times a power of ten.
fn nice_ceil(v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * p)
        .find(|c| *c >= v)
        .unwrap_or(10.0 * p)
}

/// Category series colors, sampled from the diverging palette's ends inward.
const SERIES_COLORS: [Rgb; 4] = [Rgb::hex(0x4575b4), Rgb::hex(0xd73027), Rgb::hex(0xfdae61), Rgb::hex(0x74add1)];

/// Bar or line chart with min/max ticks on the y axis.
pub fn render_series(series: &[Series], kind: SeriesKind, style: &MapStyle) -> Result<Svg> {
    let n_points = series.iter().map(|s| s.points.len()).max().unwrap_or(0);
    if n_points == 0 {
        return Err(Error::Contract("a series figure needs at least one point".into()));
    }
    let values = || series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(|v| v.is_finite());
    let ymin = values().fold(0.0, f64::min);
    let ymax_data = values().fold(f64::NEG_INFINITY, f64::max);
    let mut ymax = nice_ceil(ymax_data);
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }

    let mut body = String::new();
    let style = MapStyle {
        legend: LegendPlacement::None,
        ..style.clone()
    };
    let (x0, y0, w0, h0) = frame(&style, &mut body);
    let axis_left = 56.0;
    let axis_bottom = if kind == SeriesKind::Bar { 90.0 } else { 30.0 };
    let legend_right = if series.len() > 1 { 110.0 } else { 0.0 };
    let (px, py, pw, ph) = (x0 + axis_left, y0, w0 - axis_left - legend_right, h0 - axis_bottom);
    let sy = |v: f64| py + ph - (v - ymin) / (ymax - ymin) * ph;
    let font = style.font_size;

    let _ = writeln!(
        body,
        "<g class=\"axes\" stroke=\"#333333\" stroke-width=\"1\"><line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\"/><line x1=\"{x}\" y1=\"{b}\" x2=\"{}\" y2=\"{b}\"/></g>",
        fmt_num(py),
        fmt_num(py + ph),
        fmt_num(px + pw),
        x = fmt_num(px),
        b = fmt_num(sy(0.0_f64.max(ymin)))
    );
    for (class, v) in [("tick y-min", ymin), ("tick y-max", ymax)] {
        let _ = writeln!(
            body,
            "<text class=\"{class}\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{}\" text-anchor=\"end\">{}</text>",
            fmt_num(px - 6.0),
            fmt_num(sy(v) + font / 3.0),
            fmt_num(font),
            fmt_num(v)
        );
    }

    let slot = pw / n_points as f64;
    match kind {
        SeriesKind::Bar => {
            let bar_w = slot * 0.8 / series.len() as f64;
            for (si, s) in series.iter().enumerate() {
                let color = SERIES_COLORS[si % SERIES_COLORS.len()];
                let _ = writeln!(body, "<g class=\"series\" data-series=\"{}\" fill=\"{color}\">", escape(&s.label));
                for (i, (label, v)) in s.points.iter().enumerate() {
                    let x = px + i as f64 * slot + slot * 0.1 + si as f64 * bar_w;
                    let (top, bottom) = (sy(v.max(0.0)), sy(v.min(0.0)));
                    let _ = writeln!(
                        body,
                        "<rect class=\"bar\" data-label=\"{}\" data-value=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/>",
                        escape(label),
                        fmt_num(*v),
                        fmt_num(x),
                        fmt_num(top),
                        fmt_num(bar_w),
                        fmt_num(bottom - top)
                    );
                }
                body.push_str("</g>\n");
            }
            if let Some(first) = series.first() {
                for (i, (label, _)) in first.points.iter().enumerate() {
                    let cx = px + (i as f64 + 0.5) * slot;
                    let ty = py + ph + 10.0;
                    let _ = writeln!(
                        body,
                        "<text class=\"category\" x=\"{cx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"{f}\" text-anchor=\"end\" transform=\"rotate(-45 {cx} {ty})\">{}</text>",
                        escape(label),
                        cx = fmt_num(cx),
                        ty = fmt_num(ty),
                        f = fmt_num(font * 0.85)
                    );
                }
            }
        }
        SeriesKind::Line => {
            for (si, s) in series.iter().enumerate() {
                let color = SERIES_COLORS[si % SERIES_COLORS.len()];
                let pts: Vec<(f64, f64)> = s
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, (_, v))| (px + (i as f64 + 0.5) * slot, sy(*v)))
                    .collect();
                let _ = writeln!(body, "<g class=\"series\" data-series=\"{}\">", escape(&s.label));
                if pts.len() > 1 {
                    let path = pts
                        .iter()
                        .map(|(x, y)| format!("{},{}", fmt_num(*x), fmt_num(*y)))
                        .collect::<Vec<_>>()
                        .join(" ");
                    let _ = writeln!(
                        body,
                        "<polyline points=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>"
                    );
                }
                for ((x, y), (label, v)) in pts.iter().zip(&s.points) {
                    let _ = writeln!(
                        body,
                        "<circle class=\"marker\" data-label=\"{}\" data-value=\"{}\" cx=\"{}\" cy=\"{}\" r=\"2\" fill=\"{color}\"/>",
                        escape(label),
                        fmt_num(*v),
                        fmt_num(*x),
                        fmt_num(*y)
                    );
                }
                body.push_str("</g>\n");
            }
            if let Some(first) = series.first() {
                let ends: Vec<usize> = if first.points.len() > 1 { vec![0, first.points.len() - 1] } else { vec![0] };
                for i in ends {
                    let _ = writeln!(
                        body,
                        "<text class=\"category\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{}\" text-anchor=\"middle\">{}</text>",
                        fmt_num(px + (i as f64 + 0.5) * slot),
                        fmt_num(py + ph + font + 6.0),
                        fmt_num(font * 0.85),
                        escape(&first.points[i].0)
                    );
                }
            }
        }
    }

    if series.len() > 1 {
        let lx = px + pw + 16.0;
        for (si, s) in series.iter().enumerate() {
            let ly = py + 10.0 + si as f64 * 18.0;
            let _ = writeln!(
                body,
                "<g class=\"series-key\"><rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{}\">{}</text></g>",
                fmt_num(lx),
                fmt_num(ly),
                SERIES_COLORS[si % SERIES_COLORS.len()],
                fmt_num(lx + 18.0),
                fmt_num(ly + 10.0),
                fmt_num(font),
                escape(&s.label)
            );
        }
    }
    Ok(Svg::new(style.width, style.height, body))
}

/// Colored grid for a square matrix over `[-1, 1]`, e.g. correlations.
pub fn render_heatmap(labels: &[String], matrix: &[Vec<f64>], style: &MapStyle) -> Result<Svg> {
    let n = labels.len();
    if n == 0 || matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
        return Err(Error::Contract("heatmap needs a square matrix matching its labels".into()));
    }
    let scale = build_scale(&[-1.0, 1.0], Classing::Continuous, &RDYLBU_REVERSED)?;
    let mut body = String::new();
    let (x0, y0, w0, h0) = frame(style, &mut body);
    let gutter = 120.0;
    let cell = ((w0 - gutter) / n as f64).min((h0 - gutter) / n as f64);
    let (gx, gy) = (x0 + gutter, y0 + gutter);
    let font = (cell * 0.3).min(style.font_size);
    body.push_str("<g class=\"cells\" font-family=\"sans-serif\" text-anchor=\"middle\">\n");
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (x, y) = (gx + j as f64 * cell, gy + i as f64 * cell);
            let _ = writeln!(
                body,
                "<g class=\"cell\" data-row=\"{}\" data-col=\"{}\"><rect x=\"{}\" y=\"{}\" width=\"{c}\" height=\"{c}\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" font-size=\"{}\">{:.2}</text></g>",
                escape(&labels[i]),
                escape(&labels[j]),
                fmt_num(x),
                fmt_num(y),
                scale.color(*v),
                fmt_num(x + cell / 2.0),
                fmt_num(y + cell / 2.0 + font / 3.0),
                fmt_num(font),
                v,
                c = fmt_num(cell)
            );
        }
    }
    body.push_str("</g>\n<g class=\"labels\" font-family=\"sans-serif\">\n");
    for (i, label) in labels.iter().enumerate() {
        let c = gy + (i as f64 + 0.5) * cell + font / 3.0;
        let _ = writeln!(
            body,
            "<text x=\"{}\" y=\"{}\" font-size=\"{f}\" text-anchor=\"end\">{l}</text>",
            fmt_num(gx - 6.0),
            fmt_num(c),
            f = fmt_num(font),
            l = escape(label)
        );
        let cx = gx + (i as f64 + 0.5) * cell;
        let _ = writeln!(
            body,
            "<text x=\"{cx}\" y=\"{cy}\" font-size=\"{f}\" text-anchor=\"start\" transform=\"rotate(-60 {cx} {cy})\">{l}</text>",
            cx = fmt_num(cx),
            cy = fmt_num(gy - 6.0),
            f = fmt_num(font),
            l = escape(label)
        );
    }
    body.push_str("</g>\n");
    legend(&scale, style, &mut body);
    Ok(Svg::new(style.width, style.height, body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{Basis, Variable};

    #[test]
    fn palette_ends() {
        assert_eq!(RDYLBU_REVERSED[0].to_string(), "#313695");
        assert_eq!(RDYLBU_REVERSED[10].to_string(), "#a50026");
        assert_eq!(RDYLBU_REVERSED[5].to_string(), "#ffffbf");
    }

    #[test]
    fn continuous_endpoints_and_midpoint() {
        let values: Vec<f64> = (0..=100).map(f64::from).collect();
        let s = build_scale(&values, Classing::Continuous, &RDYLBU_REVERSED).unwrap();
        assert_eq!(s.color(0.0), RDYLBU_REVERSED[0]);
        assert_eq!(s.color(100.0), RDYLBU_REVERSED[10]);
        let single = build_scale(&[4.2], Classing::Continuous, &RDYLBU_REVERSED).unwrap();
        assert_eq!(single.param(4.2), 0.5);
        assert_eq!(single.color(4.2), RDYLBU_REVERSED[5]);
    }

    #[test]
    fn quantile_two_per_class() {
        let values: Vec<f64> = (1..=10).map(|v| v as f64 * 1.5).collect();
        let s = build_scale(&values, Classing::Quantile(5), &RDYLBU_REVERSED).unwrap();
        let mut per_class = [0usize; 5];
        for v in &values {
            per_class[s.class_of(*v)] += 1;
        }
        assert_eq!(per_class, [2; 5]);
    }

    #[test]
    fn quantile_degenerate_single_class() {
        let s = build_scale(&[3.0; 6], Classing::Quantile(4), &RDYLBU_REVERSED).unwrap();
        assert!(s.breaks.is_empty());
        assert_eq!(s.param(3.0), 0.5);
    }

    #[test]
    fn no_finite_values_is_an_error() {
        assert!(build_scale(&[f64::NAN], Classing::Continuous, &RDYLBU_REVERSED).is_err());
        assert!(build_scale(&[], Classing::Continuous, &RDYLBU_REVERSED).is_err());
    }

    #[test]
    fn classing_from_str() {
        assert_eq!("continuous".parse::<Classing>().unwrap(), Classing::Continuous);
        assert_eq!("quantile(7)".parse::<Classing>().unwrap(), Classing::Quantile(7));
        assert_eq!("quantile".parse::<Classing>().unwrap(), Classing::Quantile(7));
        assert!("jenks".parse::<Classing>().is_err());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.5), "1.5");
        assert_eq!(fmt_num(256.5396), "256.54");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_num(1234567.0), "1234570");
        assert_eq!(fmt_num(-0.000123456789), "-0.000123457");
    }

    #[test]
    fn nice_ceiling() {
        assert_eq!(nice_ceil(23.0), 25.0);
        assert_eq!(nice_ceil(10.0), 10.0);
        assert_eq!(nice_ceil(0.7), 1.0);
    }

    #[test]
    fn unknown_rate_region_is_an_error() {
        let rates = RateTable {
            variable: Variable::Deaths,
            basis: Basis::Count,
            values: BTreeMap::from([("99".to_string(), 1.0)]),
        };
        let scale = build_scale(&[1.0], Classing::Continuous, &RDYLBU_REVERSED).unwrap();
        let err = render_choropleth(&[], &rates, &scale, &MapStyle::default()).unwrap_err();
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn escapes_text() {
        assert_eq!(escape("A&B <c>"), "A&amp;B &lt;c&gt;");
    }

    #[test]
    fn facet_grid_columns() {
        let panel = Svg::new(100.0, 50.0, String::new());
        let panels: Vec<(String, Svg)> = (0..8).map(|i| (format!("p{i}"), panel.clone())).collect();
        let f = compose_facets(&panels, &FacetStyle::default()).unwrap();
        assert_eq!(f.width, "400");
        assert_eq!(f.height, "140");
        assert!(compose_facets(&[], &FacetStyle::default()).is_err());
    }
}
