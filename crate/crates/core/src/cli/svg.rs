//! Minimal line-plot SVG output for distance and PWCCA reports.
//!
//! The output is plain text built by hand so that identical inputs give
//! identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write;

use clap::ValueEnum;

use crate::error::{ProbeError, Result};
use crate::lexicon::Setting;
use crate::probe::{read_report, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotValue {
    Raw,
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(layer, value)` in layer order.
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub zero_line: bool,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn distance_plot(rows: &[(Setting, usize, f64)], value: PlotValue) -> PlotData {
    let mut by_setting: BTreeMap<Setting, Vec<(usize, f64)>> = BTreeMap::new();
    for &(setting, layer, v) in rows {
        by_setting.entry(setting).or_default().push((layer, v));
    }
    let series = by_setting
        .into_iter()
        .map(|(s, mut points)| {
            points.sort_by_key(|p| p.0);
            Series {
                name: s.to_string(),
                points,
            }
        })
        .collect();
    let normalized = value == PlotValue::Normalized;
    PlotData {
        title: "Word-pair distance by layer".into(),
        y_label: if normalized {
            "distance - random"
        } else {
            "mean distance"
        }
        .into(),
        series,
        zero_line: normalized,
    }
}

fn pwcca_plot(points: Vec<(usize, f64)>) -> PlotData {
    PlotData {
        title: "PWCCA with VTD by layer".into(),
        y_label: "pwcca".into(),
        series: vec![Series {
            name: "pwcca".into(),
            points,
        }],
        zero_line: false,
    }
}

fn from_report(report: &Report, value: PlotValue) -> Result<PlotData> {
    match report {
        Report::Distance(r) => {
            let rows = match value {
                PlotValue::Raw => &r.raw,
                PlotValue::Normalized => &r.normalized,
            };
            let rows: Vec<_> = rows.iter().map(|s| (s.setting, s.layer, s.mean)).collect();
            Ok(distance_plot(&rows, value))
        }
        Report::Pwcca(r) => Ok(pwcca_plot(r.layers.iter().map(|l| (l.layer, l.pwcca)).collect())),
        Report::Cka(_) => Err(ProbeError::Validation(
            "CKA reports have no per-layer curve to plot".into(),
        )),
    }
}

fn csv_err(e: impl std::fmt::Display) -> ProbeError {
    ProbeError::Format(format!("bad report CSV: {e}"))
}

fn from_csv(text: &str, value: PlotValue) -> Result<PlotData> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    let num = |r: &csv::StringRecord, i: usize| -> Result<f64> {
        r.get(i).unwrap_or("").trim().parse::<f64>().map_err(csv_err)
    };
    let layer = |r: &csv::StringRecord, i: usize| -> Result<usize> {
        r.get(i).unwrap_or("").trim().parse::<usize>().map_err(csv_err)
    };

    if let (Some(s), Some(l), Some(m), Some(n)) = (col("setting"), col("layer"), col("mean"), col("normalized_mean")) {
        let v = if value == PlotValue::Raw { m } else { n };
        let rows = records
            .iter()
            .map(|r| {
                let setting: Setting = r.get(s).unwrap_or("").parse()?;
                Ok((setting, layer(r, l)?, num(r, v)?))
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(distance_plot(&rows, value));
    }
    if let (Some(l), Some(p)) = (col("layer"), col("pwcca")) {
        let points = records
            .iter()
            .map(|r| Ok((layer(r, l)?, num(r, p)?)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(pwcca_plot(points));
    }
    if col("cka").is_some() {
        return Err(ProbeError::Validation(
            "CKA reports have no per-layer curve to plot".into(),
        ));
    }
    Err(ProbeError::Format(format!(
        "unrecognized report columns: {}",
        header.join(",")
    )))
}

/// Reads a JSON or CSV report into plottable series.
pub fn plot_data_from_report(text: &str, value: PlotValue) -> Result<PlotData> {
    if text.trim_start().starts_with('{') {
        from_report(&read_report(text)?, value)
    } else {
        from_csv(text, value)
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `data` as a standalone SVG document.
pub fn render_svg_lines(data: &PlotData) -> String {
    let points = data.series.iter().flat_map(|s| s.points.iter());
    let (mut x_lo, mut x_hi) = (usize::MAX, 0usize);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(layer, v) in points {
        x_lo = x_lo.min(layer);
        x_hi = x_hi.max(layer);
        y_lo = y_lo.min(v);
        y_hi = y_hi.max(v);
    }
    if x_lo > x_hi {
        (x_lo, x_hi, y_lo, y_hi) = (1, 1, 0.0, 1.0);
    }
    if data.zero_line {
        y_lo = y_lo.min(0.0);
        y_hi = y_hi.max(0.0);
    }
    if y_hi - y_lo < 1e-12 {
        let pad = y_hi.abs().max(1.0) * 0.05;
        y_lo -= pad;
        y_hi += pad;
    }
    let pad = (y_hi - y_lo) * 0.05;
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |layer: usize| {
        if x_hi == x_lo {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * (layer - x_lo) as f64 / (x_hi - x_lo) as f64
        }
    };
    let sy = |v: f64| TOP + plot_h * (y_hi - v) / (y_hi - y_lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&data.title)
    );

    // Axes with one tick per layer and five y ticks.
    let (x0, y0, x1, y1) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    let _ = writeln!(out, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(out, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#);
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g class="ticks" text-anchor="middle">"#);
    for layer in x_lo..=x_hi {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{layer}</text>"#, sx(layer), y0 + 18.0);
    }
    for i in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            sy(v) + 4.0,
            format_tick(v)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">layer</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&data.y_label)
    );

    if data.zero_line {
        let _ = writeln!(
            out,
            r#"<line class="zero" x1="{x0:.2}" y1="{:.2}" x2="{x1:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            sy(0.0),
            sy(0.0)
        );
    }

    for (i, s) in data.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(l, v)| format!("{:.2},{:.2}", sx(l), sy(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-name="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&s.name),
            coords.join(" ")
        );
        for &(l, v) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(l),
                sy(v)
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 16.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DISTANCE_CSV: &str = "setting,layer,mean,std,count,normalized_mean\n\
        synonym,1,1.0,0.1,3,-1.0\n\
        synonym,2,1.5,0.1,3,-0.5\n\
        random,1,2.0,0.1,3,0.0\n\
        random,2,2.0,0.1,3,0.0\n";

    #[test]
    fn distance_csv_becomes_series() {
        let d = plot_data_from_report(DISTANCE_CSV, PlotValue::Normalized).unwrap();
        assert_eq!(d.series.len(), 2);
        assert_eq!(d.series[0].name, "synonym");
        assert_eq!(d.series[0].points, vec![(1, -1.0), (2, -0.5)]);
        assert!(d.zero_line);
        let raw = plot_data_from_report(DISTANCE_CSV, PlotValue::Raw).unwrap();
        assert_eq!(raw.series[1].points, vec![(1, 2.0), (2, 2.0)]);
        assert!(!raw.zero_line);
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let d = plot_data_from_report(DISTANCE_CSV, PlotValue::Normalized).unwrap();
        let svg = render_svg_lines(&d);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("class=\"zero\"").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 4);
        assert_eq!(svg, render_svg_lines(&d));
    }

    #[test]
    fn single_layer_and_flat_values_render() {
        let d = plot_data_from_report("layer,pwcca\n1,0.5\n", PlotValue::Raw).unwrap();
        let svg = render_svg_lines(&d);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn cka_and_unknown_reports_are_rejected() {
        let cka = "cka,baseline_mean,baseline_std,delta,permutations,seed\n0.3,0.2,0.01,0.1,100,0\n";
        assert!(matches!(
            plot_data_from_report(cka, PlotValue::Raw),
            Err(ProbeError::Validation(_))
        ));
        assert!(matches!(
            plot_data_from_report("a,b\n1,2\n", PlotValue::Raw),
            Err(ProbeError::Format(_))
        ));
    }
}
