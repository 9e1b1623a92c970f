use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Point {
    pub label: String,
    pub params: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bar {
    pub group: String,
    pub series: String,
    pub value: f64,
}

fn err<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow!("plotting failed: {e}")
}

fn value_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 100.0);
    }
    let pad = ((hi - lo) * 0.1).max(0.5);
    ((lo - pad).max(0.0), (hi + pad).min(100.0))
}

/// Parameters (log scale) against AP, one marker per run. Re-runs of one
/// configuration share an abscissa.
pub fn scatter(path: &Path, points: &[Point]) -> Result<()> {
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let pmin = points.iter().map(|p| p.params).min().unwrap_or(1).max(1) as f64;
    let pmax = points.iter().map(|p| p.params).max().unwrap_or(10).max(1) as f64;
    let (ylo, yhi) = value_range(points.iter().map(|p| p.value));
    let mut chart = ChartBuilder::on(&root)
        .caption("Parameters vs. AP", ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(55)
        .build_cartesian_2d((pmin / 1.5..pmax * 1.5).log_scale(), ylo..yhi)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("parameters")
        .y_desc("AP (%)")
        .x_label_formatter(&|v| format!("{:.0}k", v / 1e3))
        .draw()
        .map_err(err)?;
    let labels: Vec<&str> = points.iter().map(|p| p.label.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    for (i, label) in labels.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(
                points
                    .iter()
                    .filter(|p| p.label == *label)
                    .map(|p| Circle::new((p.params as f64, p.value), 5, color.filled())),
            )
            .map_err(err)?
            .label(*label)
            .legend(move |(x, y)| Circle::new((x, y), 5, color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)?;
    Ok(())
}

/// Bars grouped along the x axis, one colour per series.
pub fn grouped_bars(path: &Path, title: &str, bars: &[Bar]) -> Result<()> {
    let groups: Vec<&str> = {
        let mut seen = Vec::new();
        for b in bars {
            if !seen.contains(&b.group.as_str()) {
                seen.push(b.group.as_str());
            }
        }
        seen
    };
    let series: Vec<&str> = bars.iter().map(|b| b.series.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let width = (groups.len() * (series.len() * 18 + 30)).clamp(600, 4000) as u32;
    let root = SVGBackend::new(path, (width, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let (ylo, yhi) = value_range(bars.iter().map(|b| b.value));
    let n = groups.len().max(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(70)
        .y_label_area_size(55)
        .build_cartesian_2d(0.0..n, ylo..yhi)
        .map_err(err)?;
    let names = groups.clone();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(groups.len().max(1))
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            if (x - i as f64 - 0.5).abs() < 1e-6 {
                names.get(i).map_or(String::new(), |s| s.to_string())
            } else {
                String::new()
            }
        })
        .y_desc("AP (%)")
        .draw()
        .map_err(err)?;
    let slot = 0.8 / series.len().max(1) as f64;
    for (si, s) in series.iter().enumerate() {
        let color = Palette99::pick(si).to_rgba();
        let rects: Vec<_> = bars
            .iter()
            .filter(|b| b.series == *s)
            .filter_map(|b| {
                let g = groups.iter().position(|x| *x == b.group)? as f64;
                let x0 = g + 0.1 + si as f64 * slot;
                Some(Rectangle::new([(x0, ylo), (x0 + slot * 0.9, b.value)], color.filled()))
            })
            .collect();
        chart
            .draw_series(rects)
            .map_err(err)?
            .label(*s)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)?;
    Ok(())
}
