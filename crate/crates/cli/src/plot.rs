//! SVG panels of a trace: positions, speeds, controls and tracking errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use platoon::sim::trace::TraceRow;
use plotters::prelude::*;

type Series = BTreeMap<usize, Vec<(f64, f64)>>;

/// File name, title, axis label, data and series labelling of one panel.
type Panel = (&'static str, &'static str, &'static str, Series, fn(usize) -> String);

fn collect(rows: &[TraceRow], value: impl Fn(&TraceRow) -> Option<f64>) -> Series {
    let mut out = Series::new();
    for r in rows {
        if let Some(y) = value(r) {
            out.entry(r.vehicle_id).or_default().push((r.step as f64, y));
        }
    }
    out
}

fn range(series: &Series, pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
    let (lo, hi) = series.values().flatten().map(pick).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

fn vehicle_label(id: usize) -> String {
    if id == 0 {
        "leader".into()
    } else {
        format!("CAV {id}")
    }
}

/// Speed-error series are keyed with an offset so both error kinds share one panel.
const SPEED_KEY: usize = 1000;

fn error_label(key: usize) -> String {
    if key >= SPEED_KEY {
        format!("speed error, CAV {}", key - SPEED_KEY)
    } else {
        format!("spacing error, CAV {key}")
    }
}

fn panel(path: &Path, title: &str, y_desc: &str, series: &Series, name: fn(usize) -> String) -> Result<()> {
    let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let (x0, x1) = range(series, |p| p.0);
    let (y0, y1) = range(series, |p| p.1);
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| anyhow!("{e}"))?;
    chart.configure_mesh().x_desc("step").y_desc(y_desc).draw().map_err(|e| anyhow!("{e}"))?;
    for (k, (&id, points)) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(name(id))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw().map_err(|e| anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

/// Writes the four panels into `dir` and returns their paths.
pub fn plot_panels(rows: &[TraceRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut errors = collect(rows, |r| r.dx_err);
    for (id, points) in collect(rows, |r| r.dv_err) {
        errors.insert(id + SPEED_KEY, points);
    }
    let panels: [Panel; 4] = [
        ("positions.svg", "Positions", "x (m)", collect(rows, |r| Some(r.x)), vehicle_label),
        ("speeds.svg", "Speeds", "v (m/s)", collect(rows, |r| Some(r.v)), vehicle_label),
        ("controls.svg", "Controls", "u (m/s²)", collect(rows, |r| r.u), vehicle_label),
        ("tracking_errors.svg", "Tracking errors", "spacing (m), speed (m/s)", errors, error_label),
    ];
    let mut written = Vec::new();
    for (file, title, y_desc, series, name) in panels {
        let path = dir.join(file);
        panel(&path, title, y_desc, &series, name)?;
        written.push(path);
    }
    Ok(written)
}
