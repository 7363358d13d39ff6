//! SVG figures: curves, histograms and heat maps.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use crate::error::{Result, SimError};
use crate::slls::{HeatmapCell, SllsMethod};

const SIZE: (u32, u32) = (800, 500);
const COLORS: [RGBColor; 6] = [BLUE, BLACK, RED, GREEN, MAGENTA, CYAN];

fn plot_err<E: std::fmt::Debug>(e: E) -> SimError {
    SimError::Plot(format!("{e:?}"))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color))
            .map_err(plot_err)?
            .label(s.name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    if series.len() > 1 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

pub fn histogram(path: &Path, title: &str, x_label: &str, counts: &BTreeMap<u64, usize>) -> Result<()> {
    let x_max = counts.keys().max().copied().unwrap_or(1) + 1;
    let y_max = counts.values().max().copied().unwrap_or(1) as f64 * 1.1;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..x_max as f64, 0f64..y_max)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc(x_label).y_desc("count").draw().map_err(plot_err)?;
    chart
        .draw_series(counts.iter().map(|(&k, &c)| {
            Rectangle::new([(k as f64 - 0.4, 0.0), (k as f64 + 0.4, c as f64)], BLUE.filled())
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Axis label for a tick sitting on a cell centre, empty elsewhere.
fn grid_label<T>(v: f64, values: &[T], f: impl Fn(&T) -> String) -> String {
    let i = v.round();
    if (v - i).abs() > 1e-6 || i < 0.0 {
        return String::new();
    }
    values.get(i as usize).map_or(String::new(), f)
}

/// Mean SLLS of one method over the SNR x level grid, shaded from white
/// (lowest) to blue (highest) with the value printed in each cell.
pub fn heatmap(path: &Path, cells: &[HeatmapCell], method: SllsMethod) -> Result<()> {
    let mine: Vec<&HeatmapCell> = cells.iter().filter(|c| c.method == method).collect();
    let mut snrs: Vec<f64> = mine.iter().map(|c| c.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    let mut levels: Vec<u32> = mine.iter().map(|c| c.level).collect();
    levels.sort_unstable();
    levels.dedup();
    let (lo, hi) = bounds(cells.iter().map(|c| c.mean_slls_db));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("mean SLLS (dB), {}", method.name()), ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(-0.5..snrs.len() as f64 - 0.5, -0.5..levels.len() as f64 - 0.5)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_mesh()
        .x_labels(2 * snrs.len() + 1)
        .y_labels(2 * levels.len() + 1)
        .x_label_formatter(&|x| grid_label(*x, &snrs, |s| format!("{s} dB")))
        .y_label_formatter(&|y| grid_label(*y, &levels, |l| format!("I{l}")))
        .x_desc("SNR")
        .y_desc("imbalance level")
        .draw()
        .map_err(plot_err)?;
    for c in &mine {
        let xi = snrs.iter().position(|s| *s == c.snr_db).expect("listed") as f64;
        let yi = levels.iter().position(|l| *l == c.level).expect("listed") as f64;
        let t = ((c.mean_slls_db - lo) / (hi - lo)).clamp(0.0, 1.0);
        let shade = RGBColor((255.0 * (1.0 - t)) as u8, (255.0 * (1.0 - 0.6 * t)) as u8, 255);
        chart
            .draw_series(std::iter::once(Rectangle::new([(xi - 0.5, yi - 0.5), (xi + 0.5, yi + 0.5)], shade.filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(std::iter::once(Text::new(
                format!("{:.1}", c.mean_slls_db),
                (xi - 0.1, yi),
                ("sans-serif", 14),
            )))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}
