//! SVG plots derived from training curves and episode records.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::placement::ppo::CurveRow;

use super::experiments::{summarize, ArmSummary};
use super::record::EpisodeRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BarMetric {
    SumRate,
    Efficiency,
}

impl BarMetric {
    fn value(self, sum_rate: f64, eta: f64) -> f64 {
        match self {
            BarMetric::SumRate => sum_rate / 1e9,
            BarMetric::Efficiency => eta / 1e9,
        }
    }

    fn label(self) -> &'static str {
        match self {
            BarMetric::SumRate => "E[R] (Gbps)",
            BarMetric::Efficiency => "E[eta] (Gbps per policy)",
        }
    }
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Rolling-mean training reward against environment slots, one line per run.
pub fn plot_convergence(curves: &[(String, Vec<CurveRow>)], path: &Path) -> Result<()> {
    let points: Vec<(f64, f64)> =
        curves.iter().flat_map(|(_, c)| c.iter().map(|r| (r.env_slots as f64, r.rolling_mean))).collect();
    if points.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let (x0, x1) = padded(
        points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = padded(
        points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Rolling-mean training reward", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("environment slots")
        .y_desc("reward")
        .draw()
        .map_err(plot_err)?;
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let series: Vec<(f64, f64)> = curve.iter().map(|r| (r.env_slots as f64, r.rolling_mean)).collect();
        chart
            .draw_series(LineSeries::new(series.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        if series.len() == 1 {
            chart.draw_series(series.iter().map(|&p| Circle::new(p, 3, color.filled()))).map_err(plot_err)?;
        }
        let aggregations = curve.iter().filter(|r| r.aggregated).map(|r| (r.env_slots as f64, r.rolling_mean));
        chart.draw_series(aggregations.map(|p| Cross::new(p, 4, color))).map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Grouped bars of `metric` per fleet size M_s, one bar per arm.
pub fn plot_bars(summaries: &[ArmSummary], metric: BarMetric, path: &Path) -> Result<()> {
    let sizes: Vec<usize> = {
        let mut s: Vec<usize> = summaries.iter().flat_map(|a| a.buckets.iter().map(|b| b.m_s)).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    if sizes.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let top = summaries
        .iter()
        .flat_map(|a| a.buckets.iter().map(|b| metric.value(b.mean_sum_rate, b.mean_eta)))
        .fold(0.0_f64, f64::max);
    let top = if top > 0.0 { top * 1.1 } else { 1.0 };
    let lo = *sizes.first().expect("non-empty") as f64 - 0.5;
    let hi = *sizes.last().expect("non-empty") as f64 + 0.5;
    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} by M_s", metric.label()), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(lo..hi, 0.0..top)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(sizes.len() + 1)
        .x_label_formatter(&|x| {
            let r = x.round();
            if (x - r).abs() < 1e-6 { format!("{r}") } else { String::new() }
        })
        .x_desc("M_s")
        .y_desc(metric.label())
        .draw()
        .map_err(plot_err)?;
    let width = 0.8 / summaries.len().max(1) as f64;
    for (j, arm) in summaries.iter().enumerate() {
        let color = Palette99::pick(j).to_rgba();
        let bars: Vec<_> = arm
            .buckets
            .iter()
            .map(|b| {
                let x0 = b.m_s as f64 - 0.4 + j as f64 * width;
                let v = metric.value(b.mean_sum_rate, b.mean_eta);
                Rectangle::new([(x0, 0.0), (x0 + width * 0.9, v)], color.filled())
            })
            .collect();
        chart
            .draw_series(bars)
            .map_err(plot_err)?
            .label(arm.arm.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Writes every plot the inputs support into `out_dir` and returns the paths.
pub fn emit_plots(records: &[EpisodeRecord], curves: &[(String, Vec<CurveRow>)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.iter().all(|r| r.rows.is_empty()) && curves.iter().all(|(_, c)| c.is_empty()) {
        return Err(Error::EmptyRecords);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    if curves.iter().any(|(_, c)| !c.is_empty()) {
        let p = out_dir.join("convergence.svg");
        plot_convergence(curves, &p)?;
        written.push(p);
    }
    let summaries: Vec<ArmSummary> =
        records.iter().filter(|r| !r.rows.is_empty()).map(summarize).collect::<Result<_>>()?;
    if !summaries.is_empty() {
        for (metric, name) in [(BarMetric::SumRate, "sum_rate.svg"), (BarMetric::Efficiency, "efficiency.svg")] {
            let p = out_dir.join(name);
            plot_bars(&summaries, metric, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}
