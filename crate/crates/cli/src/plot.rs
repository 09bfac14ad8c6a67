//! SVG plots of a trace.

use std::ops::Range;
use std::path::{Path, PathBuf};

use hvs_core::simulation::TraceLog;
use plotters::prelude::*;

use crate::error::{CliError, Result};

/// Longer traces are decimated to about this many points per series.
const MAX_POINTS: usize = 2000;
const SIZE: (u32, u32) = (800, 600);

const PALETTE: [RGBColor; 6] = [
    RGBColor(0x1f, 0x77, 0xb4),
    RGBColor(0xd6, 0x27, 0x28),
    RGBColor(0x2c, 0xa0, 0x2c),
    RGBColor(0xff, 0x7f, 0x0e),
    RGBColor(0x94, 0x67, 0xbd),
    RGBColor(0x8c, 0x56, 0x4b),
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

fn plot_err<E: std::fmt::Debug>(e: E) -> CliError {
    CliError::Plot(format!("{e:?}"))
}

fn padded(lo: f64, hi: f64) -> Range<f64> {
    if !(lo.is_finite() && hi.is_finite()) {
        return 0.0..1.0;
    }
    let span = hi - lo;
    let pad = if span > 0.0 {
        0.05 * span
    } else {
        lo.abs().max(1.0) * 0.05
    };
    (lo - pad)..(hi + pad)
}

fn bounds(series: &[Series]) -> (Range<f64>, Range<f64>) {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let fold = |f: fn(&(f64, f64)) -> f64| {
        pts()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (x0, x1) = fold(|p| p.0);
    let (y0, y1) = fold(|p| p.1);
    (padded(x0, x1), padded(y0, y1))
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

/// Samples `f` at every `stride`-th record plus the last one, dropping
/// non-finite points.
fn sample(trace: &TraceLog, f: impl Fn(usize) -> (f64, f64)) -> Vec<(f64, f64)> {
    let n = trace.records.len();
    let step = stride(n);
    let mut idx: Vec<usize> = (0..n).step_by(step).collect();
    if n > 0 && idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    idx.into_iter()
        .map(f)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect()
}

fn render(title: &str, x_desc: &str, y_desc: &str, series: &[Series]) -> Result<String> {
    let (xr, yr) = bounds(series);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(xr, yr)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(x_desc)
            .y_desc(y_desc)
            .draw()
            .map_err(plot_err)?;
        for (i, s) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let style = ShapeStyle::from(&color).stroke_width(if s.dashed { 1 } else { 2 });
            let drawn = if s.dashed {
                chart.draw_series(DashedLineSeries::new(s.points.iter().copied(), 6, 4, style))
            } else {
                chart.draw_series(LineSeries::new(s.points.iter().copied(), style))
            }
            .map_err(plot_err)?;
            drawn
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Measured versus desired image trajectory, one pair of curves per feature.
pub fn image_plot(trace: &TraceLog) -> Result<String> {
    let mut series = Vec::new();
    for j in 0..trace.k {
        let (u, v) = (3 * j, 3 * j + 1);
        series.push(Series {
            label: format!("y{j}"),
            points: sample(trace, |i| (trace.records[i].y[u], trace.records[i].y[v])),
            dashed: false,
        });
        series.push(Series {
            label: format!("y_d{j}"),
            points: sample(trace, |i| {
                (trace.records[i].y_d[u], trace.records[i].y_d[v])
            }),
            dashed: true,
        });
    }
    render("Image trajectory", "u [px]", "v [px]", &series)
}

/// Pixel error components over time. Depth errors are scaled by the ratio
/// given in the legend so that they share the axis.
pub fn error_plot(trace: &TraceLog) -> Result<String> {
    let err = |i: usize, c: usize| trace.records[i].y[c] - trace.records[i].y_d[c];
    let mut pixel_peak: f64 = 0.0;
    let mut depth_peak: f64 = 0.0;
    for i in 0..trace.records.len() {
        for j in 0..trace.k {
            pixel_peak = pixel_peak
                .max(err(i, 3 * j).abs())
                .max(err(i, 3 * j + 1).abs());
            depth_peak = depth_peak.max(err(i, 3 * j + 2).abs());
        }
    }
    let scale = if depth_peak > 0.0 && pixel_peak > 0.0 {
        10f64.powf((pixel_peak / depth_peak).log10().floor())
    } else {
        1.0
    };
    let mut series = Vec::new();
    for j in 0..trace.k {
        for (c, name) in [(0, "du"), (1, "dv")] {
            series.push(Series {
                label: format!("{name}{j}"),
                points: sample(trace, |i| (trace.records[i].t, err(i, 3 * j + c))),
                dashed: false,
            });
        }
        series.push(Series {
            label: format!("dd{j} x {scale:e}"),
            points: sample(trace, |i| (trace.records[i].t, scale * err(i, 3 * j + 2))),
            dashed: true,
        });
    }
    render("Image error", "t [s]", "error [px]", &series)
}

pub fn torque_plot(trace: &TraceLog) -> Result<String> {
    let series: Vec<Series> = (0..trace.n)
        .map(|j| Series {
            label: format!("tau{j}"),
            points: sample(trace, |i| (trace.records[i].t, trace.records[i].tau[j])),
            dashed: false,
        })
        .collect();
    render("Joint torques", "t [s]", "torque [N m]", &series)
}

/// `log10 V` over time; nonpositive values are skipped.
pub fn lyapunov_plot(trace: &TraceLog) -> Result<String> {
    let series = [Series {
        label: "log10 V".into(),
        points: sample(trace, |i| {
            (trace.records[i].t, trace.records[i].lyapunov.log10())
        }),
        dashed: false,
    }];
    render("Lyapunov function", "t [s]", "log10 V", &series)
}

/// Writes the four plots into `dir` and returns their paths.
pub fn write_plots(trace: &TraceLog, dir: &Path) -> Result<Vec<PathBuf>> {
    if trace.records.is_empty() {
        return Err(CliError::TraceParse {
            record: 0,
            message: "no records".into(),
        });
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let plots = [
        ("image.svg", image_plot(trace)?),
        ("error.svg", error_plot(trace)?),
        ("torque.svg", torque_plot(trace)?),
        ("lyapunov.svg", lyapunov_plot(trace)?),
    ];
    let mut paths = Vec::new();
    for (name, svg) in plots {
        let path = dir.join(name);
        std::fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
