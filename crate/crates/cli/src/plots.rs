//! PNG figures. The bitmap backend is built without a font engine, so the
//! figures carry marks, grids and a frame but no text.

use std::path::Path;

use plotters::coord::types::RangedCoordf64;
use plotters::prelude::*;

use crate::error::CliError;

const SIZE: (u32, u32) = (900, 540);
const GRID: RGBColor = RGBColor(225, 225, 225);
const BAND: RGBColor = RGBColor(170, 200, 240);

type Chart<'a> = ChartContext<'a, BitMapBackend<'a>, Cartesian2d<RangedCoordf64, RangedCoordf64>>;

fn err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::data(format!("cannot draw {}: {e}", path.display()))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

fn with_chart<F>(path: &Path, x: (f64, f64), y: (f64, f64), draw: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Chart<'_>) -> Result<(), CliError>,
{
    let root = BitMapBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err(path))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(30)
        .build_cartesian_2d(x.0..x.1, y.0..y.1)
        .map_err(err(path))?;
    for k in 0..=10 {
        let gx = x.0 + (x.1 - x.0) * k as f64 / 10.0;
        let gy = y.0 + (y.1 - y.0) * k as f64 / 10.0;
        chart
            .draw_series(LineSeries::new([(gx, y.0), (gx, y.1)], GRID))
            .map_err(err(path))?;
        chart
            .draw_series(LineSeries::new([(x.0, gy), (x.1, gy)], GRID))
            .map_err(err(path))?;
    }
    draw(&mut chart)?;
    chart
        .draw_series([Rectangle::new([(x.0, y.0), (x.1, y.1)], BLACK.stroke_width(1))])
        .map_err(err(path))?;
    root.present().map_err(err(path))?;
    Ok(())
}

/// Lines over a shared x axis.
pub fn lines(path: &Path, series: &[(&[f64], RGBColor)]) -> Result<(), CliError> {
    let n = series.iter().map(|(s, _)| s.len()).max().unwrap_or(1).max(2);
    let y = bounds(series.iter().flat_map(|(s, _)| s.iter().copied()));
    with_chart(path, (0.0, (n - 1) as f64), y, |chart| {
        for (s, color) in series {
            chart
                .draw_series(LineSeries::new(s.iter().enumerate().map(|(i, v)| (i as f64, *v)), color))
                .map_err(err(path))?;
        }
        Ok(())
    })
}

/// Actual values, predicted mean and a `mean ± 2 std` band.
pub fn prediction(path: &Path, actual: &[f64], mean: &[f64], std: &[f64]) -> Result<(), CliError> {
    let n = actual.len().max(2);
    let lower: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m - 2.0 * s).collect();
    let upper: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m + 2.0 * s).collect();
    let y = bounds(actual.iter().chain(&lower).chain(&upper).copied());
    with_chart(path, (0.0, (n - 1) as f64), y, |chart| {
        let mut poly: Vec<(f64, f64)> = upper.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect();
        poly.extend(lower.iter().enumerate().rev().map(|(i, v)| (i as f64, *v)));
        chart
            .draw_series([Polygon::new(poly, BAND.filled())])
            .map_err(err(path))?;
        chart
            .draw_series(LineSeries::new(actual.iter().enumerate().map(|(i, v)| (i as f64, *v)), BLACK))
            .map_err(err(path))?;
        chart
            .draw_series(LineSeries::new(mean.iter().enumerate().map(|(i, v)| (i as f64, *v)), BLUE.stroke_width(2)))
            .map_err(err(path))?;
        Ok(())
    })
}

/// Observed against expected coverage, with the diagonal for reference.
pub fn calibration(path: &Path, levels: &[f64], before: &[f64], after: &[f64]) -> Result<(), CliError> {
    with_chart(path, (0.0, 1.0), (0.0, 1.0), |chart| {
        chart
            .draw_series(LineSeries::new([(0.0, 0.0), (1.0, 1.0)], BLACK.stroke_width(1)))
            .map_err(err(path))?;
        for (obs, color) in [(before, RED), (after, GREEN)] {
            let pts: Vec<(f64, f64)> = levels.iter().copied().zip(obs.iter().copied()).collect();
            chart
                .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
                .map_err(err(path))?;
            chart
                .draw_series(pts.into_iter().map(|p| Circle::new(p, 4, color.filled())))
                .map_err(err(path))?;
        }
        Ok(())
    })
}

pub fn histogram(path: &Path, values: &[f64], bins: usize) -> Result<(), CliError> {
    let (lo, hi) = bounds(values.iter().copied());
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let top = *counts.iter().max().unwrap_or(&1) as f64 * 1.05;
    with_chart(path, (lo, hi), (0.0, top.max(1.0)), |chart| {
        chart
            .draw_series(counts.iter().enumerate().map(|(i, c)| {
                let x0 = lo + i as f64 * width;
                Rectangle::new([(x0, 0.0), (x0 + width, *c as f64)], BLUE.mix(0.6).filled())
            }))
            .map_err(err(path))?;
        Ok(())
    })
}

/// Box from q25 to q75 with the median, whiskers at the most extreme points
/// within 1.5 IQR, and the remaining points drawn individually.
pub fn boxplot(path: &Path, values: &[f64], q25: f64, q50: f64, q75: f64) -> Result<(), CliError> {
    let iqr = q75 - q25;
    let (lo_fence, hi_fence) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
    let inside = values.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence);
    let lo_w = inside.clone().fold(q25, f64::min);
    let hi_w = inside.fold(q75, f64::max);
    let y = bounds(values.iter().copied());
    with_chart(path, (0.0, 2.0), y, |chart| {
        chart
            .draw_series([Rectangle::new([(0.6, q25), (1.4, q75)], BLUE.mix(0.4).filled())])
            .map_err(err(path))?;
        for seg in [
            [(0.6, q50), (1.4, q50)],
            [(1.0, q75), (1.0, hi_w)],
            [(1.0, q25), (1.0, lo_w)],
            [(0.8, hi_w), (1.2, hi_w)],
            [(0.8, lo_w), (1.2, lo_w)],
        ] {
            chart
                .draw_series(LineSeries::new(seg, BLACK.stroke_width(2)))
                .map_err(err(path))?;
        }
        chart
            .draw_series(
                values
                    .iter()
                    .filter(|v| **v < lo_fence || **v > hi_fence)
                    .map(|v| Circle::new((1.0, *v), 3, RED)),
            )
            .map_err(err(path))?;
        Ok(())
    })
}

/// Correlogram stems for lags `1..`, with `±band` dashed limits.
pub fn correlogram(path: &Path, coeffs: &[f64], band: f64) -> Result<(), CliError> {
    let lags = coeffs.len().max(1) as f64;
    let (lo, hi) = bounds(coeffs.iter().copied().chain([band, -band, 0.0]));
    with_chart(path, (0.0, lags + 1.0), (lo.min(-0.1), hi.max(0.1)), |chart| {
        chart
            .draw_series(LineSeries::new([(0.0, 0.0), (lags + 1.0, 0.0)], BLACK))
            .map_err(err(path))?;
        for b in [band, -band] {
            chart
                .draw_series(LineSeries::new([(0.0, b), (lags + 1.0, b)], BLUE.mix(0.5)))
                .map_err(err(path))?;
        }
        for (i, c) in coeffs.iter().enumerate() {
            let x = (i + 1) as f64;
            chart
                .draw_series(LineSeries::new([(x, 0.0), (x, *c)], BLACK.stroke_width(2)))
                .map_err(err(path))?;
            chart
                .draw_series([Circle::new((x, *c), 3, BLACK.filled())])
                .map_err(err(path))?;
        }
        Ok(())
    })
}
