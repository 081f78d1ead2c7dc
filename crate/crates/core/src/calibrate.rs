//! Coverage curves, RMSCE and standard-deviation scaling.
//!
//! A level `p` interval is the central Gaussian interval
//! `mean ± z_p · std` with `z_p = Φ⁻¹((1 + p) / 2)`, bounds included.
//! Scaling by `c` widens every interval to `mean ± c · z_p · std`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::predict::UncertaintyReport;

/// Levels `0.1, 0.2, …, 0.9`.
pub fn default_levels() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Half-width multiplier of the central level-`p` interval.
pub fn z_for_level(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf((1.0 + p) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub levels: Vec<f64>,
    pub observed: Vec<f64>,
}

impl CalibrationCurve {
    pub fn rmsce(&self) -> f64 {
        rmsce(&self.levels, &self.observed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub scale_factor: f64,
    pub rmsce_before: f64,
    pub rmsce_after: f64,
    pub curve_before: CalibrationCurve,
    pub curve_after: CalibrationCurve,
    /// Every `(c, rmsce)` pair the search evaluated, in evaluation order.
    #[serde(skip)]
    pub evaluated: Vec<(f64, f64)>,
}

/// Flat JSON layout of a calibration result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDocument {
    pub scale_factor: f64,
    pub rmsce_before: f64,
    pub rmsce_after: f64,
    pub levels: Vec<f64>,
    pub observed_before: Vec<f64>,
    pub observed_after: Vec<f64>,
}

impl From<&CalibrationResult> for CalibrationDocument {
    fn from(r: &CalibrationResult) -> Self {
        Self {
            scale_factor: r.scale_factor,
            rmsce_before: r.rmsce_before,
            rmsce_after: r.rmsce_after,
            levels: r.curve_before.levels.clone(),
            observed_before: r.curve_before.observed.clone(),
            observed_after: r.curve_after.observed.clone(),
        }
    }
}

/// `|y − mean| / std`, sorted ascending.
fn standardized_residuals(y: &[f64], mean: &[f64], std: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::data("calibration needs at least one point"));
    }
    if y.len() != mean.len() || y.len() != std.len() {
        return Err(Error::Shape {
            expected: format!("{} means and stds", y.len()),
            got: format!("{} and {}", mean.len(), std.len()),
        });
    }
    if std.iter().all(|s| *s == 0.0) {
        return Err(Error::data("all predictive standard deviations are zero"));
    }
    if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::data("predictive standard deviations must be positive and finite"));
    }
    let mut r: Vec<f64> = y
        .iter()
        .zip(mean)
        .zip(std)
        .map(|((y, m), s)| (y - m).abs() / s)
        .collect();
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite residuals"));
    }
    r.sort_by(f64::total_cmp);
    Ok(r)
}

fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("coverage level {p} outside (0, 1)")))
    }
}

fn coverage(sorted: &[f64], half_width: f64) -> f64 {
    sorted.partition_point(|r| *r <= half_width) as f64 / sorted.len() as f64
}

fn curve_from(sorted: &[f64], zs: &[f64], levels: &[f64], c: f64) -> CalibrationCurve {
    CalibrationCurve {
        levels: levels.to_vec(),
        observed: zs.iter().map(|z| coverage(sorted, c * z)).collect(),
    }
}

/// Fraction of `y` inside the central level-`p` interval.
pub fn observed_proportion(y: &[f64], mean: &[f64], std: &[f64], p: f64) -> Result<f64> {
    check_level(p)?;
    Ok(coverage(&standardized_residuals(y, mean, std)?, z_for_level(p)))
}

/// Coverage at each level with the stds scaled by `c`.
pub fn calibration_curve(y: &[f64], mean: &[f64], std: &[f64], levels: &[f64], c: f64) -> Result<CalibrationCurve> {
    levels.iter().try_for_each(|p| check_level(*p))?;
    let sorted = standardized_residuals(y, mean, std)?;
    let zs: Vec<f64> = levels.iter().map(|p| z_for_level(*p)).collect();
    Ok(curve_from(&sorted, &zs, levels, c))
}

/// `sqrt(mean_p (p − p̂(p))²)`. Mismatched lengths give NaN.
pub fn rmsce(levels: &[f64], observed: &[f64]) -> f64 {
    if levels.len() != observed.len() || levels.is_empty() {
        return f64::NAN;
    }
    let sum: f64 = levels.iter().zip(observed).map(|(p, o)| (p - o).powi(2)).sum();
    (sum / levels.len() as f64).sqrt()
}

const GRID_POINTS: usize = 200;
const GRID_LO: f64 = 0.1;
const GRID_HI: f64 = 10.0;
const GOLDEN_TOL: f64 = 1e-4;

/// Finds the std multiplier `c` minimizing RMSCE at the default levels.
///
/// A 200-point log grid over `[0.1, 10]` plus `c = 1` is evaluated first,
/// then golden-section search refines within the neighbours of the best grid
/// point. The returned `c` is the best of every evaluated point, ties going
/// to the one closest to 1, so `rmsce_after ≤ rmsce_before`.
pub fn fit_scale_factor(y: &[f64], mean: &[f64], std: &[f64]) -> Result<CalibrationResult> {
    fit_scale_factor_at(y, mean, std, &default_levels())
}

pub fn fit_scale_factor_at(y: &[f64], mean: &[f64], std: &[f64], levels: &[f64]) -> Result<CalibrationResult> {
    if levels.is_empty() {
        return Err(Error::config("no coverage levels"));
    }
    levels.iter().try_for_each(|p| check_level(*p))?;
    let sorted = standardized_residuals(y, mean, std)?;
    let zs: Vec<f64> = levels.iter().map(|p| z_for_level(*p)).collect();
    let score = |c: f64| curve_from(&sorted, &zs, levels, c).rmsce();

    let mut evaluated: Vec<(f64, f64)> = Vec::with_capacity(GRID_POINTS + 40);
    let step = (GRID_HI / GRID_LO).ln() / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| GRID_LO * (step * k as f64).exp())
        .collect();
    for &c in &grid {
        evaluated.push((c, score(c)));
    }
    evaluated.push((1.0, score(1.0)));

    let k = (0..GRID_POINTS)
        .min_by(|&a, &b| evaluated[a].1.total_cmp(&evaluated[b].1))
        .expect("grid is nonempty");
    let (mut lo, mut hi) = (grid[k.saturating_sub(1)], grid[(k + 1).min(GRID_POINTS - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (score(a), score(b));
    evaluated.push((a, fa));
    evaluated.push((b, fb));
    while hi - lo > GOLDEN_TOL {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = score(a);
            evaluated.push((a, fa));
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = score(b);
            evaluated.push((b, fb));
        }
    }

    let &(c, _) = evaluated
        .iter()
        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.ln().abs().total_cmp(&y.0.ln().abs())))
        .expect("nonempty");
    let curve_before = curve_from(&sorted, &zs, levels, 1.0);
    let curve_after = curve_from(&sorted, &zs, levels, c);
    Ok(CalibrationResult {
        scale_factor: c,
        rmsce_before: curve_before.rmsce(),
        rmsce_after: curve_after.rmsce(),
        curve_before,
        curve_after,
        evaluated,
    })
}

/// Scales the total std by `c`: both variance components and the total are
/// multiplied by `c²`, the mean is untouched.
pub fn apply_calibration(report: &UncertaintyReport, c: f64) -> Result<UncertaintyReport> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::config(format!("scale factor {c} must be positive")));
    }
    let c2 = c * c;
    let aleatoric: Vec<f64> = report.aleatoric.iter().map(|a| a * c2).collect();
    let epistemic: Vec<f64> = report.epistemic.iter().map(|e| e * c2).collect();
    let total = aleatoric.iter().zip(&epistemic).map(|(a, e)| a + e).collect();
    Ok(UncertaintyReport {
        mean: report.mean.clone(),
        aleatoric,
        epistemic,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn synthetic(n: usize, true_std: f64, reported_std: f64, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
        let y = mean
            .iter()
            .map(|m| {
                let e: f64 = StandardNormal.sample(&mut rng);
                m + true_std * e
            })
            .collect();
        (y, mean, vec![reported_std; n])
    }

    #[test]
    fn z_values() {
        assert!((z_for_level(0.9) - 1.6448536269514722).abs() < 1e-9);
        assert!((z_for_level(0.5) - 0.6744897501960817).abs() < 1e-9);
    }

    #[test]
    fn exact_predictions_cover_everything() {
        let y = [1.0, 2.0, 3.0];
        for p in default_levels() {
            assert_eq!(observed_proportion(&y, &y, &[0.1; 3], p).unwrap(), 1.0);
        }
    }

    #[test]
    fn coverage_matches_level_for_true_model() {
        let (y, m, s) = synthetic(100_000, 1.0, 1.0, 1);
        for p in default_levels() {
            let o = observed_proportion(&y, &m, &s, p).unwrap();
            assert!((o - p).abs() < 0.01, "p {p}: {o}");
        }
    }

    #[test]
    fn wider_intervals_cover_more() {
        let (y, m, s) = synthetic(2_000, 1.0, 0.7, 2);
        let wide: Vec<f64> = s.iter().map(|v| v * 10.0).collect();
        let mut last = 0.0;
        for p in default_levels() {
            let narrow = observed_proportion(&y, &m, &s, p).unwrap();
            assert!(observed_proportion(&y, &m, &wide, p).unwrap() >= narrow);
            assert!(narrow >= last);
            last = narrow;
        }
    }

    #[test]
    fn rmsce_hand_values() {
        assert_eq!(rmsce(&[0.5], &[0.6]), 0.09999999999999998);
        let levels = default_levels();
        assert_eq!(rmsce(&levels, &levels), 0.0);
        let expected = (levels.iter().map(|p| (p - 1.0f64).powi(2)).sum::<f64>() / 9.0).sqrt();
        assert_eq!(rmsce(&levels, &[1.0; 9]), expected);
        assert!((expected - 0.5627314338711377).abs() < 1e-15);
        assert!(rmsce(&[0.1], &[]).is_nan());
    }

    #[test]
    fn recovers_understated_std() {
        let (y, m, s) = synthetic(10_000, 2.0, 1.0, 3);
        let r = fit_scale_factor(&y, &m, &s).unwrap();
        assert!((1.9..=2.1).contains(&r.scale_factor), "{}", r.scale_factor);
        assert!(r.rmsce_after <= r.rmsce_before);
    }

    #[test]
    fn calibrated_input_stays_near_one() {
        let (y, m, s) = synthetic(10_000, 1.0, 1.0, 4);
        let r = fit_scale_factor(&y, &m, &s).unwrap();
        assert!((0.95..=1.05).contains(&r.scale_factor), "{}", r.scale_factor);
        assert!(r.rmsce_before - r.rmsce_after < 0.02);
    }

    #[test]
    fn result_beats_every_evaluated_point() {
        let (y, m, s) = synthetic(500, 1.3, 1.0, 5);
        let r = fit_scale_factor(&y, &m, &s).unwrap();
        assert!(r.evaluated.len() > GRID_POINTS);
        for (_, score) in &r.evaluated {
            assert!(r.rmsce_after <= *score);
        }
    }

    #[test]
    fn degenerate_inputs_fail() {
        assert!(fit_scale_factor(&[1.0], &[1.0], &[0.0]).is_err());
        assert!(fit_scale_factor(&[], &[], &[]).is_err());
        assert!(fit_scale_factor(&[1.0, 2.0], &[1.0], &[1.0]).is_err());
        assert!(observed_proportion(&[1.0], &[1.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn scaling_the_report() {
        let r = UncertaintyReport {
            mean: vec![1.0, -2.0],
            aleatoric: vec![0.3, 0.1],
            epistemic: vec![0.2, 0.05],
            total: vec![0.5, 0.15000000000000002],
        };
        assert_eq!(apply_calibration(&r, 1.0).unwrap(), r);
        let doubled = apply_calibration(&r, 2.0).unwrap();
        assert_eq!(doubled.mean, r.mean);
        for i in 0..2 {
            assert_eq!(doubled.total[i], 4.0 * r.total[i]);
        }
        assert!(apply_calibration(&r, 0.0).is_err());
    }
}
