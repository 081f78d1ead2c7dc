//! Point-forecast regression metrics.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the metrics table.
///
/// `mape` and `smape` are percentages. `msle` is computed on values shifted
/// by `msle_shift = 1 + |min|` (minimum over targets and predictions), which
/// keeps the logarithm defined on robust-scaled data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub split: Split,
    pub loss: f64,
    pub mae: f64,
    pub rmse: f64,
    pub mse: f64,
    pub mape: f64,
    pub msle: f64,
    pub smape: f64,
    pub r2: f64,
    pub msle_shift: f64,
}

/// Huber loss with threshold `delta`, averaged.
pub fn huber(y_true: &[f64], y_pred: &[f64], delta: f64) -> f64 {
    let n = y_true.len() as f64;
    y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| {
            let e = (y - p).abs();
            if e <= delta {
                0.5 * e * e
            } else {
                delta * (e - 0.5 * delta)
            }
        })
        .sum::<f64>()
        / n
}

// Matches the usual Keras guard against zero targets.
const MAPE_EPS: f64 = 1e-7;

pub fn compute_metrics(
    y_true: &[f64],
    y_pred: &[f64],
    huber_delta: f64,
    split: Split,
) -> Result<MetricsRow> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape {
            expected: format!("{} predictions", y_true.len()),
            got: y_pred.len().to_string(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::data("metrics of an empty set"));
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite value in metrics input"));
    }
    let n = y_true.len() as f64;
    let pairs = || y_true.iter().zip(y_pred);

    let mae = pairs().map(|(y, p)| (y - p).abs()).sum::<f64>() / n;
    let mse = pairs().map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / n;
    let mape = 100.0 * pairs().map(|(y, p)| (y - p).abs() / y.abs().max(MAPE_EPS)).sum::<f64>() / n;
    let smape = 100.0
        * pairs()
            .map(|(y, p)| {
                let den = y.abs() + p.abs();
                if den == 0.0 {
                    0.0
                } else {
                    2.0 * (y - p).abs() / den
                }
            })
            .sum::<f64>()
        / n;

    let min = y_true.iter().chain(y_pred).copied().fold(f64::INFINITY, f64::min);
    let msle_shift = 1.0 + min.abs();
    let msle = pairs()
        .map(|(y, p)| ((y + msle_shift).ln() - (p + msle_shift).ln()).powi(2))
        .sum::<f64>()
        / n;

    let mean_y = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res = mse * n;
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };

    Ok(MetricsRow {
        split,
        loss: huber(y_true, y_pred, huber_delta),
        mae,
        rmse: mse.sqrt(),
        mse,
        mape,
        msle,
        smape,
        r2,
        msle_shift,
    })
}

/// Renders rows grouped by model as an aligned table with the column order
/// `Loss MAE RMSE MAPE MSLE` repeated for train, valid and test.
pub fn render_table(models: &[(String, Vec<MetricsRow>)]) -> String {
    let label_width = models.iter().map(|(m, _)| m.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = write!(out, "{:<label_width$}", "Model");
    for split in Split::ALL {
        let _ = write!(out, " | {:^49}", split.as_str());
    }
    out.push('\n');
    let _ = write!(out, "{:<label_width$}", "");
    for _ in Split::ALL {
        let _ = write!(out, " | {:>9} {:>9} {:>9} {:>9} {:>9}", "Loss", "MAE", "RMSE", "MAPE", "MSLE");
    }
    out.push('\n');
    for (name, rows) in models {
        let _ = write!(out, "{name:<label_width$}");
        for split in Split::ALL {
            match rows.iter().find(|r| r.split == split) {
                Some(r) => {
                    let _ = write!(
                        out,
                        " | {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                        r.loss, r.mae, r.rmse, r.mape, r.msle
                    );
                }
                None => {
                    let _ = write!(out, " | {:>49}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_fit() {
        let y = [1.0, -2.0, 3.5, 0.25];
        let m = compute_metrics(&y, &y, 1.0, Split::Test).unwrap();
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.mape, 0.0);
        assert_eq!(m.msle, 0.0);
        assert_eq!(m.smape, 0.0);
        assert_eq!(m.loss, 0.0);
        assert_eq!(m.r2, 1.0);
    }

    #[test]
    fn hand_arithmetic() {
        // e = (-1, 0): mae 1/2, mse 1/2, mape (1/1 + 0/2)/2 = 50 %.
        let m = compute_metrics(&[1.0, 2.0], &[2.0, 2.0], 1.0, Split::Train).unwrap();
        assert_eq!(m.mae, 0.5);
        assert!((m.rmse - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((m.mape - 50.0).abs() < 1e-12);
        // Huber with |e| = 1 <= delta: (0.5 + 0) / 2.
        assert_eq!(m.loss, 0.25);
        // smape: 2*1/3 / 2 * 100.
        assert!((m.smape - 100.0 / 3.0).abs() < 1e-12);
        // shift = 1 + 1 = 2: (ln 3 - ln 4)^2 / 2.
        assert!((m.msle - (3f64.ln() - 4f64.ln()).powi(2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn huber_linear_branch() {
        // |e| = 3 > 1: 1 * (3 - 0.5).
        assert_eq!(huber(&[0.0], &[3.0], 1.0), 2.5);
    }

    #[test]
    fn negative_values_keep_msle_defined() {
        let m = compute_metrics(&[-3.0, 1.0], &[-2.5, 0.0], 1.0, Split::Valid).unwrap();
        assert_eq!(m.msle_shift, 4.0);
        assert!(m.msle.is_finite());
    }

    #[test]
    fn errors() {
        assert!(compute_metrics(&[1.0], &[1.0, 2.0], 1.0, Split::Test).is_err());
        assert!(compute_metrics(&[], &[], 1.0, Split::Test).is_err());
        assert!(compute_metrics(&[f64::NAN], &[1.0], 1.0, Split::Test).is_err());
    }

    #[test]
    fn table_has_one_line_per_model() {
        let row = compute_metrics(&[1.0, 2.0], &[1.5, 2.0], 1.0, Split::Test).unwrap();
        let t = render_table(&[("TCN".into(), vec![row]), ("WaveNet".into(), vec![row])]);
        assert_eq!(t.lines().count(), 4);
        assert!(t.contains("RMSE"));
    }

    proptest! {
        #[test]
        fn invariants(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..60)) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let m = compute_metrics(&y, &p, 1.0, Split::Test).unwrap();
            prop_assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-12 * m.mse.max(1.0));
            prop_assert!(m.mae <= m.rmse + 1e-12);
            let mean_err = y.iter().zip(&p).map(|(a, b)| a - b).sum::<f64>() / y.len() as f64;
            prop_assert!(m.rmse + 1e-12 >= mean_err.abs());
            prop_assert!(m.mae >= 0.0 && m.msle >= 0.0 && m.smape >= 0.0);

            let mut idx: Vec<usize> = (0..y.len()).collect();
            idx.reverse();
            let yr: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let pr: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let r = compute_metrics(&yr, &pr, 1.0, Split::Test).unwrap();
            prop_assert!((r.mae - m.mae).abs() < 1e-9);
            prop_assert!((r.rmse - m.rmse).abs() < 1e-9);
            prop_assert!((r.msle - m.msle).abs() < 1e-9);
        }
    }
}
