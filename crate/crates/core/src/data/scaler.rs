use serde::{Deserialize, Serialize};

use super::stats::quantile_sorted;
use crate::error::{Error, Result};

/// Median/IQR robust scaler, fitted on training values only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub median: f64,
    pub iqr: f64,
}

impl RobustScaler {
    pub fn fit(train_values: &[f64]) -> Result<Self> {
        if train_values.len() < 4 {
            return Err(Error::data(format!(
                "robust scaler needs at least 4 values, got {}",
                train_values.len()
            )));
        }
        let mut sorted = train_values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = quantile_sorted(&sorted, 0.5);
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        if iqr.is_nan() || iqr <= 0.0 {
            return Err(Error::data("interquartile range of the training values is zero"));
        }
        Ok(Self { median, iqr })
    }

    pub fn scale(&self, value: f64) -> f64 {
        (value - self.median) / self.iqr
    }

    pub fn inverse(&self, scaled: f64) -> f64 {
        scaled * self.iqr + self.median
    }

    pub fn scale_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| self.scale(*v)).collect()
    }

    pub fn inverse_all(&self, scaled: &[f64]) -> Vec<f64> {
        scaled.iter().map(|v| self.inverse(*v)).collect()
    }

    /// Maps a variance in scaled units² back to index points².
    pub fn inverse_variance(&self, scaled_variance: f64) -> f64 {
        scaled_variance * self.iqr * self.iqr
    }
}
