use serde::{Deserialize, Serialize};

use super::scaler::RobustScaler;
use crate::error::{Error, Result};

/// Sliding windows over a series: row `i` holds `values[s + i .. s + i + window]`
/// and its target is the next observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    window: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    target_index: Vec<usize>,
}

impl Windows {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Row-major `[len × window]` input matrix.
    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.window..(i + 1) * self.window]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Position of each target in the source series.
    pub fn target_index(&self) -> &[usize] {
        &self.target_index
    }

    /// Rows `range` as a new set of windows.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Windows {
        Windows {
            window: self.window,
            inputs: self.inputs[range.start * self.window..range.end * self.window].to_vec(),
            targets: self.targets[range.clone()].to_vec(),
            target_index: self.target_index[range].to_vec(),
        }
    }

    /// Selects rows by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> Windows {
        let mut inputs = Vec::with_capacity(rows.len() * self.window);
        for &r in rows {
            inputs.extend_from_slice(self.row(r));
        }
        Windows {
            window: self.window,
            inputs,
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
            target_index: rows.iter().map(|&r| self.target_index[r]).collect(),
        }
    }
}

pub fn make_windows(values: &[f64], window: usize) -> Result<Windows> {
    if window == 0 {
        return Err(Error::config("window size must be positive"));
    }
    if values.len() <= window {
        return Err(Error::data(format!(
            "series of length {} too short for window {window}",
            values.len()
        )));
    }
    let n = values.len() - window;
    let mut inputs = Vec::with_capacity(n * window);
    for i in 0..n {
        inputs.extend_from_slice(&values[i..i + window]);
    }
    Ok(Windows {
        window,
        inputs,
        targets: values[window..].to_vec(),
        target_index: (window..values.len()).collect(),
    })
}

/// Chronological train/valid/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.valid, self.test];
        if all.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::config(format!("split fractions must lie in (0, 1): {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split fractions must sum to 1: {all:?}")));
        }
        Ok(())
    }

    /// `floor(n f)` for valid and test, the remainder to train.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        // The epsilon absorbs representation error such as 0.1 * 30 = 3.0000000000000004
        // or 0.29 * 100 = 28.999999999999996.
        let floor = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
        let valid = floor(self.valid);
        let test = floor(self.test);
        let train = n - valid - test;
        if train == 0 || valid == 0 || test == 0 {
            return Err(Error::data(format!(
                "{n} items cannot be split into nonempty sets {train}/{valid}/{test}"
            )));
        }
        Ok([train, valid, test])
    }
}

/// Scaled windows partitioned chronologically, with the scaler that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSplit {
    pub window_size: usize,
    pub train: Windows,
    pub valid: Windows,
    pub test: Windows,
    pub scaler: RobustScaler,
}

/// Splits already-built windows into contiguous chronological blocks.
pub fn chrono_split(
    windows: &Windows,
    fractions: SplitFractions,
    scaler: RobustScaler,
) -> Result<WindowedSplit> {
    if windows.len() < 3 {
        return Err(Error::data(format!(
            "need at least 3 windows to split, got {}",
            windows.len()
        )));
    }
    let [train, valid, _] = fractions.counts(windows.len())?;
    Ok(WindowedSplit {
        window_size: windows.window(),
        train: windows.slice(0..train),
        valid: windows.slice(train..train + valid),
        test: windows.slice(train + valid..windows.len()),
        scaler,
    })
}

/// The full preprocessing pipeline on raw closes.
///
/// Observations are split chronologically first (`floor` rule, remainder to
/// train), the scaler is fitted on the training observations, and each window
/// is assigned to the split that owns its target. Validation and test windows
/// may look back into the preceding split for their inputs; the first
/// `window` training observations have no full history and yield no window.
/// For 2500 observations and a window of 20 this gives 1980/250/250 windows.
pub fn build_dataset(
    values: &[f64],
    window: usize,
    fractions: SplitFractions,
) -> Result<WindowedSplit> {
    let [n_train, n_valid, _] = fractions.counts(values.len())?;
    if n_train <= window {
        return Err(Error::data(format!(
            "training segment of {n_train} observations leaves no window of size {window}"
        )));
    }
    let scaler = RobustScaler::fit(&values[..n_train])?;
    let scaled = scaler.scale_all(values);
    let all = make_windows(&scaled, window)?;
    let first_valid = n_train - window;
    let first_test = first_valid + n_valid;
    Ok(WindowedSplit {
        window_size: window,
        train: all.slice(0..first_valid),
        valid: all.slice(first_valid..first_test),
        test: all.slice(first_test..all.len()),
        scaler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&seq(2500), 20).unwrap().len(), 2480);
        assert_eq!(make_windows(&seq(21), 20).unwrap().len(), 1);
        assert!(make_windows(&seq(20), 20).is_err());
    }

    #[test]
    fn three_values_window_two() {
        let w = make_windows(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.row(0), &[1.0, 2.0]);
        assert_eq!(w.targets(), &[3.0]);
    }

    #[test]
    fn windows_reconstruct_series() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = make_windows(&v, 7).unwrap();
        let mut rebuilt: Vec<f64> = (0..w.len()).map(|i| w.row(i)[0]).collect();
        rebuilt.extend_from_slice(&w.row(w.len() - 1)[1..]);
        rebuilt.push(*w.targets().last().unwrap());
        assert_eq!(rebuilt, v);
        for i in 0..w.len() {
            assert_eq!(w.targets()[i], v[i + 7]);
        }
    }

    #[test]
    fn split_counts_rule() {
        let f = SplitFractions::default();
        assert_eq!(f.counts(10).unwrap(), [8, 1, 1]);
        assert_eq!(f.counts(11).unwrap(), [9, 1, 1]);
        assert_eq!(f.counts(2500).unwrap(), [2000, 250, 250]);
        assert!(f.counts(5).is_err());
    }

    #[test]
    fn bad_fractions() {
        let f = SplitFractions {
            train: 0.8,
            valid: 0.1,
            test: 0.2,
        };
        assert!(f.validate().is_err());
    }

    #[test]
    fn chrono_split_windows() {
        let w = make_windows(&seq(13), 2).unwrap();
        let scaler = RobustScaler {
            median: 0.0,
            iqr: 1.0,
        };
        let s = chrono_split(&w, SplitFractions::default(), scaler).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (9, 1, 1));
        let two = make_windows(&seq(4), 2).unwrap();
        assert!(chrono_split(&two, SplitFractions::default(), scaler).is_err());
    }

    #[test]
    fn pipeline_counts_and_order() {
        let v: Vec<f64> = (0..2500).map(|i| 10.0 + (i as f64 * 0.1).sin() + i as f64 * 0.01).collect();
        let s = build_dataset(&v, 20, SplitFractions::default()).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (1980, 250, 250));
        let max_train = *s.train.target_index().iter().max().unwrap();
        let min_valid = *s.valid.target_index().iter().min().unwrap();
        let max_valid = *s.valid.target_index().iter().max().unwrap();
        let min_test = *s.test.target_index().iter().min().unwrap();
        assert!(max_train < min_valid && max_valid < min_test);
        assert_eq!(max_train, 1999);
        assert_eq!(min_test, 2250);
    }

    #[test]
    fn scaler_ignores_holdout_values() {
        let v: Vec<f64> = (0..200).map(|i| 10.0 + (i as f64 * 0.3).cos() * 3.0).collect();
        let a = build_dataset(&v, 5, SplitFractions::default()).unwrap();
        let mut w = v.clone();
        for x in &mut w[160..] {
            *x *= 7.5;
        }
        let b = build_dataset(&w, 5, SplitFractions::default()).unwrap();
        assert_eq!(a.scaler.median.to_bits(), b.scaler.median.to_bits());
        assert_eq!(a.scaler.iqr.to_bits(), b.scaler.iqr.to_bits());
        assert_eq!(a.train, b.train);
    }
}
