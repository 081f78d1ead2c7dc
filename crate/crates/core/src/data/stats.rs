use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location and dispersion summary of a series, in index points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
    pub iqr: f64,
}

/// Quantile of already sorted data, interpolating linearly between the
/// closest ranks: `h = (n - 1) p`, `q = x[⌊h⌋] + (h - ⌊h⌋)(x[⌊h⌋+1] - x[⌊h⌋])`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile level {p} outside [0, 1]");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of unsorted data; see [`quantile_sorted`].
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

pub fn descriptive_stats(values: &[f64]) -> Result<DescriptiveStats> {
    if values.is_empty() {
        return Err(Error::data("descriptive statistics of an empty series"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q25 = quantile_sorted(&sorted, 0.25);
    let q75 = quantile_sorted(&sorted, 0.75);
    Ok(DescriptiveStats {
        count: n,
        mean,
        std,
        min: sorted[0],
        q25,
        q50: quantile_sorted(&sorted, 0.5),
        q75,
        max: sorted[n - 1],
        iqr: q75 - q25,
    })
}

/// Sample autocorrelation for lags `0..=max_lag`.
///
/// Uses the biased (divide by `n`) autocovariance, so the result is a
/// positive semi-definite sequence with `acf[0] == 1`.
pub fn acf(values: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if max_lag >= n {
        return Err(Error::data(format!(
            "max_lag {max_lag} must be below the series length {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 <= 0.0 || !c0.is_finite() {
        return Err(Error::data("autocorrelation of a zero-variance series"));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                return 1.0;
            }
            let ck: f64 = centered[..n - k]
                .iter()
                .zip(&centered[k..])
                .map(|(a, b)| a * b)
                .sum();
            ck / c0
        })
        .collect())
}

/// Partial autocorrelation for lags `0..=max_lag` via the Durbin–Levinson
/// recursion on the sample autocorrelations.
pub fn pacf(values: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let r = acf(values, max_lag)?;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = r[k] - (1..k).map(|j| phi[j - 1] * r[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * r[j]).sum::<f64>();
        let phi_kk = if den.abs() < f64::EPSILON { 0.0 } else { num / den };
        let mut next: Vec<f64> = (1..k).map(|j| phi[j - 1] - phi_kk * phi[k - j - 1]).collect();
        next.push(phi_kk);
        phi = next;
        out.push(phi_kk);
    }
    Ok(out)
}

/// Persistence forecast: the prediction for `t` is the value at `t - 1`.
///
/// Returns predictions for `t = 1..n`, aligned with `values[1..]`.
pub fn naive_forecast(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::data("naive forecast needs at least two observations"));
    }
    Ok(values[..values.len() - 1].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    // Independent quantile oracle: interpolate between the order statistics
    // at positions floor/ceil of (n-1)p, written out longhand.
    fn oracle_quantile(v: &[f64], p: f64) -> f64 {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = p * (s.len() as f64 - 1.0);
        let below = pos.floor();
        let above = pos.ceil();
        let frac = pos - below;
        s[below as usize] * (1.0 - frac) + s[above as usize] * frac
    }

    #[test]
    fn quartiles_of_one_to_four() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let st = descriptive_stats(&v).unwrap();
        // Frozen from the oracle: (1.75, 2.5, 3.25).
        assert_eq!(oracle_quantile(&v, 0.25), 1.75);
        assert_eq!(oracle_quantile(&v, 0.5), 2.5);
        assert_eq!(oracle_quantile(&v, 0.75), 3.25);
        assert_eq!(st.q25, 1.75);
        assert_eq!(st.q50, 2.5);
        assert_eq!(st.q75, 3.25);
        assert_eq!(st.iqr, 1.5);
        assert!((st.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_series() {
        let st = descriptive_stats(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(st.mean, 5.0);
        assert_eq!(st.std, 0.0);
        assert_eq!(st.iqr, 0.0);
    }

    #[test]
    fn single_value_stats() {
        let st = descriptive_stats(&[7.0]).unwrap();
        assert_eq!(st.count, 1);
        assert_eq!(st.std, 0.0);
        assert_eq!(st.q25, 7.0);
    }

    #[test]
    fn empty_stats_error() {
        assert!(descriptive_stats(&[]).is_err());
    }

    #[test]
    fn quantile_matches_oracle_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..40 {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            for p in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0] {
                assert!((quantile(&v, p) - oracle_quantile(&v, p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn acf_lag_zero_is_one() {
        let v = [1.0, 3.0, 2.0, 5.0, 4.0];
        assert_eq!(acf(&v, 3).unwrap()[0], 1.0);
        assert_eq!(pacf(&v, 3).unwrap()[0], 1.0);
    }

    #[test]
    fn acf_zero_variance_error() {
        assert!(acf(&[2.0; 10], 2).is_err());
    }

    #[test]
    fn acf_lag_too_large() {
        assert!(acf(&[1.0, 2.0, 3.0], 3).is_err());
    }

    #[test]
    fn white_noise_acf_within_band() {
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let band = 3.0 / (n as f64).sqrt();
        for (k, r) in acf(&v, 20).unwrap().iter().enumerate().skip(1) {
            assert!(r.abs() < band, "lag {k}: {r}");
        }
    }

    #[test]
    fn ar2_pacf_cuts_off_after_two() {
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v = vec![0.0f64; n + 200];
        for t in 2..v.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            v[t] = 0.6 * v[t - 1] + 0.25 * v[t - 2] + e;
        }
        let v = &v[200..];
        let p = pacf(v, 15).unwrap();
        let band = 3.0 / (n as f64).sqrt();
        assert!(p[1] > 0.5);
        assert!((p[2] - 0.25).abs() < 0.05, "pacf[2] = {}", p[2]);
        for (k, r) in p.iter().enumerate().skip(3) {
            assert!(r.abs() < band, "lag {k}: {r}");
        }
    }

    #[test]
    fn pacf_lag_one_equals_acf_lag_one() {
        let v = [1.0, 3.0, 2.0, 5.0, 4.0, 6.0, 5.5];
        let a = acf(&v, 2).unwrap();
        let p = pacf(&v, 2).unwrap();
        assert!((a[1] - p[1]).abs() < 1e-15);
        // Lag 2 by the closed form for k = 2.
        let expected = (a[2] - a[1] * a[1]) / (1.0 - a[1] * a[1]);
        assert!((p[2] - expected).abs() < 1e-12);
    }

    #[test]
    fn naive_forecast_definition() {
        assert_eq!(naive_forecast(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0]);
        assert!(naive_forecast(&[1.0]).is_err());
        let flat = [4.0; 6];
        let pred = naive_forecast(&flat).unwrap();
        assert!(pred.iter().zip(&flat[1..]).all(|(p, y)| p == y));
    }
}
