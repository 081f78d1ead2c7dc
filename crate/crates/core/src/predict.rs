//! Monte-Carlo predictive distribution and its aleatoric/epistemic split.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::Pass;
use crate::nn::model::{split_head, Model, VARIANCE_FLOOR};

/// Passes used when the caller does not choose.
pub const DEFAULT_MC_SAMPLES: usize = 500;

/// Per-pass means and variances, stored row-major as `[T, n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSamples {
    t: usize,
    n: usize,
    mu: Vec<f64>,
    sigma2: Vec<f64>,
}

impl PredictiveSamples {
    pub fn new(t: usize, n: usize, mu: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if t == 0 {
            return Err(Error::config("at least one pass is required"));
        }
        if mu.len() != t * n || sigma2.len() != t * n {
            return Err(Error::Shape {
                expected: format!("{t} x {n} values"),
                got: format!("{} means, {} variances", mu.len(), sigma2.len()),
            });
        }
        if mu.iter().chain(&sigma2).any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite predictive samples"));
        }
        if sigma2.iter().any(|v| *v < 0.0) {
            return Err(Error::numerical("negative predictive variance"));
        }
        Ok(Self { t, n, mu, sigma2 })
    }

    /// Number of passes `T`.
    pub fn passes(&self) -> usize {
        self.t
    }

    /// Number of points `n`.
    pub fn points(&self) -> usize {
        self.n
    }

    pub fn mu_row(&self, pass: usize) -> &[f64] {
        &self.mu[pass * self.n..(pass + 1) * self.n]
    }

    pub fn sigma2_row(&self, pass: usize) -> &[f64] {
        &self.sigma2[pass * self.n..(pass + 1) * self.n]
    }
}

/// Pointwise summary in scaled units (variances in units²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub mean: Vec<f64>,
    pub aleatoric: Vec<f64>,
    pub epistemic: Vec<f64>,
    pub total: Vec<f64>,
}

impl UncertaintyReport {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn total_std(&self) -> Vec<f64> {
        self.total.iter().map(|v| v.sqrt()).collect()
    }
}

/// `T` forward passes over the row-major windows in `inputs`. The backbone
/// runs once in evaluation mode; only the output layer is resampled.
pub fn mc_predict(model: &Model, inputs: &[f64], t: usize, rng: &mut dyn RngCore) -> Result<PredictiveSamples> {
    if t == 0 {
        return Err(Error::config("mc_samples must be at least 1"));
    }
    let x = model.input(inputs)?;
    let n = x.dim(0)?;
    let features = {
        let mut pass = Pass::eval(&mut *rng);
        model.features(&x, &mut pass)?
    };
    let mut mu = Vec::with_capacity(t * n);
    let mut sigma2 = Vec::with_capacity(t * n);
    for _ in 0..t {
        let out = model.head(&features, &mut *rng)?;
        let (mean, var) = split_head(&out.raw)?;
        mu.extend(mean.flatten_all()?.to_vec1::<f64>()?);
        match var {
            Some(v) => sigma2.extend(v.flatten_all()?.to_vec1::<f64>()?),
            None => sigma2.extend(std::iter::repeat(VARIANCE_FLOOR).take(n)),
        }
    }
    PredictiveSamples::new(t, n, mu, sigma2)
}

/// `aleatoric = mean_t σ²_t`, `epistemic = mean_t (μ_t − μ̄)²` (population
/// variance), `total = aleatoric + epistemic`.
pub fn decompose_uncertainty(samples: &PredictiveSamples) -> UncertaintyReport {
    let (t, n) = (samples.t, samples.n);
    let tf = t as f64;
    let mut mean = vec![0.0; n];
    let mut aleatoric = vec![0.0; n];
    for p in 0..t {
        for (i, (m, s)) in samples.mu_row(p).iter().zip(samples.sigma2_row(p)).enumerate() {
            mean[i] += m;
            aleatoric[i] += s;
        }
    }
    mean.iter_mut().for_each(|m| *m /= tf);
    aleatoric.iter_mut().for_each(|a| *a /= tf);
    let mut epistemic = vec![0.0; n];
    for p in 0..t {
        for (i, m) in samples.mu_row(p).iter().enumerate() {
            epistemic[i] += (m - mean[i]).powi(2);
        }
    }
    epistemic.iter_mut().for_each(|e| *e /= tf);
    let total = aleatoric.iter().zip(&epistemic).map(|(a, e)| a + e).collect();
    UncertaintyReport {
        mean,
        aleatoric,
        epistemic,
        total,
    }
}
