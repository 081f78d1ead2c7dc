//! Prior families and the KL penalty each contributes to the objective.
//!
//! All functions return the penalty that is *added* to the loss, summed over
//! weights, for a factorized Gaussian posterior whose mean row `i` is scaled
//! by `z[i]` (pass `None` for `z = 1`):
//!
//! | prior           | per-weight penalty                                              |
//! |-----------------|-----------------------------------------------------------------|
//! | standard normal | `½ (−log σ² + σ² + z²μ² − 1)`                                   |
//! | standard Cauchy | `log(π/2) + ½ (−log σ² + σ² + z²μ²)`                            |
//! | log-uniform     | `−(k₁ sigmoid(k₂ + k₃ log τ) − ½ log(1 + 1/τ) + C)`, `τ = σ²/(zμ)²` |
//!
//! The normal row is the exact KL divergence. The Cauchy row is a
//! closed-form surrogate, not the exact divergence. The log-uniform row is the
//! usual sigmoid approximation of the (improper) log-uniform divergence,
//! normalized so the penalty vanishes as `τ → ∞`.

use std::f64::consts::PI;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::layers::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    StandardNormal,
    StandardCauchy,
    LogUniform,
}

impl Prior {
    pub const ALL: [Prior; 3] = [Prior::StandardNormal, Prior::StandardCauchy, Prior::LogUniform];

    pub fn as_str(&self) -> &'static str {
        match self {
            Prior::StandardNormal => "standard_normal",
            Prior::StandardCauchy => "standard_cauchy",
            Prior::LogUniform => "log_uniform",
        }
    }

    pub fn kl(
        &self,
        posterior: &GaussianPosterior,
        z: Option<&Tensor>,
        constants: &LogUniformConstants,
    ) -> Result<Tensor> {
        match self {
            Prior::StandardNormal => kl_standard_normal(posterior, z),
            Prior::StandardCauchy => kl_standard_cauchy(posterior, z),
            Prior::LogUniform => kl_log_uniform(posterior, z, constants),
        }
    }
}

impl std::str::FromStr for Prior {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Prior::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| crate::error::Error::config(format!("unknown prior {s:?}")))
    }
}

/// Constants of the log-uniform approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogUniformConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub c: f64,
    /// Upper clamp on `τ`, reached when the posterior mean is zero.
    pub tau_cap: f64,
}

impl Default for LogUniformConstants {
    fn default() -> Self {
        Self {
            k1: 0.63576,
            k2: 1.87320,
            k3: 1.48695,
            c: -0.63576,
            tau_cap: 1e8,
        }
    }
}

/// Mean-field Gaussian over an `[in, out]` weight matrix, `σ = softplus(ρ)`.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mu: Tensor,
    pub rho: Tensor,
}

impl GaussianPosterior {
    pub fn sigma(&self) -> Result<Tensor> {
        softplus(&self.rho)
    }

    /// Posterior means with row `i` multiplied by `z[i]`.
    pub fn scaled_mean(&self, z: Option<&Tensor>) -> Result<Tensor> {
        Ok(match z {
            Some(z) => self.mu.broadcast_mul(&z.reshape((z.elem_count(), 1))?)?,
            None => self.mu.clone(),
        })
    }
}

/// Inverse of softplus, for choosing `ρ` from a target `σ`.
pub fn rho_for_sigma(sigma: f64) -> f64 {
    sigma.exp_m1().ln()
}

pub fn kl_standard_normal(posterior: &GaussianPosterior, z: Option<&Tensor>) -> Result<Tensor> {
    let var = posterior.sigma()?.sqr()?;
    let mean2 = posterior.scaled_mean(z)?.sqr()?;
    let per = ((var.log()?.neg()? + &var)? + mean2)?.affine(0.5, -0.5)?;
    Ok(per.sum_all()?)
}

pub fn kl_standard_cauchy(posterior: &GaussianPosterior, z: Option<&Tensor>) -> Result<Tensor> {
    let var = posterior.sigma()?.sqr()?;
    let mean2 = posterior.scaled_mean(z)?.sqr()?;
    let per = ((var.log()?.neg()? + &var)? + mean2)?.affine(0.5, (PI / 2.0).ln())?;
    Ok(per.sum_all()?)
}

pub fn kl_log_uniform(
    posterior: &GaussianPosterior,
    z: Option<&Tensor>,
    k: &LogUniformConstants,
) -> Result<Tensor> {
    let var = posterior.sigma()?.sqr()?;
    let mean2 = posterior.scaled_mean(z)?.sqr()?;
    let floor = var.affine(1.0 / k.tau_cap, 0.0)?;
    let log_tau = (var.log()? - mean2.maximum(&floor)?.log()?)?;
    let fit = sigmoid(&log_tau.affine(k.k3, k.k2)?)?.affine(k.k1, k.c)?;
    let neg_kl = (fit - softplus(&log_tau.neg()?)?.affine(0.5, 0.0)?)?;
    Ok(neg_kl.sum_all()?.neg()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{scalar_of, tensor};

    fn post(mu: f64, sigma: f64, n: usize) -> GaussianPosterior {
        GaussianPosterior {
            mu: tensor(vec![mu; n], &[n, 1]).unwrap(),
            rho: tensor(vec![rho_for_sigma(sigma); n], &[n, 1]).unwrap(),
        }
    }

    #[test]
    fn rho_inverts_softplus() {
        let p = post(0.0, 0.05, 1);
        assert!((scalar_of(&p.sigma().unwrap().sum_all().unwrap()).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn normal_matches_prior_gives_zero() {
        for zv in [0.3, 1.0, 7.0] {
            let z = tensor(vec![zv; 3], &[3]).unwrap();
            let kl = kl_standard_normal(&post(0.0, 1.0, 3), Some(&z)).unwrap();
            assert!(scalar_of(&kl).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn normal_unit_mean() {
        let kl = kl_standard_normal(&post(1.0, 1.0, 4), None).unwrap();
        assert!((scalar_of(&kl).unwrap() - 4.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn cauchy_at_standard_posterior() {
        let kl = kl_standard_cauchy(&post(0.0, 1.0, 1), None).unwrap();
        assert!((scalar_of(&kl).unwrap() - ((PI / 2.0).ln() + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn cauchy_z_mu_symmetry() {
        let a = GaussianPosterior {
            mu: tensor(vec![2.0, -1.0], &[2, 1]).unwrap(),
            rho: tensor(vec![0.1, -0.3], &[2, 1]).unwrap(),
        };
        let z = tensor(vec![0.5, 3.0], &[2]).unwrap();
        let b = GaussianPosterior {
            mu: tensor(vec![0.5, 3.0], &[2, 1]).unwrap(),
            rho: a.rho.clone(),
        };
        let zb = tensor(vec![2.0, -1.0], &[2]).unwrap();
        let ka = scalar_of(&kl_standard_cauchy(&a, Some(&z)).unwrap()).unwrap();
        let kb = scalar_of(&kl_standard_cauchy(&b, Some(&zb)).unwrap()).unwrap();
        assert!((ka - kb).abs() < 1e-12);
    }

    #[test]
    fn cauchy_finite_over_domain() {
        for mu in [-1e3, -1.0, 0.0, 1e-8, 5.0] {
            for s in [1e-6, 0.01, 1.0, 50.0] {
                let v = scalar_of(&kl_standard_cauchy(&post(mu, s, 1), None).unwrap()).unwrap();
                assert!(v.is_finite(), "mu {mu} sigma {s}");
            }
        }
    }

    #[test]
    fn log_uniform_limits() {
        let k = LogUniformConstants::default();
        // tau -> infinity: mean zero is clamped at the cap, penalty ~ 0.
        let big = scalar_of(&kl_log_uniform(&post(0.0, 1.0, 1), None, &k).unwrap()).unwrap();
        assert!(big.is_finite());
        assert!(big.abs() < 1e-4, "{big}");
        let huge = scalar_of(&kl_log_uniform(&post(1e-12, 1.0, 1), None, &k).unwrap()).unwrap();
        assert!(huge.abs() < 1e-4);
        // tau -> 0: the penalty grows without bound.
        let mut last = 0.0;
        for tau in [1e-2f64, 1e-4, 1e-8, 1e-12] {
            let sigma: f64 = tau.sqrt();
            let v = scalar_of(&kl_log_uniform(&post(1.0, sigma, 1), None, &k).unwrap()).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(last > 13.0);
    }

    #[test]
    fn log_uniform_formula_point() {
        let k = LogUniformConstants::default();
        // tau = 1: -(k1 sigmoid(k2) - ½ log 2 + C).
        let expected = -(k.k1 / (1.0 + (-k.k2).exp()) - 0.5 * 2f64.ln() + k.c);
        let v = scalar_of(&kl_log_uniform(&post(0.3, 0.3, 1), None, &k).unwrap()).unwrap();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn prior_names_round_trip() {
        for p in Prior::ALL {
            assert_eq!(p.as_str().parse::<Prior>().unwrap(), p);
        }
    }
}
