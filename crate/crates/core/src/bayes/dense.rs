//! Variational dense layer: a factorized Gaussian over the weight matrix,
//! sampled with one of three estimators.
//!
//! * `Rt`: one weight draw `W = μ + σ ε` shared by the batch.
//! * `Flipout`: one shared perturbation `ΔW = σ ε`, decorrelated per example
//!   with random sign vectors, `x μ + ((x ∘ s) ΔW) ∘ r`.
//! * `Mnf`: the weight means are row-scaled by a latent `z ~ q(z)` given by a
//!   normalizing flow, `W = diag(z) μ + σ ε`. An auxiliary flow `r(z | W)`
//!   supplies the bound on the otherwise intractable KL term.
//!
//! Biases are point estimates.

use std::f64::consts::PI;

use candle_core::{Tensor, D};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::flow::{FlowConfig, FlowStack};
use super::prior::{rho_for_sigma, GaussianPosterior, LogUniformConstants, Prior};
use crate::error::{Error, Result};
use crate::nn::params::{tensor, Init, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rt,
    Flipout,
    Mnf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rt, Method::Flipout, Method::Mnf];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Rt => "rt",
            Method::Flipout => "flipout",
            Method::Mnf => "mnf",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown method {s:?}")))
    }
}

/// Settings of a variational layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationalConfig {
    pub method: Method,
    pub prior: Prior,
    /// Initial posterior standard deviation of every weight.
    pub sigma_init: f64,
    /// `q(z)` coupling flow (MNF only).
    pub flow: FlowConfig,
    /// Auxiliary `r(z | W)` coupling flow (MNF only).
    pub aux_flow: FlowConfig,
    /// Initial shift and log-scale of the elementwise base map of `q(z)`.
    pub z_shift_init: f64,
    pub z_log_scale_init: f64,
    pub log_uniform: LogUniformConstants,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        Self {
            method: Method::Mnf,
            prior: Prior::StandardNormal,
            sigma_init: 0.05,
            flow: FlowConfig::default(),
            aux_flow: FlowConfig::default(),
            z_shift_init: 1.0,
            z_log_scale_init: 0.1f64.ln(),
            log_uniform: LogUniformConstants::default(),
        }
    }
}

impl VariationalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return Err(Error::config("sigma_init must be positive"));
        }
        self.flow.validate()?;
        self.aux_flow.validate()
    }
}

/// Every random draw consumed by one forward pass. Supplying it explicitly
/// makes the pass a deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct LayerNoise {
    /// Weight noise, `[in, out]`.
    pub eps: Tensor,
    /// Flipout sign vectors, `[batch, in]` and `[batch, out]`.
    pub signs: Option<(Tensor, Tensor)>,
    /// Base noise of `q(z)`, `[1, in]`.
    pub z_eps: Option<Tensor>,
}

/// The latent draw of an MNF pass.
#[derive(Debug, Clone)]
pub struct LatentSample {
    pub z: Tensor,
    pub base: Tensor,
    pub log_det: Tensor,
}

/// Result of one stochastic forward pass.
#[derive(Debug, Clone)]
pub struct LayerSample {
    pub output: Tensor,
    /// Sampled weight matrix (RT and MNF) or perturbation `ΔW` (Flipout).
    pub weight: Tensor,
    pub latent: Option<LatentSample>,
}

#[derive(Debug, Clone)]
struct Auxiliary {
    flow: FlowStack,
    c: Tensor,
    b1: Tensor,
    b2: Tensor,
}

#[derive(Debug, Clone)]
pub struct VariationalDense {
    pub posterior: GaussianPosterior,
    pub bias: Tensor,
    config: VariationalConfig,
    q_flow: Option<FlowStack>,
    aux: Option<Auxiliary>,
    in_dim: usize,
    out_dim: usize,
}

fn gaussian_vec(rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

fn sign_vec(rng: &mut dyn RngCore, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// `Σ log N(x; 0, 1)` over each row.
fn standard_log_density(x: &Tensor) -> Result<Tensor> {
    let d = x.dim(D::Minus1)? as f64;
    Ok(x.sqr()?.sum(D::Minus1)?.affine(-0.5, -0.5 * d * (2.0 * PI).ln())?)
}

impl VariationalDense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        config: &VariationalConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mu = store.var(
            format!("{name}.mu"),
            &[in_dim, out_dim],
            Init::Normal {
                mean: 0.0,
                std: 1.0 / (in_dim as f64).sqrt(),
            },
        )?;
        let rho = store.var(
            format!("{name}.rho"),
            &[in_dim, out_dim],
            Init::Const(rho_for_sigma(config.sigma_init)),
        )?;
        let bias = store.var(format!("{name}.bias"), &[out_dim], Init::Zeros)?;
        let (q_flow, aux) = if config.method == Method::Mnf {
            let q = FlowStack::new(
                store,
                &format!("{name}.qz"),
                in_dim,
                &config.flow,
                Some((config.z_shift_init, config.z_log_scale_init)),
            )?;
            let flow = FlowStack::new(store, &format!("{name}.rz"), in_dim, &config.aux_flow, None)?;
            let small = Init::Normal { mean: 0.0, std: 0.1 };
            let aux = Auxiliary {
                flow,
                c: store.var(format!("{name}.rz.c"), &[out_dim, 1], Init::Normal {
                    mean: 0.0,
                    std: 1.0 / (out_dim as f64).sqrt(),
                })?,
                b1: store.var(format!("{name}.rz.b1"), &[in_dim], small)?,
                b2: store.var(format!("{name}.rz.b2"), &[in_dim], small)?,
            };
            (Some(q), Some(aux))
        } else {
            (None, None)
        };
        Ok(Self {
            posterior: GaussianPosterior { mu, rho },
            bias,
            config: config.clone(),
            q_flow,
            aux,
            in_dim,
            out_dim,
        })
    }

    pub fn method(&self) -> Method {
        self.config.method
    }

    pub fn config(&self) -> &VariationalConfig {
        &self.config
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Draws the noise for a batch of `batch` rows.
    pub fn sample_noise(&self, batch: usize, rng: &mut dyn RngCore) -> Result<LayerNoise> {
        let eps = tensor(gaussian_vec(rng, self.in_dim * self.out_dim), &[self.in_dim, self.out_dim])?;
        let signs = if self.config.method == Method::Flipout {
            let s = tensor(sign_vec(rng, batch * self.in_dim), &[batch, self.in_dim])?;
            let r = tensor(sign_vec(rng, batch * self.out_dim), &[batch, self.out_dim])?;
            Some((s, r))
        } else {
            None
        };
        let z_eps = if self.config.method == Method::Mnf {
            Some(tensor(gaussian_vec(rng, self.in_dim), &[1, self.in_dim])?)
        } else {
            None
        };
        Ok(LayerNoise { eps, signs, z_eps })
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        match x.dims() {
            [n, d] if *d == self.in_dim => Ok(*n),
            other => Err(Error::Shape {
                expected: format!("[batch, {}]", self.in_dim),
                got: format!("{other:?}"),
            }),
        }
    }

    pub fn forward(&self, x: &Tensor, rng: &mut dyn RngCore) -> Result<LayerSample> {
        let n = self.check_input(x)?;
        let noise = self.sample_noise(n, rng)?;
        self.forward_with_noise(x, &noise)
    }

    pub fn forward_with_noise(&self, x: &Tensor, noise: &LayerNoise) -> Result<LayerSample> {
        let n = self.check_input(x)?;
        let sigma = self.posterior.sigma()?;
        let delta = (&sigma * &noise.eps)?;
        match self.config.method {
            Method::Rt => {
                let weight = (&self.posterior.mu + &delta)?;
                let output = x.matmul(&weight)?.broadcast_add(&self.bias)?;
                Ok(LayerSample {
                    output,
                    weight,
                    latent: None,
                })
            }
            Method::Flipout => {
                let (s, r) = noise
                    .signs
                    .as_ref()
                    .ok_or_else(|| Error::config("flipout pass needs sign vectors"))?;
                if s.dims() != [n, self.in_dim] || r.dims() != [n, self.out_dim] {
                    return Err(Error::Shape {
                        expected: format!("signs [{n}, {}] and [{n}, {}]", self.in_dim, self.out_dim),
                        got: format!("{:?} and {:?}", s.dims(), r.dims()),
                    });
                }
                let mean = x.matmul(&self.posterior.mu)?;
                let perturb = ((x * s)?.matmul(&delta)? * r)?;
                let output = (mean + perturb)?.broadcast_add(&self.bias)?;
                Ok(LayerSample {
                    output,
                    weight: delta,
                    latent: None,
                })
            }
            Method::Mnf => {
                let z_eps = noise
                    .z_eps
                    .as_ref()
                    .ok_or_else(|| Error::config("mnf pass needs latent noise"))?;
                let flow = self.q_flow.as_ref().expect("mnf layer has a flow");
                let out = flow.forward(z_eps)?;
                let z = out.value;
                let scaled = self.posterior.scaled_mean(Some(&z))?;
                let weight = (scaled + &delta)?;
                let output = x.matmul(&weight)?.broadcast_add(&self.bias)?;
                Ok(LayerSample {
                    output,
                    weight,
                    latent: Some(LatentSample {
                        z,
                        base: z_eps.clone(),
                        log_det: out.log_det,
                    }),
                })
            }
        }
    }

    /// KL penalty of a pass; for MNF the negated bound of [`Self::mnf_kl_bound`].
    pub fn kl(&self, sample: &LayerSample) -> Result<Tensor> {
        match self.config.method {
            Method::Rt | Method::Flipout => self.config.prior.kl(&self.posterior, None, &self.config.log_uniform),
            Method::Mnf => Ok(self.mnf_kl_bound(sample)?.neg()?),
        }
    }

    /// Single-sample estimate of
    /// `−KL(q(W|z) ‖ p(W)) − log q(z) + log r(z | W)`,
    /// which lower-bounds `−KL(q(W) ‖ p(W))`.
    pub fn mnf_kl_bound(&self, sample: &LayerSample) -> Result<Tensor> {
        let latent = sample
            .latent
            .as_ref()
            .ok_or_else(|| Error::config("kl bound needs an mnf sample"))?;
        let aux = self.aux.as_ref().ok_or_else(|| Error::config("layer is not mnf"))?;
        let kl_cond = self
            .config
            .prior
            .kl(&self.posterior, Some(&latent.z), &self.config.log_uniform)?;
        let log_q = (standard_log_density(&latent.base)? - &latent.log_det)?.sum_all()?;
        let log_r = self.log_aux_density(aux, &latent.z, &sample.weight)?;
        Ok(((kl_cond.neg()? - log_q)? + log_r)?)
    }

    fn log_aux_density(&self, aux: &Auxiliary, z: &Tensor, weight: &Tensor) -> Result<Tensor> {
        let mapped = aux.flow.forward(z)?;
        let a = weight.matmul(&aux.c)?.tanh()?.reshape((1, self.in_dim))?;
        let mean = a.broadcast_mul(&aux.b1)?;
        let log_var = a.broadcast_mul(&aux.b2)?;
        let resid = (mapped.value - mean)?;
        let quad = (resid.sqr()? * log_var.neg()?.exp()?)?;
        let per = (log_var + quad)?.affine(-0.5, -0.5 * (2.0 * PI).ln())?;
        Ok((per.sum_all()? + mapped.log_det.sum_all()?)?)
    }
}

/// Mean Gaussian negative log-likelihood. `var` must be positive.
pub fn gaussian_nll(mean: &Tensor, var: &Tensor, y: &Tensor) -> Result<Tensor> {
    let resid2 = (y - mean)?.sqr()?;
    let per = ((var.log()? + (resid2 / var)?)?).affine(0.5, 0.5 * (2.0 * PI).ln())?;
    Ok(per.mean_all()?)
}

/// `nll + kl_weight * kl`.
pub fn elbo_loss(nll: &Tensor, kl: &Tensor, kl_weight: f64) -> Result<Tensor> {
    Ok((nll + kl.affine(kl_weight, 0.0)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::scalar_of;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(method: Method, in_dim: usize, out_dim: usize, seed: u64) -> (ParamStore, VariationalDense) {
        let mut store = ParamStore::new(seed);
        let cfg = VariationalConfig {
            method,
            flow: FlowConfig {
                n_steps: 2,
                hidden_sizes: vec![6],
            },
            aux_flow: FlowConfig {
                n_steps: 2,
                hidden_sizes: vec![6],
            },
            ..Default::default()
        };
        let l = VariationalDense::new(&mut store, "v", in_dim, out_dim, &cfg).unwrap();
        (store, l)
    }

    fn perturb_all(store: &ParamStore, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, var) in store.named() {
            let cur = var.flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let next: Vec<f64> = cur.iter().map(|v| v + rng.random_range(-scale..scale)).collect();
            var.set(&tensor(next, var.dims()).unwrap()).unwrap();
        }
    }

    fn input(n: usize, d: usize) -> Tensor {
        tensor((0..n * d).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect(), &[n, d]).unwrap()
    }

    #[test]
    fn output_shapes() {
        for m in Method::ALL {
            let (_s, l) = layer(m, 4, 2, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = l.forward(&input(3, 4), &mut rng).unwrap();
            assert_eq!(out.output.dims(), &[3, 2]);
            let kl = scalar_of(&l.kl(&out).unwrap()).unwrap();
            assert!(kl.is_finite());
        }
    }

    #[test]
    fn rt_weight_is_mean_plus_noise() {
        let (_s, l) = layer(Method::Rt, 3, 2, 2);
        let noise = LayerNoise {
            eps: Tensor::zeros((3, 2), crate::nn::params::DTYPE, &crate::nn::params::device()).unwrap(),
            signs: None,
            z_eps: None,
        };
        let out = l.forward_with_noise(&input(2, 3), &noise).unwrap();
        let expected = input(2, 3).matmul(&l.posterior.mu).unwrap();
        let d = (out.output - expected).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar_of(&d).unwrap() < 1e-14);
    }

    #[test]
    fn flipout_with_unit_signs_matches_reparameterization() {
        let (_s, rt) = layer(Method::Rt, 3, 2, 4);
        let (_t, fl) = layer(Method::Flipout, 3, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let eps = tensor(gaussian_vec(&mut rng, 6), &[3, 2]).unwrap();
        let ones = |r, c| tensor(vec![1.0; r * c], &[r, c]).unwrap();
        let a = rt
            .forward_with_noise(&input(4, 3), &LayerNoise { eps: eps.clone(), signs: None, z_eps: None })
            .unwrap();
        let b = fl
            .forward_with_noise(
                &input(4, 3),
                &LayerNoise {
                    eps,
                    signs: Some((ones(4, 3), ones(4, 2))),
                    z_eps: None,
                },
            )
            .unwrap();
        let d = (a.output - b.output).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar_of(&d).unwrap() < 1e-12);
    }

    #[test]
    fn mnf_identity_flows_reduce_to_conditional_kl() {
        // Fresh couplings are identities, so z = 1 + 0.1 ε and log q(z) has a
        // closed form.
        let (_s, l) = layer(Method::Mnf, 3, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = l.forward(&input(2, 3), &mut rng).unwrap();
        let latent = out.latent.as_ref().unwrap();
        let z = latent.z.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let e = latent.base.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (zi, ei) in z.iter().zip(&e) {
            assert!((zi - (1.0 + 0.1 * ei)).abs() < 1e-12);
        }
        let log_q: f64 = e.iter().map(|v| -0.5 * v * v - 0.5 * (2.0 * PI).ln()).sum::<f64>() - 3.0 * 0.1f64.ln();
        let kl_cond = scalar_of(&l.config.prior.kl(&l.posterior, Some(&latent.z), &l.config.log_uniform).unwrap()).unwrap();
        let aux = l.aux.as_ref().unwrap();
        let log_r = scalar_of(&l.log_aux_density(aux, &latent.z, &out.weight).unwrap()).unwrap();
        let bound = scalar_of(&l.mnf_kl_bound(&out).unwrap()).unwrap();
        assert!((bound - (-kl_cond - log_q + log_r)).abs() < 1e-10);
        assert!((scalar_of(&l.kl(&out).unwrap()).unwrap() + bound).abs() < 1e-12);
    }

    #[test]
    fn mnf_reduces_to_rt_when_latent_is_one() {
        // Pin q(z) to the constant 1 (scale exp(-40) ~ 0), then an MNF pass
        // must equal the RT pass with the same weight noise.
        let (s, l) = layer(Method::Mnf, 3, 2, 6);
        let (_t, rt) = layer(Method::Rt, 3, 2, 6);
        for (name, var) in s.named() {
            if name.ends_with("qz.base.log_scale") {
                var.set(&tensor(vec![-40.0; 3], &[3]).unwrap()).unwrap();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = l.sample_noise(2, &mut rng).unwrap();
        let a = l.forward_with_noise(&input(2, 3), &noise).unwrap();
        let b = rt.forward_with_noise(&input(2, 3), &noise).unwrap();
        let d = (a.output - b.output).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar_of(&d).unwrap() < 1e-12);
    }

    #[test]
    fn flipout_marginal_matches_reparameterization() {
        // For a single example, the flipout output distribution equals the
        // reparameterized one: compare both against N(x μ, Σ x² σ²) with KS.
        let (_s, l) = layer(Method::Flipout, 3, 1, 7);
        let x = tensor(vec![0.5, -1.0, 2.0], &[1, 3]).unwrap();
        let mean = scalar_of(&x.matmul(&l.posterior.mu).unwrap().sum_all().unwrap()).unwrap();
        let sd = 0.05 * (0.25f64 + 1.0 + 4.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut draws: Vec<f64> = (0..4000)
            .map(|_| {
                let o = l.forward(&x, &mut rng).unwrap().output;
                (scalar_of(&o.sum_all().unwrap()).unwrap() - mean) / sd
            })
            .collect();
        draws.sort_by(f64::total_cmp);
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let n = draws.len() as f64;
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = normal.cdf(*v);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value ~ 1.63 / sqrt(n).
        assert!(ks < 1.63 / n.sqrt(), "ks {ks}");
    }

    #[test]
    fn flipout_decorrelates_examples() {
        // Two identical rows share ΔW; sign flips make their perturbations
        // uncorrelated, whereas RT perturbations are identical.
        let (_s, l) = layer(Method::Flipout, 4, 1, 8);
        let x = tensor(vec![1.0, -0.5, 0.25, 2.0, 1.0, -0.5, 0.25, 2.0], &[2, 4]).unwrap();
        let mean = x.matmul(&l.posterior.mu).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for _ in 0..4000 {
            let o = l.forward(&x, &mut rng).unwrap().output.flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let (a, b) = (o[0] - mean[0], o[1] - mean[1]);
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
        let corr = sab / (saa * sbb).sqrt();
        assert!(corr.abs() < 0.1, "corr {corr}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        for method in Method::ALL {
            let (store, l) = layer(method, 3, 2, 10);
            perturb_all(&store, 20, 0.2);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let x = input(4, 3);
            let y = tensor(vec![0.3, -0.2, 1.0, 0.5], &[4, 1]).unwrap();
            let noise = l.sample_noise(4, &mut rng).unwrap();
            let loss = || -> Tensor {
                let s = l.forward_with_noise(&x, &noise).unwrap();
                let mean = s.output.narrow(1, 0, 1).unwrap();
                let var = crate::nn::layers::softplus(&s.output.narrow(1, 1, 1).unwrap())
                    .unwrap()
                    .affine(1.0, 1e-6)
                    .unwrap();
                let nll = gaussian_nll(&mean, &var, &y).unwrap();
                elbo_loss(&nll, &l.kl(&s).unwrap(), 0.1).unwrap()
            };
            let grads = loss().backward().unwrap();
            let h = 1e-6;
            for (name, var) in store.named() {
                let Some(g) = grads.get(var.as_tensor()) else {
                    panic!("{method:?}: no gradient for {name}");
                };
                let g = g.flatten_all().unwrap().to_vec1::<f64>().unwrap();
                let base = var.flatten_all().unwrap().to_vec1::<f64>().unwrap();
                for idx in [0, base.len() - 1] {
                    let mut up = base.clone();
                    up[idx] += h;
                    var.set(&tensor(up, var.dims()).unwrap()).unwrap();
                    let fu = scalar_of(&loss()).unwrap();
                    let mut dn = base.clone();
                    dn[idx] -= h;
                    var.set(&tensor(dn, var.dims()).unwrap()).unwrap();
                    let fd = scalar_of(&loss()).unwrap();
                    var.set(&tensor(base.clone(), var.dims()).unwrap()).unwrap();
                    let numeric = (fu - fd) / (2.0 * h);
                    let err = (numeric - g[idx]).abs() / (1.0 + numeric.abs());
                    assert!(err < 1e-5, "{method:?} {name}[{idx}]: {numeric} vs {}", g[idx]);
                }
            }
        }
    }

    #[test]
    fn nll_closed_form() {
        let m = tensor(vec![0.0, 1.0], &[2, 1]).unwrap();
        let v = tensor(vec![1.0, 4.0], &[2, 1]).unwrap();
        let y = tensor(vec![1.0, 1.0], &[2, 1]).unwrap();
        let got = scalar_of(&gaussian_nll(&m, &v, &y).unwrap()).unwrap();
        let l2p = (2.0 * PI).ln();
        let expected = 0.5 * (0.5 * (l2p + 1.0) + 0.5 * (l2p + 4f64.ln()));
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn method_parse() {
        assert_eq!("MNF".parse::<Method>().unwrap(), Method::Mnf);
        assert!("bbb".parse::<Method>().is_err());
    }
}
