//! Invertible maps with tractable log-determinants, applied row-wise to
//! `[batch, dim]` tensors.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::Dense;
use crate::nn::params::{tensor, Init, ParamStore};

/// Shape of a coupling flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    /// Number of affine coupling steps.
    pub n_steps: usize,
    /// Hidden widths of each coupling conditioner (tanh activations).
    pub hidden_sizes: Vec<usize>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            n_steps: 2,
            hidden_sizes: vec![50, 50],
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.contains(&0) {
            return Err(Error::config("flow hidden sizes must be positive"));
        }
        Ok(())
    }
}

/// Output of a flow: the transformed rows and `log |det J|` per row.
#[derive(Debug, Clone)]
pub struct FlowOutput {
    pub value: Tensor,
    pub log_det: Tensor,
}

fn check_dim(z: &Tensor, dim: usize) -> Result<usize> {
    match z.dims() {
        [b, d] if *d == dim => Ok(*b),
        other => Err(Error::Shape {
            expected: format!("[batch, {dim}]"),
            got: format!("{other:?}"),
        }),
    }
}

/// `y = z * exp(log_scale) + shift`, elementwise.
#[derive(Debug, Clone)]
pub struct ElementwiseAffine {
    pub shift: Tensor,
    pub log_scale: Tensor,
    dim: usize,
}

impl ElementwiseAffine {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, shift: f64, log_scale: f64) -> Result<Self> {
        Ok(Self {
            shift: store.var(format!("{name}.shift"), &[dim], Init::Const(shift))?,
            log_scale: store.var(format!("{name}.log_scale"), &[dim], Init::Const(log_scale))?,
            dim,
        })
    }

    pub fn forward(&self, z: &Tensor) -> Result<FlowOutput> {
        let b = check_dim(z, self.dim)?;
        let value = z
            .broadcast_mul(&self.log_scale.exp()?)?
            .broadcast_add(&self.shift)?;
        let log_det = self.log_scale.sum_all()?.broadcast_as(b)?.contiguous()?;
        Ok(FlowOutput { value, log_det })
    }

    pub fn inverse(&self, y: &Tensor) -> Result<FlowOutput> {
        let b = check_dim(y, self.dim)?;
        let value = y
            .broadcast_sub(&self.shift)?
            .broadcast_mul(&self.log_scale.neg()?.exp()?)?;
        let log_det = self.log_scale.sum_all()?.neg()?.broadcast_as(b)?.contiguous()?;
        Ok(FlowOutput { value, log_det })
    }
}

/// Affine coupling step. Coordinates where `mask == 1` pass through and
/// condition a scale and shift for the others:
/// `y = m*z + (1-m) * (z * exp(s(m*z)) + t(m*z))`.
///
/// The scale and shift heads start at zero, so a fresh step is the identity.
#[derive(Debug, Clone)]
pub struct AffineCoupling {
    mask: Tensor,
    complement: Tensor,
    hidden: Vec<Dense>,
    scale: Dense,
    shift: Dense,
    dim: usize,
}

impl AffineCoupling {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden_sizes: &[usize], parity: usize) -> Result<Self> {
        let mask_v: Vec<f64> = (0..dim)
            .map(|i| if (i + parity) % 2 == 0 { 1.0 } else { 0.0 })
            .collect();
        let comp_v: Vec<f64> = mask_v.iter().map(|m| 1.0 - m).collect();
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut width = dim;
        for (i, &h) in hidden_sizes.iter().enumerate() {
            hidden.push(Dense::new(store, &format!("{name}.hidden{i}"), width, h)?);
            width = h;
        }
        Ok(Self {
            mask: tensor(mask_v, &[dim])?,
            complement: tensor(comp_v, &[dim])?,
            hidden,
            scale: Dense::zeroed(store, &format!("{name}.scale"), width, dim)?,
            shift: Dense::zeroed(store, &format!("{name}.shift"), width, dim)?,
            dim,
        })
    }

    fn conditioner(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut h = z.broadcast_mul(&self.mask)?;
        for layer in &self.hidden {
            h = layer.forward(&h)?.tanh()?;
        }
        let s = self.scale.forward(&h)?.broadcast_mul(&self.complement)?;
        let t = self.shift.forward(&h)?.broadcast_mul(&self.complement)?;
        Ok((s, t))
    }

    pub fn forward(&self, z: &Tensor) -> Result<FlowOutput> {
        check_dim(z, self.dim)?;
        let (s, t) = self.conditioner(z)?;
        let value = ((z * s.exp()?)? + t)?;
        Ok(FlowOutput {
            value,
            log_det: s.sum(1)?,
        })
    }

    pub fn inverse(&self, y: &Tensor) -> Result<FlowOutput> {
        check_dim(y, self.dim)?;
        // Masked coordinates are unchanged by the forward map, so the
        // conditioner sees the same input in both directions.
        let (s, t) = self.conditioner(y)?;
        let value = ((y - t)? * s.neg()?.exp()?)?;
        Ok(FlowOutput {
            value,
            log_det: s.sum(1)?.neg()?,
        })
    }
}

/// Optional elementwise affine base followed by coupling steps with
/// alternating masks.
#[derive(Debug, Clone)]
pub struct FlowStack {
    base: Option<ElementwiseAffine>,
    steps: Vec<AffineCoupling>,
    dim: usize,
}

impl FlowStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        config: &FlowConfig,
        base: Option<(f64, f64)>,
    ) -> Result<Self> {
        config.validate()?;
        let base = match base {
            Some((shift, log_scale)) => Some(ElementwiseAffine::new(
                store,
                &format!("{name}.base"),
                dim,
                shift,
                log_scale,
            )?),
            None => None,
        };
        let steps = (0..config.n_steps)
            .map(|i| AffineCoupling::new(store, &format!("{name}.step{i}"), dim, &config.hidden_sizes, i % 2))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { base, steps, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn forward(&self, z: &Tensor) -> Result<FlowOutput> {
        let b = check_dim(z, self.dim)?;
        let mut value = z.clone();
        let mut log_det = Tensor::zeros(b, z.dtype(), z.device())?;
        if let Some(base) = &self.base {
            let out = base.forward(&value)?;
            value = out.value;
            log_det = (log_det + out.log_det)?;
        }
        for step in &self.steps {
            let out = step.forward(&value)?;
            value = out.value;
            log_det = (log_det + out.log_det)?;
        }
        Ok(FlowOutput { value, log_det })
    }

    pub fn inverse(&self, y: &Tensor) -> Result<FlowOutput> {
        let b = check_dim(y, self.dim)?;
        let mut value = y.clone();
        let mut log_det = Tensor::zeros(b, y.dtype(), y.device())?;
        for step in self.steps.iter().rev() {
            let out = step.inverse(&value)?;
            value = out.value;
            log_det = (log_det + out.log_det)?;
        }
        if let Some(base) = &self.base {
            let out = base.inverse(&value)?;
            value = out.value;
            log_det = (log_det + out.log_det)?;
        }
        Ok(FlowOutput { value, log_det })
    }
}
