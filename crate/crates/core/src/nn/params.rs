use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type of every tensor in the crate.
pub const DTYPE: DType = DType::F64;

pub fn device() -> Device {
    Device::Cpu
}

/// Builds a tensor of the crate's dtype from row-major data.
pub fn tensor(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
    Ok(Tensor::from_vec(data, shape, &device())?)
}

pub fn scalar_of(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DTYPE)?.to_scalar::<f64>()?)
}

/// Parameter initializer.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Glorot/Xavier uniform with explicit fans.
    Glorot { fan_in: usize, fan_out: usize },
    Normal { mean: f64, std: f64 },
}

/// Ordered collection of named trainable variables.
///
/// Initial values are drawn from a seeded stream, so the same configuration
/// and seed always yield the same parameters.
pub struct ParamStore {
    vars: Vec<(String, Var)>,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            vars: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Registers a new variable and returns a tensor view sharing its storage.
    pub fn var(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Result<Tensor> {
        let name = name.into();
        if self.vars.iter().any(|(n, _)| *n == name) {
            return Err(Error::config(format!("duplicate parameter name {name}")));
        }
        let count: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; count],
            Init::Const(c) => vec![c; count],
            Init::Glorot { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..count).map(|_| self.rng.random_range(-limit..limit)).collect()
            }
            Init::Normal { mean, std } => {
                let dist = Normal::new(mean, std).map_err(|e| Error::config(e.to_string()))?;
                (0..count).map(|_| dist.sample(&mut self.rng)).collect()
            }
        };
        let var = Var::from_tensor(&tensor(data, shape)?)?;
        let view = var.as_tensor().clone();
        self.vars.push((name, var));
        Ok(view)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn named(&self) -> &[(String, Var)] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.vars.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Detached copies of every value, in registration order.
    pub fn snapshot(&self) -> Result<Vec<Tensor>> {
        self.vars
            .iter()
            .map(|(_, v)| Ok(v.as_tensor().copy()?.detach()))
            .collect()
    }

    pub fn restore(&self, values: &[Tensor]) -> Result<()> {
        if values.len() != self.vars.len() {
            return Err(Error::Shape {
                expected: format!("{} tensors", self.vars.len()),
                got: values.len().to_string(),
            });
        }
        for ((_, var), value) in self.vars.iter().zip(values) {
            var.set(value)?;
        }
        Ok(())
    }

    pub fn export(&self) -> Result<Vec<NamedArray>> {
        self.vars
            .iter()
            .map(|(name, var)| {
                Ok(NamedArray {
                    name: name.clone(),
                    shape: var.dims().to_vec(),
                    data: var.as_tensor().flatten_all()?.to_vec1::<f64>()?,
                })
            })
            .collect()
    }

    /// Overwrites every variable from `arrays`, matched by name.
    pub fn import(&self, arrays: &[NamedArray]) -> Result<()> {
        if arrays.len() != self.vars.len() {
            return Err(Error::data(format!(
                "checkpoint holds {} arrays, model has {} parameters",
                arrays.len(),
                self.vars.len()
            )));
        }
        for (name, var) in &self.vars {
            let a = arrays
                .iter()
                .find(|a| &a.name == name)
                .ok_or_else(|| Error::data(format!("checkpoint lacks parameter {name}")))?;
            if a.shape != var.dims() {
                return Err(Error::Shape {
                    expected: format!("{name} {:?}", var.dims()),
                    got: format!("{:?}", a.shape),
                });
            }
            var.set(&tensor(a.data.clone(), &a.shape)?)?;
        }
        Ok(())
    }
}

/// A parameter array as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}
