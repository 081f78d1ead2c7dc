//! A backbone plus an output head, deterministic or variational.

use candle_core::Tensor;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::backbones::{Tcn, TcnConfig, Transformer, TransformerConfig, WaveNet, WaveNetConfig};
use super::layers::{softplus, Dense, Pass};
use super::params::{tensor, ParamStore};
use crate::bayes::{LayerSample, VariationalConfig, VariationalDense};
use crate::error::{Error, Result};

/// Lower bound added to every predicted variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackboneConfig {
    Wavenet(WaveNetConfig),
    Tcn(TcnConfig),
    Transformer(TransformerConfig),
}

impl BackboneConfig {
    pub fn name(&self) -> &'static str {
        match self {
            BackboneConfig::Wavenet(_) => "wavenet",
            BackboneConfig::Tcn(_) => "tcn",
            BackboneConfig::Transformer(_) => "transformer",
        }
    }

    /// Backbone `name` with default hyperparameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "wavenet" => Ok(BackboneConfig::Wavenet(WaveNetConfig::default())),
            "tcn" => Ok(BackboneConfig::Tcn(TcnConfig::default())),
            "transformer" => Ok(BackboneConfig::Transformer(TransformerConfig::default())),
            other => Err(Error::config(format!("unknown backbone {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BackboneConfig::Wavenet(c) => c.validate(),
            BackboneConfig::Tcn(c) => c.validate(),
            BackboneConfig::Transformer(c) => c.validate(),
        }
    }

    /// Hidden widths of the MNF flows that go with this backbone: three
    /// layers of 50 for WaveNet, two for the others.
    pub fn default_flow_hidden(&self) -> Vec<usize> {
        match self {
            BackboneConfig::Wavenet(_) => vec![50, 50, 50],
            _ => vec![50, 50],
        }
    }
}

/// Point heads emit `[n, 1]`; distributional heads emit `[n, 2]` holding the
/// mean and a raw variance that [`head_variance`] maps to a positive value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    Point,
    Distributional,
}

impl HeadMode {
    pub fn width(&self) -> usize {
        match self {
            HeadMode::Point => 1,
            HeadMode::Distributional => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window: usize,
    pub backbone: BackboneConfig,
    pub head: HeadMode,
    /// Present when the output layer is variational.
    #[serde(default)]
    pub variational: Option<VariationalConfig>,
}

impl ModelConfig {
    pub fn deterministic(backbone: BackboneConfig, window: usize) -> Self {
        Self {
            window,
            backbone,
            head: HeadMode::Point,
            variational: None,
        }
    }

    pub fn bayesian(backbone: BackboneConfig, window: usize, variational: VariationalConfig) -> Self {
        Self {
            window,
            backbone,
            head: HeadMode::Distributional,
            variational: Some(variational),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("window must be positive"));
        }
        self.backbone.validate()?;
        if let Some(v) = &self.variational {
            v.validate()?;
            if self.head != HeadMode::Distributional {
                return Err(Error::config("a variational output layer needs the distributional head"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Backbone {
    Wavenet(WaveNet),
    Tcn(Tcn),
    Transformer(Transformer),
}

#[derive(Debug, Clone)]
enum Output {
    Dense(Dense),
    Variational(Box<VariationalDense>),
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// `[n, 1]` or `[n, 2]`.
    pub raw: Tensor,
    /// Draw of the variational layer, if there is one.
    pub sample: Option<LayerSample>,
}

pub struct Model {
    config: ModelConfig,
    seed: u64,
    store: ParamStore,
    backbone: Backbone,
    output: Output,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.config)
            .field("seed", &self.seed)
            .field("parameters", &self.store.numel())
            .finish()
    }
}

impl Model {
    /// Builds a model with parameters drawn from `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(seed);
        let (backbone, feature_dim) = match &config.backbone {
            BackboneConfig::Wavenet(c) => {
                let b = WaveNet::new(&mut store, c, config.window)?;
                let d = b.feature_dim();
                (Backbone::Wavenet(b), d)
            }
            BackboneConfig::Tcn(c) => {
                let b = Tcn::new(&mut store, c, config.window)?;
                let d = b.feature_dim();
                (Backbone::Tcn(b), d)
            }
            BackboneConfig::Transformer(c) => {
                let b = Transformer::new(&mut store, c, config.window)?;
                let d = b.feature_dim();
                (Backbone::Transformer(b), d)
            }
        };
        let width = config.head.width();
        let output = match &config.variational {
            Some(v) => Output::Variational(Box::new(VariationalDense::new(&mut store, "output", feature_dim, width, v)?)),
            None => Output::Dense(Dense::new(&mut store, "output", feature_dim, width)?),
        };
        Ok(Self {
            config: config.clone(),
            seed,
            store,
            backbone,
            output,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn is_variational(&self) -> bool {
        matches!(self.output, Output::Variational(_))
    }

    pub fn variational_layer(&self) -> Option<&VariationalDense> {
        match &self.output {
            Output::Variational(v) => Some(v),
            Output::Dense(_) => None,
        }
    }

    /// The deterministic output layer, if the model has one.
    pub fn output_dense(&self) -> Option<&Dense> {
        match &self.output {
            Output::Dense(d) => Some(d),
            Output::Variational(_) => None,
        }
    }

    /// Turns a `[n, window]` row-major batch into a tensor.
    pub fn input(&self, rows: &[f64]) -> Result<Tensor> {
        let w = self.config.window;
        if rows.len() % w != 0 {
            return Err(Error::Shape {
                expected: format!("a multiple of window {w}"),
                got: rows.len().to_string(),
            });
        }
        tensor(rows.to_vec(), &[rows.len() / w, w])
    }

    /// Backbone output fed to the final layer, `[n, feature_dim]`.
    pub fn features(&self, x: &Tensor, pass: &mut Pass<'_>) -> Result<Tensor> {
        match &self.backbone {
            Backbone::Wavenet(b) => b.features(x),
            Backbone::Tcn(b) => b.features(x),
            Backbone::Transformer(b) => b.features(x, pass),
        }
    }

    /// Per-step convolutional activations, for WaveNet and TCN only.
    pub fn conv_sequence(&self, x: &Tensor) -> Result<Option<Tensor>> {
        match &self.backbone {
            Backbone::Wavenet(b) => Ok(Some(b.sequence_features(x)?)),
            Backbone::Tcn(b) => Ok(Some(b.sequence_features(x)?)),
            Backbone::Transformer(_) => Ok(None),
        }
    }

    /// Attention weights of every encoder block, for the Transformer only.
    pub fn attention(&self, x: &Tensor, pass: &mut Pass<'_>) -> Result<Option<Vec<Tensor>>> {
        match &self.backbone {
            Backbone::Transformer(b) => Ok(Some(b.features_with_attention(x, pass)?.1)),
            _ => Ok(None),
        }
    }

    /// Applies the final layer; a variational layer draws fresh weights from `rng`.
    pub fn head(&self, features: &Tensor, rng: &mut dyn RngCore) -> Result<ModelOutput> {
        match &self.output {
            Output::Dense(d) => Ok(ModelOutput {
                raw: d.forward(features)?,
                sample: None,
            }),
            Output::Variational(v) => {
                let sample = v.forward(features, rng)?;
                Ok(ModelOutput {
                    raw: sample.output.clone(),
                    sample: Some(sample),
                })
            }
        }
    }

    pub fn forward(&self, x: &Tensor, pass: &mut Pass<'_>) -> Result<ModelOutput> {
        let features = self.features(x, pass)?;
        self.head(&features, &mut *pass.rng)
    }

    /// KL penalty of a forward pass; zero for deterministic models.
    pub fn kl(&self, output: &ModelOutput) -> Result<Option<Tensor>> {
        match (&self.output, &output.sample) {
            (Output::Variational(v), Some(s)) => Ok(Some(v.kl(s)?)),
            _ => Ok(None),
        }
    }

    pub(crate) fn store_vars(&self) -> Vec<candle_core::Var> {
        self.store.vars()
    }
}

/// Splits raw head output into the mean `[n, 1]` and, for distributional
/// heads, the variance `[n, 1]`.
pub fn split_head(raw: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
    match raw.dims() {
        [_, 1] => Ok((raw.clone(), None)),
        [_, 2] => Ok((raw.narrow(1, 0, 1)?, Some(head_variance(&raw.narrow(1, 1, 1)?)?))),
        other => Err(Error::Shape {
            expected: "[n, 1] or [n, 2]".into(),
            got: format!("{other:?}"),
        }),
    }
}

/// `softplus(raw) + VARIANCE_FLOOR`.
pub fn head_variance(raw: &Tensor) -> Result<Tensor> {
    Ok(softplus(raw)?.affine(1.0, VARIANCE_FLOOR)?)
}

/// WaveNet with the given head.
pub fn build_wavenet(config: &WaveNetConfig, head: HeadMode, window: usize, seed: u64) -> Result<Model> {
    let mut cfg = ModelConfig::deterministic(BackboneConfig::Wavenet(config.clone()), window);
    cfg.head = head;
    Model::build(&cfg, seed)
}

/// TCN with the given head.
pub fn build_tcn(config: &TcnConfig, head: HeadMode, window: usize, seed: u64) -> Result<Model> {
    let mut cfg = ModelConfig::deterministic(BackboneConfig::Tcn(config.clone()), window);
    cfg.head = head;
    Model::build(&cfg, seed)
}

/// Transformer with the given head.
pub fn build_transformer(config: &TransformerConfig, head: HeadMode, window: usize, seed: u64) -> Result<Model> {
    let mut cfg = ModelConfig::deterministic(BackboneConfig::Transformer(config.clone()), window);
    cfg.head = head;
    Model::build(&cfg, seed)
}
