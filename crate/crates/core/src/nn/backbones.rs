//! The three deterministic sequence encoders. Each maps a batch of windows
//! `[batch, window]` to a feature matrix `[batch, feature_dim]` that feeds the
//! output layer.

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use super::layers::{dropout, sigmoid, CausalConv1d, Dense, LayerNorm, Lstm, MultiHeadAttention, Pass};
use super::params::{Init, ParamStore};
use crate::error::{Error, Result};

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

fn rate(name: &str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [0, 1), got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveNetConfig {
    pub n_blocks: usize,
    pub layers_per_block: usize,
    pub n_filters: usize,
    pub kernel_size: usize,
    pub dilation_base: usize,
}

impl Default for WaveNetConfig {
    fn default() -> Self {
        Self {
            n_blocks: 7,
            layers_per_block: 5,
            n_filters: 96,
            kernel_size: 2,
            dilation_base: 2,
        }
    }
}

impl WaveNetConfig {
    pub fn validate(&self) -> Result<()> {
        positive("wavenet n_blocks", self.n_blocks)?;
        positive("wavenet layers_per_block", self.layers_per_block)?;
        positive("wavenet n_filters", self.n_filters)?;
        positive("wavenet kernel_size", self.kernel_size)?;
        positive("wavenet dilation_base", self.dilation_base)
    }

    /// Dilation of every gated layer; restarts at 1 in each block.
    pub fn dilations(&self) -> Vec<usize> {
        (0..self.n_blocks)
            .flat_map(|_| (0..self.layers_per_block).map(|l| self.dilation_base.pow(l as u32)))
            .collect()
    }

    pub fn n_conv_layers(&self) -> usize {
        self.n_blocks * self.layers_per_block
    }

    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * self.dilations().iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcnConfig {
    pub nb_stacks: usize,
    pub nb_filters: usize,
    pub dilations: Vec<usize>,
    pub kernel_size: usize,
    pub recurrent_head_units: usize,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            nb_stacks: 1,
            nb_filters: 64,
            dilations: vec![1, 2, 4, 8, 16],
            kernel_size: 3,
            recurrent_head_units: 64,
        }
    }
}

impl TcnConfig {
    pub fn validate(&self) -> Result<()> {
        positive("tcn nb_stacks", self.nb_stacks)?;
        positive("tcn nb_filters", self.nb_filters)?;
        positive("tcn kernel_size", self.kernel_size)?;
        positive("tcn recurrent_head_units", self.recurrent_head_units)?;
        if self.dilations.is_empty() {
            return Err(Error::config("tcn dilations must not be empty"));
        }
        if !self.dilations.iter().all(|d| d.is_power_of_two()) {
            return Err(Error::config(format!(
                "tcn dilations must be powers of two: {:?}",
                self.dilations
            )));
        }
        if !self.dilations.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config(format!(
                "tcn dilations must be strictly increasing: {:?}",
                self.dilations
            )));
        }
        Ok(())
    }

    /// Two convolutions per residual block.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * (self.kernel_size - 1) * self.nb_stacks * self.dilations.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub key_dim: usize,
    pub num_heads: usize,
    pub attn_dropout: f64,
    pub ff_dim: usize,
    pub n_blocks: usize,
    pub mlp_head_units: usize,
    pub mlp_dropout: f64,
    /// Width of the embedded sequence the encoder blocks operate on.
    pub model_dim: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            key_dim: 256,
            num_heads: 8,
            attn_dropout: 0.10,
            ff_dim: 8,
            n_blocks: 8,
            mlp_head_units: 264,
            mlp_dropout: 0.10,
            model_dim: 16,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        positive("transformer key_dim", self.key_dim)?;
        positive("transformer num_heads", self.num_heads)?;
        positive("transformer ff_dim", self.ff_dim)?;
        positive("transformer n_blocks", self.n_blocks)?;
        positive("transformer mlp_head_units", self.mlp_head_units)?;
        positive("transformer model_dim", self.model_dim)?;
        rate("transformer attn_dropout", self.attn_dropout)?;
        rate("transformer mlp_dropout", self.mlp_dropout)
    }
}

fn as_sequence(x: &Tensor, window: usize) -> Result<Tensor> {
    let (_, t) = x.dims2()?;
    if t != window {
        return Err(Error::Shape {
            expected: format!("windows of length {window}"),
            got: t.to_string(),
        });
    }
    Ok(x.unsqueeze(2)?)
}

fn last_step(seq: &Tensor) -> Result<Tensor> {
    let t = seq.dim(1)?;
    Ok(seq.narrow(1, t - 1, 1)?.squeeze(1)?)
}

/// One gated residual unit: dilated conv to `2F` channels, `tanh ⊙ sigmoid`
/// gate, 1×1 projection added to the residual stream and to the skip sum.
#[derive(Debug, Clone)]
struct GatedUnit {
    dilated: CausalConv1d,
    project: CausalConv1d,
    filters: usize,
}

impl GatedUnit {
    fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let z = self.dilated.forward(x)?;
        let gate = (z.narrow(2, 0, self.filters)?.tanh()? * sigmoid(&z.narrow(2, self.filters, self.filters)?)?)?;
        let skip = self.project.forward(&gate)?;
        Ok(((x + &skip)?, skip))
    }
}

#[derive(Debug, Clone)]
pub struct WaveNet {
    config: WaveNetConfig,
    window: usize,
    input: CausalConv1d,
    units: Vec<GatedUnit>,
    post: CausalConv1d,
}

impl WaveNet {
    pub fn new(store: &mut ParamStore, config: &WaveNetConfig, window: usize) -> Result<Self> {
        config.validate()?;
        if config.receptive_field() > window {
            log::warn!(
                "wavenet receptive field {} exceeds the window of {window}",
                config.receptive_field()
            );
        }
        let f = config.n_filters;
        let input = CausalConv1d::new(store, "wavenet.input", 1, f, 1, 1)?;
        let units = config
            .dilations()
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                Ok(GatedUnit {
                    dilated: CausalConv1d::new(
                        store,
                        &format!("wavenet.unit{i}.dilated"),
                        f,
                        2 * f,
                        config.kernel_size,
                        d,
                    )?,
                    project: CausalConv1d::new(store, &format!("wavenet.unit{i}.project"), f, f, 1, 1)?,
                    filters: f,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let post = CausalConv1d::new(store, "wavenet.post", f, f, 1, 1)?;
        Ok(Self {
            config: config.clone(),
            window,
            input,
            units,
            post,
        })
    }

    pub fn config(&self) -> &WaveNetConfig {
        &self.config
    }

    pub fn n_conv_layers(&self) -> usize {
        self.units.len()
    }

    /// Per-step activations of the convolutional stack, `[batch, window, filters]`.
    pub fn sequence_features(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.input.forward(&as_sequence(x, self.window)?)?;
        let mut skips: Option<Tensor> = None;
        for unit in &self.units {
            let (next, skip) = unit.forward(&h)?;
            h = next;
            skips = Some(match skips {
                Some(s) => (s + skip)?,
                None => skip,
            });
        }
        let merged = skips.expect("at least one unit").relu()?;
        Ok(self.post.forward(&merged)?.relu()?)
    }

    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        last_step(&self.sequence_features(x)?)
    }

    pub fn feature_dim(&self) -> usize {
        self.config.n_filters
    }
}

#[derive(Debug, Clone)]
struct ResidualBlock {
    first: CausalConv1d,
    second: CausalConv1d,
    shortcut: Option<CausalConv1d>,
}

impl ResidualBlock {
    fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let h = self.first.forward(x)?.relu()?;
        let h = self.second.forward(&h)?.relu()?;
        let shortcut = match &self.shortcut {
            Some(conv) => conv.forward(x)?,
            None => x.clone(),
        };
        Ok(((shortcut + &h)?.relu()?, h))
    }
}

/// Residual dilated-convolution encoder with skip connections, followed by an
/// LSTM over the full encoded sequence.
#[derive(Debug, Clone)]
pub struct Tcn {
    config: TcnConfig,
    window: usize,
    blocks: Vec<ResidualBlock>,
    recurrent: Lstm,
}

impl Tcn {
    pub fn new(store: &mut ParamStore, config: &TcnConfig, window: usize) -> Result<Self> {
        config.validate()?;
        if config.receptive_field() > window {
            log::debug!(
                "tcn receptive field {} exceeds the window of {window}",
                config.receptive_field()
            );
        }
        let f = config.nb_filters;
        let k = config.kernel_size;
        let mut blocks = Vec::new();
        let mut in_ch = 1;
        for stack in 0..config.nb_stacks {
            for &d in &config.dilations {
                let name = format!("tcn.s{stack}.d{d}");
                blocks.push(ResidualBlock {
                    first: CausalConv1d::new(store, &format!("{name}.conv1"), in_ch, f, k, d)?,
                    second: CausalConv1d::new(store, &format!("{name}.conv2"), f, f, k, d)?,
                    shortcut: if in_ch != f {
                        Some(CausalConv1d::new(store, &format!("{name}.match"), in_ch, f, 1, 1)?)
                    } else {
                        None
                    },
                });
                in_ch = f;
            }
        }
        let recurrent = Lstm::new(store, "tcn.lstm", f, config.recurrent_head_units)?;
        Ok(Self {
            config: config.clone(),
            window,
            blocks,
            recurrent,
        })
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    /// Sum of the residual blocks' skip outputs, `[batch, window, nb_filters]`.
    pub fn sequence_features(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = as_sequence(x, self.window)?;
        let mut skips: Option<Tensor> = None;
        for block in &self.blocks {
            let (next, skip) = block.forward(&h)?;
            h = next;
            skips = Some(match skips {
                Some(s) => (s + skip)?,
                None => skip,
            });
        }
        Ok(skips.expect("at least one block"))
    }

    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.recurrent.forward(&self.sequence_features(x)?)
    }

    pub fn feature_dim(&self) -> usize {
        self.config.recurrent_head_units
    }
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    attention: MultiHeadAttention,
    attn_norm: LayerNorm,
    ff_in: Dense,
    ff_out: Dense,
    ff_norm: LayerNorm,
    dropout: f64,
}

impl EncoderBlock {
    fn forward(&self, x: &Tensor, pass: &mut Pass<'_>) -> Result<(Tensor, Tensor)> {
        let (att, weights) = self.attention.forward(x, pass)?;
        let att = self.attn_norm.forward(&dropout(&att, self.dropout, pass)?)?;
        let res = (att + x)?;
        let ff = self.ff_in.forward(&res)?.relu()?;
        let ff = dropout(&ff, self.dropout, pass)?;
        let ff = self.ff_norm.forward(&self.ff_out.forward(&ff)?)?;
        Ok(((ff + res)?, weights))
    }
}

/// Encoder-only transformer: learned embedding plus positional encoding,
/// post-norm attention blocks with pointwise feed-forward, time-averaged
/// pooling and a ReLU MLP.
#[derive(Debug, Clone)]
pub struct Transformer {
    config: TransformerConfig,
    window: usize,
    embed: Dense,
    position: Tensor,
    blocks: Vec<EncoderBlock>,
    mlp: Dense,
}

impl Transformer {
    pub fn new(store: &mut ParamStore, config: &TransformerConfig, window: usize) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        let embed = Dense::new(store, "transformer.embed", 1, d)?;
        let position = store.var(
            "transformer.position",
            &[window, d],
            Init::Normal { mean: 0.0, std: 0.02 },
        )?;
        let blocks = (0..config.n_blocks)
            .map(|i| {
                let name = format!("transformer.block{i}");
                Ok(EncoderBlock {
                    attention: MultiHeadAttention::new(
                        store,
                        &format!("{name}.mha"),
                        d,
                        config.num_heads,
                        config.key_dim,
                        config.attn_dropout,
                    )?,
                    attn_norm: LayerNorm::new(store, &format!("{name}.norm1"), d, 1e-6)?,
                    ff_in: Dense::new(store, &format!("{name}.ff1"), d, config.ff_dim)?,
                    ff_out: Dense::new(store, &format!("{name}.ff2"), config.ff_dim, d)?,
                    ff_norm: LayerNorm::new(store, &format!("{name}.norm2"), d, 1e-6)?,
                    dropout: config.attn_dropout,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mlp = Dense::new(store, "transformer.mlp", d, config.mlp_head_units)?;
        Ok(Self {
            config: config.clone(),
            window,
            embed,
            position,
            blocks,
            mlp,
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    /// Features plus the attention weights of every block.
    pub fn features_with_attention(&self, x: &Tensor, pass: &mut Pass<'_>) -> Result<(Tensor, Vec<Tensor>)> {
        let seq = as_sequence(x, self.window)?;
        let mut h = self.embed.forward(&seq)?.broadcast_add(&self.position)?;
        let mut maps = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, weights) = block.forward(&h, pass)?;
            h = next;
            maps.push(weights);
        }
        let pooled = h.mean(D::Minus2)?;
        let hidden = self.mlp.forward(&pooled)?.relu()?;
        Ok((dropout(&hidden, self.config.mlp_dropout, pass)?, maps))
    }

    pub fn features(&self, x: &Tensor, pass: &mut Pass<'_>) -> Result<Tensor> {
        Ok(self.features_with_attention(x, pass)?.0)
    }

    pub fn feature_dim(&self) -> usize {
        self.config.mlp_head_units
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavenet_defaults() {
        let c = WaveNetConfig::default();
        assert_eq!(c.n_conv_layers(), 35);
        assert_eq!(&c.dilations()[..6], &[1, 2, 4, 8, 16, 1]);
        assert_eq!(c.receptive_field(), 1 + 7 * 31);
    }

    #[test]
    fn wavenet_receptive_field_single_block() {
        let c = WaveNetConfig {
            n_blocks: 1,
            layers_per_block: 3,
            kernel_size: 2,
            ..Default::default()
        };
        assert_eq!(c.dilations(), vec![1, 2, 4]);
        assert_eq!(c.receptive_field(), 8);
    }

    #[test]
    fn tcn_defaults_and_validation() {
        let c = TcnConfig::default();
        assert_eq!(c.dilations, vec![1, 2, 4, 8, 16]);
        assert_eq!(c.kernel_size, 3);
        assert_eq!(c.nb_stacks, 1);
        assert!(c.validate().is_ok());
        let bad = TcnConfig {
            dilations: vec![1, 3],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let unordered = TcnConfig {
            dilations: vec![2, 1],
            ..Default::default()
        };
        assert!(unordered.validate().is_err());
    }

    #[test]
    fn transformer_defaults() {
        let c = TransformerConfig::default();
        assert_eq!((c.n_blocks, c.num_heads, c.key_dim), (8, 8, 256));
        assert_eq!((c.ff_dim, c.mlp_head_units), (8, 264));
        assert!(TransformerConfig {
            attn_dropout: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
