//! Flat JSON experiment configuration. Every key is optional and defaults to
//! the tuned value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volcast::bayes::prior::LogUniformConstants;
use volcast::bayes::{FlowConfig, Method, Prior, VariationalConfig};
use volcast::data::SplitFractions;
use volcast::nn::{BackboneConfig, ModelConfig, TcnConfig, TrainOptions, TransformerConfig, WaveNetConfig};
use volcast::predict::DEFAULT_MC_SAMPLES;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bayes {
    None,
    Rt,
    Flipout,
    Mnf,
}

impl Bayes {
    pub fn method(&self) -> Option<Method> {
        match self {
            Bayes::None => None,
            Bayes::Rt => Some(Method::Rt),
            Bayes::Flipout => Some(Method::Flipout),
            Bayes::Mnf => Some(Method::Mnf),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Bayes::None => "none",
            Bayes::Rt => "rt",
            Bayes::Flipout => "flipout",
            Bayes::Mnf => "mnf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub window_size: usize,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,

    pub backbone: String,
    pub wavenet_n_blocks: usize,
    pub wavenet_layers_per_block: usize,
    pub wavenet_n_filters: usize,
    pub wavenet_kernel_size: usize,
    pub wavenet_dilation_base: usize,
    pub tcn_nb_stacks: usize,
    pub tcn_nb_filters: usize,
    pub tcn_dilations: Vec<usize>,
    pub tcn_kernel_size: usize,
    pub tcn_recurrent_head_units: usize,
    pub transformer_key_dim: usize,
    pub transformer_num_heads: usize,
    pub transformer_attn_dropout: f64,
    pub transformer_ff_dim: usize,
    pub transformer_n_blocks: usize,
    pub transformer_mlp_head_units: usize,
    pub transformer_mlp_dropout: f64,
    pub transformer_model_dim: usize,

    pub bayes: Bayes,
    pub prior: Prior,
    pub sigma_init: f64,
    pub flow_steps: usize,
    /// Defaults to three layers of 50 for WaveNet and two otherwise.
    pub flow_hidden_sizes: Option<Vec<usize>>,
    pub aux_flow_steps: usize,
    pub log_uniform_k1: f64,
    pub log_uniform_k2: f64,
    pub log_uniform_k3: f64,
    pub log_uniform_c: f64,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub huber_delta: f64,
    /// Defaults to `1 / N_train`.
    pub kl_weight: Option<f64>,
    pub mc_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let split = SplitFractions::default();
        let w = WaveNetConfig::default();
        let t = TcnConfig::default();
        let tr = TransformerConfig::default();
        let v = VariationalConfig::default();
        let k = LogUniformConstants::default();
        let o = TrainOptions::default();
        Self {
            data: None,
            seed: 0,
            window_size: 20,
            train_fraction: split.train,
            valid_fraction: split.valid,
            test_fraction: split.test,
            backbone: "tcn".into(),
            wavenet_n_blocks: w.n_blocks,
            wavenet_layers_per_block: w.layers_per_block,
            wavenet_n_filters: w.n_filters,
            wavenet_kernel_size: w.kernel_size,
            wavenet_dilation_base: w.dilation_base,
            tcn_nb_stacks: t.nb_stacks,
            tcn_nb_filters: t.nb_filters,
            tcn_dilations: t.dilations,
            tcn_kernel_size: t.kernel_size,
            tcn_recurrent_head_units: t.recurrent_head_units,
            transformer_key_dim: tr.key_dim,
            transformer_num_heads: tr.num_heads,
            transformer_attn_dropout: tr.attn_dropout,
            transformer_ff_dim: tr.ff_dim,
            transformer_n_blocks: tr.n_blocks,
            transformer_mlp_head_units: tr.mlp_head_units,
            transformer_mlp_dropout: tr.mlp_dropout,
            transformer_model_dim: tr.model_dim,
            bayes: Bayes::None,
            prior: v.prior,
            sigma_init: v.sigma_init,
            flow_steps: v.flow.n_steps,
            flow_hidden_sizes: None,
            aux_flow_steps: v.aux_flow.n_steps,
            log_uniform_k1: k.k1,
            log_uniform_k2: k.k2,
            log_uniform_k3: k.k3,
            log_uniform_c: k.c,
            batch_size: o.batch_size,
            learning_rate: o.learning_rate,
            max_epochs: o.max_epochs,
            patience: o.patience,
            huber_delta: o.huber_delta,
            kl_weight: o.kl_weight,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.train_fraction,
            valid: self.valid_fraction,
            test: self.test_fraction,
        }
    }

    pub fn backbone_config(&self) -> Result<BackboneConfig, CliError> {
        let b = match self.backbone.to_ascii_lowercase().as_str() {
            "wavenet" => BackboneConfig::Wavenet(WaveNetConfig {
                n_blocks: self.wavenet_n_blocks,
                layers_per_block: self.wavenet_layers_per_block,
                n_filters: self.wavenet_n_filters,
                kernel_size: self.wavenet_kernel_size,
                dilation_base: self.wavenet_dilation_base,
            }),
            "tcn" => BackboneConfig::Tcn(TcnConfig {
                nb_stacks: self.tcn_nb_stacks,
                nb_filters: self.tcn_nb_filters,
                dilations: self.tcn_dilations.clone(),
                kernel_size: self.tcn_kernel_size,
                recurrent_head_units: self.tcn_recurrent_head_units,
            }),
            "transformer" => BackboneConfig::Transformer(TransformerConfig {
                key_dim: self.transformer_key_dim,
                num_heads: self.transformer_num_heads,
                attn_dropout: self.transformer_attn_dropout,
                ff_dim: self.transformer_ff_dim,
                n_blocks: self.transformer_n_blocks,
                mlp_head_units: self.transformer_mlp_head_units,
                mlp_dropout: self.transformer_mlp_dropout,
                model_dim: self.transformer_model_dim,
            }),
            other => return Err(CliError::config(format!("unknown backbone {other:?}"))),
        };
        Ok(b)
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let backbone = self.backbone_config()?;
        let cfg = match self.bayes.method() {
            None => ModelConfig::deterministic(backbone, self.window_size),
            Some(method) => {
                let hidden = self
                    .flow_hidden_sizes
                    .clone()
                    .unwrap_or_else(|| backbone.default_flow_hidden());
                let v = VariationalConfig {
                    method,
                    prior: self.prior,
                    sigma_init: self.sigma_init,
                    flow: FlowConfig {
                        n_steps: self.flow_steps,
                        hidden_sizes: hidden.clone(),
                    },
                    aux_flow: FlowConfig {
                        n_steps: self.aux_flow_steps,
                        hidden_sizes: hidden,
                    },
                    log_uniform: LogUniformConstants {
                        k1: self.log_uniform_k1,
                        k2: self.log_uniform_k2,
                        k3: self.log_uniform_k3,
                        c: self.log_uniform_c,
                        ..LogUniformConstants::default()
                    },
                    ..VariationalConfig::default()
                };
                ModelConfig::bayesian(backbone, self.window_size, v)
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            huber_delta: self.huber_delta,
            kl_weight: self.kl_weight,
            seed: self.seed,
        }
    }

    /// Checks everything that can be checked without data.
    pub fn validate(&self) -> Result<(), CliError> {
        self.fractions().validate()?;
        self.model_config()?;
        self.train_options().validate()?;
        if self.mc_samples == 0 {
            return Err(CliError::config("mc_samples must be at least 1"));
        }
        Ok(())
    }

    /// Short label such as `tcn-mnf`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.backbone.to_ascii_lowercase(), self.bayes.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
    }

    #[test]
    fn empty_document_means_defaults() {
        assert_eq!(serde_json::from_str::<ExperimentConfig>("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"windw_size": 3}"#).is_err());
    }

    #[test]
    fn flow_hidden_defaults_follow_backbone() {
        let mut c = ExperimentConfig {
            backbone: "wavenet".into(),
            bayes: Bayes::Mnf,
            ..Default::default()
        };
        let v = c.model_config().unwrap().variational.unwrap();
        assert_eq!(v.flow.hidden_sizes, vec![50, 50, 50]);
        c.backbone = "tcn".into();
        let v = c.model_config().unwrap().variational.unwrap();
        assert_eq!(v.flow.hidden_sizes, vec![50, 50]);
    }

    #[test]
    fn bad_backbone_is_a_config_error() {
        let c = ExperimentConfig {
            backbone: "lstm".into(),
            ..Default::default()
        };
        assert_eq!(c.validate().unwrap_err().code, 2);
    }
}
