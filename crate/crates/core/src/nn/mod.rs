//! Network building blocks, backbones, training and checkpoints.

pub mod backbones;
pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod params;
pub mod train;

pub use backbones::{Tcn, TcnConfig, Transformer, TransformerConfig, WaveNet, WaveNetConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use model::{
    build_tcn, build_transformer, build_wavenet, head_variance, split_head, BackboneConfig, HeadMode, Model,
    ModelConfig, ModelOutput, VARIANCE_FLOOR,
};
pub use params::{NamedArray, ParamStore};
pub use train::{train, EpochRecord, TrainOptions, TrainingHistory};
