//! Variational output layers, priors and flows.

pub mod dense;
pub mod flow;
pub mod prior;

pub use dense::{elbo_loss, gaussian_nll, LayerNoise, LayerSample, Method, VariationalConfig, VariationalDense};
pub use flow::{AffineCoupling, ElementwiseAffine, FlowConfig, FlowOutput, FlowStack};
pub use prior::{GaussianPosterior, LogUniformConstants, Prior};
