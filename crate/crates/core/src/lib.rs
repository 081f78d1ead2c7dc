//! Probabilistic forecasting of a daily index series with Bayesian output
//! layers on WaveNet, TCN and Transformer backbones.
//!
//! The pipeline is: [`data`] loads and windows the series, [`nn`] builds and
//! trains a backbone whose final layer may come from [`bayes`], [`predict`]
//! turns Monte-Carlo passes into aleatoric and epistemic variance,
//! [`calibrate`] rescales the predictive std, and [`metrics`] scores point
//! forecasts.
//!
//! ```
//! use volcast::data::{build_dataset, SplitFractions};
//!
//! let values: Vec<f64> = (0..100).map(|i| 20.0 + (i as f64 / 5.0).sin()).collect();
//! let split = build_dataset(&values, 20, SplitFractions::default()).unwrap();
//! assert_eq!(split.valid.len(), 10);
//! ```

pub mod bayes;
pub mod calibrate;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod predict;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/bayesian.md")]
    mod bayesian {}
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    mod uncertainty {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
}
