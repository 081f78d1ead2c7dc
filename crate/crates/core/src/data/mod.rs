//! Series ingestion, descriptive statistics, robust scaling and windowing.

mod scaler;
mod series;
mod stats;
mod window;

pub use scaler::RobustScaler;
pub use series::{load_csv, read_csv, PriceSeries};
pub use stats::{acf, descriptive_stats, naive_forecast, pacf, quantile, quantile_sorted, DescriptiveStats};
pub use window::{build_dataset, chrono_split, make_windows, SplitFractions, WindowedSplit, Windows};
