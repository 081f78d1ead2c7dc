//! Run directories and the files inside them.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use volcast::calibrate::CalibrationDocument;
use volcast::metrics::MetricsRow;
use volcast::nn::TrainingHistory;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.json";
pub const RUN_FILE: &str = "run.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const HISTORY_FILE: &str = "history.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stopped_early: bool,
    pub kl_weight: f64,
}

impl From<&TrainingHistory> for TrainingSummary {
    fn from(h: &TrainingHistory) -> Self {
        Self {
            epochs: h.epochs.len(),
            best_epoch: h.best_epoch,
            best_valid_loss: h.best_valid_loss,
            stopped_early: h.stopped_early,
            kl_weight: h.kl_weight,
        }
    }
}

/// Metrics of every split, in scaled and original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub label: String,
    pub scaled: Vec<MetricsRow>,
    pub unscaled: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub config: ExperimentConfig,
    pub checkpoint: String,
    pub created_at: String,
    pub updated_at: String,
    pub training: TrainingSummary,
    pub metrics: MetricsDocument,
    pub predictions: Option<String>,
    pub calibration: Option<CalibrationDocument>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("malformed {}: {e}", path.display())))
}

/// Creates `dir` and pins `config` to it. A directory that already holds a
/// different configuration is refused.
pub fn claim(dir: &Path, config: &ExperimentConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(CONFIG_FILE);
    if path.exists() {
        let existing: ExperimentConfig = read_json(&path)?;
        if &existing != config {
            return Err(CliError::config(format!(
                "{} already holds a run with a different configuration",
                dir.display()
            )));
        }
        return Ok(());
    }
    write_json(&path, config)
}

pub fn load_record(dir: &Path) -> Result<RunRecord, CliError> {
    let path = dir.join(RUN_FILE);
    if !path.exists() {
        return Err(CliError::config(format!(
            "no trained run in {} (run `vol train` first)",
            dir.display()
        )));
    }
    read_json(&path)
}

/// Every `run.json` in `root` and its subdirectories, two levels deep.
pub fn find_records(root: &Path) -> Result<Vec<(PathBuf, RunRecord)>, CliError> {
    let mut found = Vec::new();
    let mut dirs = vec![(root.to_path_buf(), 0)];
    while let Some((dir, depth)) = dirs.pop() {
        let candidate = dir.join(RUN_FILE);
        if candidate.is_file() {
            found.push((dir.clone(), read_json(&candidate)?));
        }
        if depth < 2 {
            let entries = std::fs::read_dir(&dir)
                .map_err(|e| CliError::data(format!("cannot list {}: {e}", dir.display())))?;
            for entry in entries.flatten() {
                if entry.path().is_dir() {
                    dirs.push((entry.path(), depth + 1));
                }
            }
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(found)
}
