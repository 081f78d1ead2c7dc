use std::path::{Path, PathBuf};

use plotters::style::{BLACK, BLUE, RED};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use volcast::calibrate::{calibration_curve, default_levels, fit_scale_factor, CalibrationDocument};
use volcast::data::{acf, build_dataset, descriptive_stats, load_csv, pacf, DescriptiveStats, PriceSeries, RobustScaler, WindowedSplit, Windows};
use volcast::metrics::{compute_metrics, render_table, MetricsRow, Split};
use volcast::nn::{train, Checkpoint, Model};
use volcast::predict::{decompose_uncertainty, mc_predict, UncertaintyReport};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::plots;
use crate::run::*;

/// Arguments shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
}

impl Common {
    /// Config file (or defaults) with `--seed` and `--data` applied.
    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(data) = &self.data {
            cfg.data = Some(data.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn data_path(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    cfg.data
        .as_deref()
        .ok_or_else(|| CliError::config("no data file given (use --data or the \"data\" key)"))
}

fn load_split(cfg: &ExperimentConfig) -> Result<(PriceSeries, WindowedSplit), CliError> {
    let series = load_csv(data_path(cfg)?)?;
    let split = build_dataset(series.closes(), cfg.window_size, cfg.fractions())?;
    Ok((series, split))
}

fn split_windows(split: &WindowedSplit, which: Split) -> &Windows {
    match which {
        Split::Train => &split.train,
        Split::Valid => &split.valid,
        Split::Test => &split.test,
    }
}

fn predict_all(model: &Model, split: &WindowedSplit, passes: usize, seed: u64) -> Result<Vec<(Split, UncertaintyReport)>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Split::ALL
        .into_iter()
        .map(|s| {
            let samples = mc_predict(model, split_windows(split, s).inputs(), passes, &mut rng)?;
            Ok((s, decompose_uncertainty(&samples)))
        })
        .collect()
}

fn passes_for(model: &Model, cfg: &ExperimentConfig) -> usize {
    if model.is_variational() {
        cfg.mc_samples
    } else {
        1
    }
}

// stats -------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct StatsDocument {
    source: String,
    first_date: String,
    last_date: String,
    stats: DescriptiveStats,
    acf: Vec<f64>,
    pacf: Vec<f64>,
    acf_band: f64,
    /// Naive "next value equals the last value" forecaster on the scaled splits.
    naive: Vec<MetricsRow>,
}

pub fn stats(common: &Common) -> Result<(), CliError> {
    let cfg = common.experiment()?;
    let (series, split) = load_split(&cfg)?;
    let out = &common.out;
    std::fs::create_dir_all(out).map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
    let closes = series.closes();
    let stats = descriptive_stats(closes)?;
    let max_lag = 40.min(closes.len() - 1);
    let acf_v = acf(closes, max_lag)?;
    let pacf_v = pacf(closes, max_lag)?;
    let band = 1.96 / (closes.len() as f64).sqrt();
    let naive = Split::ALL
        .into_iter()
        .map(|s| {
            let w = split_windows(&split, s);
            let last: Vec<f64> = (0..w.len()).map(|i| w.row(i)[w.window() - 1]).collect();
            compute_metrics(w.targets(), &last, cfg.huber_delta, s)
        })
        .collect::<volcast::Result<Vec<_>>>()?;
    let doc = StatsDocument {
        source: data_path(&cfg)?.display().to_string(),
        first_date: series.dates()[0].to_string(),
        last_date: series.dates()[series.dates().len() - 1].to_string(),
        stats,
        acf: acf_v[1..].to_vec(),
        pacf: pacf_v[1..].to_vec(),
        acf_band: band,
        naive,
    };
    write_json(&out.join("stats.json"), &doc)?;
    let s = &doc.stats;
    let mut text = format!(
        "{:>8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "count", "mean", "std", "min", "25%", "50%", "75%", "max"
    );
    text += &format!(
        "{:>8} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}\n",
        s.count, s.mean, s.std, s.min, s.q25, s.q50, s.q75, s.max
    );
    text += "\nNaive forecaster (scaled units)\n";
    text += &render_table(&[("naive".to_string(), doc.naive.clone())]);
    std::fs::write(out.join("stats.txt"), &text)?;
    print!("{text}");
    plots::lines(&out.join("series.png"), &[(closes, BLACK)])?;
    plots::histogram(&out.join("histogram.png"), closes, 40)?;
    plots::boxplot(&out.join("boxplot.png"), closes, s.q25, s.q50, s.q75)?;
    plots::correlogram(&out.join("acf.png"), &doc.acf, band)?;
    plots::correlogram(&out.join("pacf.png"), &doc.pacf, band)?;
    Ok(())
}

// train -------------------------------------------------------------------

fn metrics_for(
    reports: &[(Split, UncertaintyReport)],
    split: &WindowedSplit,
    scaler: &RobustScaler,
    delta: f64,
) -> Result<(Vec<MetricsRow>, Vec<MetricsRow>), CliError> {
    let mut scaled = Vec::new();
    let mut unscaled = Vec::new();
    for (s, r) in reports {
        let y = split_windows(split, *s).targets();
        scaled.push(compute_metrics(y, &r.mean, delta, *s)?);
        unscaled.push(compute_metrics(&scaler.inverse_all(y), &scaler.inverse_all(&r.mean), delta, *s)?);
    }
    Ok((scaled, unscaled))
}

pub fn train_cmd(common: &Common) -> Result<(), CliError> {
    let cfg = common.experiment()?;
    let (_, split) = load_split(&cfg)?;
    let out = &common.out;
    claim(out, &cfg)?;
    let model_cfg = cfg.model_config()?;
    let mut model = Model::build(&model_cfg, cfg.seed)?;
    log::info!("{}: {} parameters", cfg.label(), model.store().numel());
    let history = train(&mut model, &split, &cfg.train_options())?;
    Checkpoint::from_model(&model, split.scaler)?.save(&out.join(CHECKPOINT_FILE))?;
    write_json(&out.join(HISTORY_FILE), &history)?;

    let reports = predict_all(&model, &split, passes_for(&model, &cfg), cfg.seed.wrapping_add(1))?;
    let (scaled, unscaled) = metrics_for(&reports, &split, &split.scaler, cfg.huber_delta)?;
    let metrics = MetricsDocument {
        label: cfg.label(),
        scaled,
        unscaled,
    };
    write_json(&out.join(METRICS_FILE), &metrics)?;
    let table = render_table(&[(cfg.label(), metrics.scaled.clone())]);
    std::fs::write(out.join("metrics.txt"), &table)?;
    print!("{table}");

    let train_curve: Vec<f64> = history.epochs.iter().map(|e| e.train_loss).collect();
    let valid_curve: Vec<f64> = history.epochs.iter().map(|e| e.valid_loss).collect();
    plots::lines(&out.join("training.png"), &[(&train_curve, BLUE), (&valid_curve, RED)])?;

    let stamp = now();
    let created_at = match load_record(out) {
        Ok(old) => old.created_at,
        Err(_) => stamp.clone(),
    };
    let record = RunRecord {
        label: cfg.label(),
        config: cfg.clone(),
        checkpoint: CHECKPOINT_FILE.into(),
        created_at,
        updated_at: stamp,
        training: TrainingSummary::from(&history),
        metrics,
        predictions: None,
        calibration: None,
    };
    write_json(&out.join(RUN_FILE), &record)
}

// predict -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub split: Split,
    pub date: String,
    pub y_true: f64,
    pub mean: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub total: f64,
    pub y_true_unscaled: f64,
    pub mean_unscaled: f64,
    pub aleatoric_unscaled: f64,
    pub epistemic_unscaled: f64,
    pub total_unscaled: f64,
}

pub fn predict_cmd(common: &Common) -> Result<(), CliError> {
    let out = &common.out;
    let mut record = load_record(out)?;
    let mut cfg = record.config.clone();
    if let Some(data) = &common.data {
        cfg.data = Some(data.clone());
    }
    let ckpt = Checkpoint::load(&out.join(&record.checkpoint))?;
    let model = ckpt.to_model()?;
    let (series, split) = load_split(&cfg)?;
    if split.scaler != ckpt.scaler {
        log::warn!("data differ from the training data; using the checkpoint scaler for original units");
    }
    let scaler = ckpt.scaler;
    let reports = predict_all(&model, &split, passes_for(&model, &cfg), cfg.seed.wrapping_add(2))?;
    let mut writer = csv::Writer::from_path(out.join(PREDICTIONS_FILE))?;
    let iqr2 = scaler.iqr * scaler.iqr;
    for (s, r) in &reports {
        let w = split_windows(&split, *s);
        for i in 0..w.len() {
            writer.serialize(PredictionRow {
                split: *s,
                date: series.dates()[w.target_index()[i]].to_string(),
                y_true: w.targets()[i],
                mean: r.mean[i],
                aleatoric: r.aleatoric[i],
                epistemic: r.epistemic[i],
                total: r.total[i],
                y_true_unscaled: scaler.inverse(w.targets()[i]),
                mean_unscaled: scaler.inverse(r.mean[i]),
                aleatoric_unscaled: r.aleatoric[i] * iqr2,
                epistemic_unscaled: r.epistemic[i] * iqr2,
                total_unscaled: r.total[i] * iqr2,
            })?;
        }
    }
    writer.flush()?;
    let (_, test) = reports.iter().find(|(s, _)| *s == Split::Test).expect("test split");
    plots::prediction(
        &out.join("prediction.png"),
        &scaler.inverse_all(split.test.targets()),
        &scaler.inverse_all(&test.mean),
        &test.total.iter().map(|v| v.sqrt() * scaler.iqr).collect::<Vec<_>>(),
    )?;
    record.predictions = Some(PREDICTIONS_FILE.into());
    record.updated_at = now();
    write_json(&out.join(RUN_FILE), &record)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    reader
        .deserialize()
        .collect::<Result<Vec<PredictionRow>, _>>()
        .map_err(|e| CliError::data(format!("malformed {}: {e}", path.display())))
}

// calibrate ---------------------------------------------------------------

/// Scale factor fitted on the validation rows, curves evaluated on the test rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    #[serde(flatten)]
    pub test: CalibrationDocument,
    pub fitted_on: String,
    pub evaluated_on: String,
    pub valid_rmsce_before: f64,
    pub valid_rmsce_after: f64,
}

fn columns(rows: &[PredictionRow], split: Split) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let sel: Vec<&PredictionRow> = rows.iter().filter(|r| r.split == split).collect();
    (
        sel.iter().map(|r| r.y_true).collect(),
        sel.iter().map(|r| r.mean).collect(),
        sel.iter().map(|r| r.total.sqrt()).collect(),
    )
}

pub fn calibrate_cmd(common: &Common) -> Result<(), CliError> {
    let out = &common.out;
    let path = out.join(PREDICTIONS_FILE);
    if !path.exists() {
        predict_cmd(common)?;
    }
    let rows = read_predictions(&path)?;
    if let Some(r) = rows.iter().find(|r| !(r.mean.is_finite() && r.total.is_finite() && r.total >= 0.0)) {
        return Err(CliError::numerical(format!(
            "non-finite prediction for {} row dated {}",
            r.split, r.date
        )));
    }
    let (vy, vm, vs) = columns(&rows, Split::Valid);
    let (ty, tm, ts) = columns(&rows, Split::Test);
    if vy.is_empty() || ty.is_empty() {
        return Err(CliError::data("predictions need valid and test rows"));
    }
    let fit = fit_scale_factor(&vy, &vm, &vs)?;
    let levels = default_levels();
    let before = calibration_curve(&ty, &tm, &ts, &levels, 1.0)?;
    let after = calibration_curve(&ty, &tm, &ts, &levels, fit.scale_factor)?;
    let report = CalibrationReport {
        test: CalibrationDocument {
            scale_factor: fit.scale_factor,
            rmsce_before: before.rmsce(),
            rmsce_after: after.rmsce(),
            levels: levels.clone(),
            observed_before: before.observed.clone(),
            observed_after: after.observed.clone(),
        },
        fitted_on: "valid".into(),
        evaluated_on: "test".into(),
        valid_rmsce_before: fit.rmsce_before,
        valid_rmsce_after: fit.rmsce_after,
    };
    write_json(&out.join(CALIBRATION_FILE), &report)?;
    plots::calibration(&out.join("calibration.png"), &levels, &before.observed, &after.observed)?;
    println!(
        "scale factor {:.4}; test RMSCE {:.4} -> {:.4}",
        fit.scale_factor,
        before.rmsce(),
        after.rmsce()
    );
    if out.join(RUN_FILE).exists() {
        let mut record = load_record(out)?;
        record.calibration = Some(report.test);
        record.updated_at = now();
        write_json(&out.join(RUN_FILE), &record)?;
    }
    Ok(())
}

// report ------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub run: String,
    pub backbone: String,
    pub method: String,
    pub prior: String,
    pub test: Option<MetricsRow>,
    pub scale_factor: Option<f64>,
    pub rmsce_before: Option<f64>,
    pub rmsce_after: Option<f64>,
}

fn order_key(cfg: &ExperimentConfig) -> (usize, usize) {
    let b = ["wavenet", "tcn", "transformer"]
        .iter()
        .position(|n| *n == cfg.backbone.to_ascii_lowercase())
        .unwrap_or(3);
    let m = ["none", "rt", "flipout", "mnf"]
        .iter()
        .position(|n| *n == cfg.bayes.as_str())
        .unwrap_or(4);
    (b, m)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn report_cmd(common: &Common) -> Result<(), CliError> {
    let out = &common.out;
    let mut records = find_records(out)?;
    if records.is_empty() {
        return Err(CliError::data(format!("no runs found under {}", out.display())));
    }
    records.sort_by_key(|(dir, r)| (order_key(&r.config), dir.clone()));
    let rows: Vec<ReportRow> = records
        .iter()
        .map(|(dir, r)| ReportRow {
            run: dir.strip_prefix(out).unwrap_or(dir).display().to_string(),
            backbone: r.config.backbone.to_ascii_lowercase(),
            method: r.config.bayes.as_str().to_string(),
            prior: if r.config.bayes.method().is_some() {
                r.config.prior.as_str().to_string()
            } else {
                "-".into()
            },
            test: r.metrics.scaled.iter().find(|m| m.split == Split::Test).copied(),
            scale_factor: r.calibration.as_ref().map(|c| c.scale_factor),
            rmsce_before: r.calibration.as_ref().map(|c| c.rmsce_before),
            rmsce_after: r.calibration.as_ref().map(|c| c.rmsce_after),
        })
        .collect();

    let mut text = format!(
        "{:<12} {:<8} {:<16} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>12} {:>12}\n",
        "Model", "Method", "Prior", "Loss", "MAE", "RMSE", "MAPE", "MSLE", "Factor", "RMSCE before", "RMSCE after"
    );
    for r in &rows {
        let m = r.test.as_ref();
        let cell = |f: fn(&MetricsRow) -> f64| m.map(|m| format!("{:.3}", f(m))).unwrap_or_else(|| "-".into());
        text += &format!(
            "{:<12} {:<8} {:<16} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>12} {:>12}\n",
            r.backbone,
            r.method,
            r.prior,
            cell(|m| m.loss),
            cell(|m| m.mae),
            cell(|m| m.rmse),
            cell(|m| m.mape),
            cell(|m| m.msle),
            opt(r.scale_factor),
            opt(r.rmsce_before),
            opt(r.rmsce_after),
        );
    }
    text += "\nAll splits (scaled units)\n";
    let per_model: Vec<(String, Vec<MetricsRow>)> = records
        .iter()
        .map(|(_, r)| (r.label.clone(), r.metrics.scaled.clone()))
        .collect();
    text += &render_table(&per_model);
    std::fs::write(out.join("report.txt"), &text)?;
    write_json(&out.join("report.json"), &rows)?;
    print!("{text}");
    Ok(())
}
