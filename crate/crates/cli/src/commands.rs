use std::path::{Path, PathBuf};

use serde::Serialize;
use umixer::data::{load_csv, load_m4, synthetic, write_csv, M4Series, RawSeries, Standardizer};
use umixer::eval::{
    ablation_suite, evaluate_long_term, evaluate_short_term, m4_period, prepare_long_term, sensitivity_sweep,
    short_term_windows, sweep_csv, sweep_timing_csv, HorizonTable, MetricsReport, ShortTermOptions, Variant,
};
use umixer::model::ModelConfig;
use umixer::selftest;
use umixer::tensor::GradCheckOptions;
use umixer::train::{config_fingerprint, write_history_jsonl, Checkpoint, Trainer};
use umixer::Error;

use crate::config::{DatasetKind, RunConfig};
use crate::error::CliError;

enum Dataset {
    Long(RawSeries),
    Short(Vec<M4Series>),
}

impl Dataset {
    fn channels(&self) -> usize {
        match self {
            Dataset::Long(s) => s.channels(),
            Dataset::Short(_) => 1,
        }
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match cfg.dataset_kind {
        DatasetKind::Synthetic => {
            let kind = synthetic::SyntheticKind::parse(&cfg.dataset).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown synthetic dataset `{}` (expected sine_trend or level_shift)",
                    cfg.dataset
                ))
            })?;
            Ok(Dataset::Long(synthetic::generate(kind, cfg.synthetic_length, cfg.synthetic_seed)))
        }
        DatasetKind::LongCsv => Ok(Dataset::Long(load_csv(&cfg.dataset)?)),
        DatasetKind::M4 => Ok(Dataset::Short(load_m4(&cfg.dataset)?)),
    }
}

fn short_options(cfg: &RunConfig, horizon: usize) -> Result<ShortTermOptions, CliError> {
    let period = m4_period(&cfg.m4_frequency)
        .ok_or_else(|| CliError::Config(format!("unknown m4_frequency `{}`", cfg.m4_frequency)))?;
    Ok(ShortTermOptions {
        input_len: cfg.input_len,
        horizon,
        period,
        max_windows_per_series: cfg.max_windows_per_series,
    })
}

fn checkpoint_path(dir: &Path, horizon: usize) -> PathBuf {
    dir.join(format!("checkpoint_h{horizon}.bin"))
}

/// Creates the output directory and records the resolved configuration in it.
fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn long_only(data: Dataset, command: &str) -> Result<RawSeries, CliError> {
    match data {
        Dataset::Long(s) => Ok(s),
        Dataset::Short(_) => Err(CliError::Config(format!(
            "`{command}` needs a long-horizon dataset (dataset_kind = long_csv or synthetic)"
        ))),
    }
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let dir = prepare_out(cfg)?;
    let channels = data.channels();
    for h in cfg.horizons() {
        let mcfg = cfg.model_config(channels, h)?;
        let (train_w, val_w) = match &data {
            Dataset::Long(s) => {
                let d = prepare_long_term(s, cfg.input_len, h, &cfg.data_spec())?;
                (d.train, d.val)
            }
            Dataset::Short(series) => short_term_windows(series, &short_options(cfg, h)?),
        };
        log::info!(
            "H={h}: {} training and {} validation windows, config {}",
            train_w.len(),
            val_w.len(),
            &config_fingerprint(&mcfg)[..12]
        );
        let mut trainer = Trainer::new(mcfg, cfg.train_config(cfg.seed))?;
        let fitted = trainer.fit(&train_w, &val_w);
        write_history_jsonl(&dir.join(format!("history_h{h}.jsonl")), &trainer.history)?;
        match fitted {
            Ok(()) => {}
            Err(Error::Diverged { epoch, last_good }) => {
                let path = dir.join(format!("checkpoint_h{h}.last_good.bin"));
                last_good.save(&path)?;
                return Err(CliError::Numeric(format!(
                    "training diverged in epoch {epoch}; last finite state saved to {}",
                    path.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        let path = checkpoint_path(&dir, h);
        trainer.checkpoint().save(&path)?;
        let last = trainer.history.last();
        println!(
            "H={h}: {} epochs, final train L1 {:.6}, best score {:.6}, saved {}",
            trainer.epochs_done(),
            last.map_or(f64::NAN, |r| r.train_l1),
            trainer.best_val.unwrap_or(f64::NAN),
            path.display()
        );
    }
    Ok(())
}

/// Loads a checkpoint and refuses it unless its model configuration matches
/// the one the current run configuration produces.
fn load_matching(cfg: &RunConfig, path: &Path, channels: usize) -> Result<(Checkpoint, ModelConfig), CliError> {
    let ck = Checkpoint::load(path).map_err(|e| match e {
        Error::Io(io) => CliError::Data(format!("cannot read checkpoint {}: {io}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })?;
    let expected = cfg.model_config(channels, ck.model_config.horizon)?;
    let (want, got) = (config_fingerprint(&expected), config_fingerprint(&ck.model_config));
    if want != got {
        return Err(CliError::Fingerprint {
            config: want,
            checkpoint: got,
        });
    }
    Ok((ck, expected))
}

pub fn evaluate(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let dir = prepare_out(cfg)?;
    let paths: Vec<PathBuf> = if checkpoints.is_empty() {
        cfg.horizons().into_iter().map(|h| checkpoint_path(&dir, h)).collect()
    } else {
        checkpoints.to_vec()
    };
    let outsample = match (&data, &cfg.m4_test) {
        (Dataset::Short(_), Some(p)) => Some(load_m4(p)?),
        (Dataset::Short(_), None) => {
            return Err(CliError::Config("evaluating an m4 dataset needs m4_test".into()));
        }
        _ => None,
    };
    let name = cfg.display_name();
    let mut rows: Vec<MetricsReport> = Vec::new();
    for path in &paths {
        let (ck, mcfg) = load_matching(cfg, path, data.channels())?;
        let model = Trainer::from_checkpoint(ck)?.best_model();
        let report = match &data {
            Dataset::Long(s) => {
                let d = prepare_long_term(s, cfg.input_len, mcfg.horizon, &cfg.data_spec())?;
                evaluate_long_term(&model, &d.test, &name, &d.fingerprint, cfg.eval_batch_size)?
            }
            Dataset::Short(insample) => {
                let opts = short_options(cfg, mcfg.horizon)?;
                let out = outsample.as_deref().unwrap_or_default();
                evaluate_short_term(&model, insample, out, &opts, &name, cfg.eval_batch_size)?
            }
        };
        for w in &report.warnings {
            log::warn!("H={}: {w}", report.horizon);
        }
        let shown: Vec<String> = report.metrics.iter().map(|(k, v)| format!("{k} {v:.6}")).collect();
        println!("H={}: {} ({} samples)", report.horizon, shown.join(", "), report.samples);
        rows.push(report);
    }
    let table = HorizonTable::new(rows);
    write_json(&dir.join("metrics.json"), &table)?;
    std::fs::write(dir.join("metrics.csv"), table.to_csv())?;
    let avg: Vec<String> = table.avg.iter().map(|(k, v)| format!("{k} {v:.6}")).collect();
    println!("avg: {}", avg.join(", "));
    Ok(())
}

#[derive(Serialize)]
struct PlotData {
    channels: Vec<String>,
    history_timestamps: Vec<String>,
    /// `[channel][step]` in original units.
    history: Vec<Vec<f64>>,
    forecast: Vec<Vec<f64>>,
    truth: Option<Vec<Vec<f64>>>,
    alpha: Vec<f64>,
    mean_shift: Vec<f64>,
    config_fingerprint: String,
}

pub fn forecast(cfg: &RunConfig, input: &Path, checkpoint: Option<&Path>, truth: Option<&Path>) -> Result<(), CliError> {
    let series = load_csv(input)?;
    let l = cfg.input_len;
    if series.len() < l {
        return Err(CliError::Data(format!(
            "{} has {} rows but the model needs input_len = {l} rows",
            input.display(),
            series.len()
        )));
    }
    let dir = prepare_out(cfg)?;
    let ck_path = checkpoint.map_or_else(|| checkpoint_path(&dir, cfg.horizon), Path::to_path_buf);
    let (ck, mcfg) = load_matching(cfg, &ck_path, series.channels())?;
    let model = Trainer::from_checkpoint(ck)?.best_model();
    let h = mcfg.horizon;

    // The model was trained on standardized values, so reuse the statistics of
    // the configured dataset's training segment.
    let scaler: Option<Standardizer> = match cfg.dataset_kind {
        DatasetKind::M4 => None,
        _ if !cfg.standardize => None,
        _ => {
            let train_data = long_only(load_dataset(cfg)?, "forecast")?;
            if train_data.channels() != series.channels() {
                return Err(CliError::Data(format!(
                    "{} has {} channels but the training dataset has {}",
                    input.display(),
                    series.channels(),
                    train_data.channels()
                )));
            }
            prepare_long_term(&train_data, l, h, &cfg.data_spec())?.scaler
        }
    };
    let recent = series.slice(series.len() - l, series.len());
    let scaled = scaler.as_ref().map_or_else(|| recent.clone(), |s| s.apply(&recent));
    let (pred, diag) = model.predict(&scaled.block(0, l))?;
    let forecast: Vec<Vec<f64>> = pred
        .chunks(h)
        .enumerate()
        .map(|(c, row)| match &scaler {
            Some(s) => row.iter().map(|v| v * s.std[c] + s.mean[c]).collect(),
            None => row.to_vec(),
        })
        .collect();

    let stamps = (1..=h).map(|i| format!("+{i}")).collect();
    let out = RawSeries::new(series.channel_names.clone(), forecast.clone(), stamps)?;
    write_csv(dir.join("forecast.csv"), &out)?;

    let truth = match truth {
        Some(p) => {
            let t = load_csv(p)?;
            if t.len() < h || t.channels() != series.channels() {
                return Err(CliError::Data(format!(
                    "{} needs {} channels and at least {h} rows (found {} and {})",
                    p.display(),
                    series.channels(),
                    t.channels(),
                    t.len()
                )));
            }
            Some(t.values.iter().map(|r| r[..h].to_vec()).collect())
        }
        None => None,
    };
    let (alpha, mean_shift) = match diag.corrections.first() {
        Some(c) => (c.alpha.clone(), c.mean_shift()),
        None => (Vec::new(), Vec::new()),
    };
    let plot = PlotData {
        channels: series.channel_names.clone(),
        history_timestamps: recent.timestamps.clone(),
        history: recent.values.clone(),
        forecast,
        truth,
        alpha,
        mean_shift,
        config_fingerprint: config_fingerprint(&mcfg),
    };
    write_json(&dir.join("plot.json"), &plot)?;
    for w in &diag.warnings {
        log::warn!("{w}");
    }
    println!("wrote {h} forecast steps for {} channels to {}", series.channels(), dir.display());
    Ok(())
}

pub fn ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let series = long_only(load_dataset(cfg)?, "ablate")?;
    let dir = prepare_out(cfg)?;
    let base = cfg.model_config(series.channels(), cfg.horizon)?;
    let result = ablation_suite(
        &cfg.display_name(),
        &series,
        &base,
        &cfg.train_config(cfg.seed),
        &cfg.data_spec(),
        &cfg.ablation_seeds,
    )?;
    write_json(&dir.join("ablation.json"), &result)?;
    std::fs::write(dir.join("ablation.csv"), result.to_csv())?;
    for v in &result.variants {
        println!(
            "{:<6} mse {:.6} ± {:.6}  mae {:.6} ± {:.6}",
            v.variant.name(),
            v.mse_mean,
            v.mse_std,
            v.mae_mean,
            v.mae_std
        );
    }
    let n = cfg.ablation_seeds.len();
    println!(
        "full <= wo_sc in {}/{n} seeds, full <= wo_ue in {}/{n} seeds",
        result.wins(Variant::Full, Variant::WoSc),
        result.wins(Variant::Full, Variant::WoUe)
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepEntry<'a> {
    levels: usize,
    patch_len: usize,
    report: &'a MetricsReport,
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let series = long_only(load_dataset(cfg)?, "sweep")?;
    let dir = prepare_out(cfg)?;
    let base = cfg.model_config(series.channels(), cfg.horizon)?;
    let cells = sensitivity_sweep(
        &cfg.display_name(),
        &series,
        &base,
        &cfg.train_config(cfg.seed),
        &cfg.data_spec(),
        &cfg.sweep_levels,
        &cfg.sweep_patch_lens,
    )?;
    // Wall-clock times go to their own file so the metric files stay reproducible.
    let entries: Vec<SweepEntry> = cells
        .iter()
        .map(|c| SweepEntry {
            levels: c.levels,
            patch_len: c.patch_len,
            report: &c.report,
        })
        .collect();
    write_json(&dir.join("sweep.json"), &entries)?;
    std::fs::write(dir.join("sweep.csv"), sweep_csv(&cells))?;
    std::fs::write(dir.join("sweep_timing.csv"), sweep_timing_csv(&cells))?;
    for c in &cells {
        println!(
            "levels {} patch_len {:>3}: mse {:.6} mae {:.6} ({} ms)",
            c.levels,
            c.patch_len,
            c.report.get("mse"),
            c.report.get("mae"),
            c.train_wall_ms
        );
    }
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig) -> Result<(), CliError> {
    let channels = load_dataset(cfg)?.channels();
    let dir = prepare_out(cfg)?;
    let mcfg = cfg.model_config(channels, cfg.horizon)?;
    let opts = GradCheckOptions {
        step: 1e-4,
        tol: cfg.gradcheck_tol,
        max_entries_per_param: (cfg.gradcheck_max_entries > 0).then_some(cfg.gradcheck_max_entries),
    };
    let report = selftest::model_grad_report(&mcfg, cfg.seed, opts)?;
    write_json(&dir.join("gradcheck.json"), &report)?;
    for p in &report.params {
        let flag = if p.max_rel_error <= report.tol { "ok" } else { "FAIL" };
        println!("{flag:<4} {:<40} {:>6} entries  max rel err {:.3e}", p.name, p.entries_checked, p.max_rel_error);
    }
    if report.pass {
        println!("gradient check passed ({} parameters, tol {:.1e})", report.params.len(), report.tol);
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.1e}",
            report.max_rel_error(),
            report.tol
        )))
    }
}

pub fn selftest() -> Result<(), CliError> {
    let outcomes = selftest::run_all();
    for c in &outcomes {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {} ({} ms): {}", c.name, c.elapsed_ms, c.detail);
    }
    let failed: Vec<&str> = outcomes.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("self-test failures: {}", failed.join(", "))))
    }
}
