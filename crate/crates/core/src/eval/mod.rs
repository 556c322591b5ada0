//! Metrics, evaluation protocols, ablations and the level/patch sensitivity sweep.

pub mod metrics;
pub mod naive2;
mod short_term;
mod study;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{chronological_split, make_windows, RawSeries, Standardizer, WindowSample};
use crate::error::{Error, Result};
use crate::model::{Diagnostics, UMixer};
use crate::rng::RngStream;
use crate::tensor::no_grad;
use crate::train::hex;

pub use metrics::{mae, mase, mse, owa, smape};
pub use naive2::{is_seasonal, m4_period, naive2_forecast};
pub use short_term::{evaluate_short_term, short_term_windows, ShortTermOptions};
pub use study::{ablation_suite, sensitivity_sweep, sweep_csv, sweep_timing_csv, AblationResult, SweepCell, Variant, VariantResult};

/// Where train / validation / test boundaries fall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    Ratios([f64; 3]),
    /// Exact segment lengths; steps beyond their sum are ignored.
    Lengths([usize; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub split: SplitSpec,
    /// Fit a per-channel z-score on the training segment and apply it everywhere.
    pub standardize: bool,
    pub train_stride: usize,
    pub eval_stride: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            split: SplitSpec::Ratios([0.7, 0.1, 0.2]),
            standardize: true,
            train_stride: 1,
            eval_stride: 1,
        }
    }
}

/// Windows for one (L, H) pair. Validation and test windows take their inputs
/// from the L steps preceding their segment so every target step is scored.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub scaler: Option<Standardizer>,
    pub fingerprint: String,
}

pub fn prepare_long_term(series: &RawSeries, input_len: usize, horizon: usize, spec: &DataSpec) -> Result<PreparedData> {
    let (b1, b2, end) = match spec.split {
        SplitSpec::Ratios(r) => {
            let (tr, va, _) = chronological_split(series, r)?;
            (tr.len(), tr.len() + va.len(), series.len())
        }
        SplitSpec::Lengths([a, b, c]) => {
            let end = a + b + c;
            if a == 0 || b == 0 || c == 0 || end > series.len() {
                return Err(Error::Config(format!(
                    "split lengths {a}/{b}/{c} do not fit a series of {} steps",
                    series.len()
                )));
            }
            (a, a + b, end)
        }
    };
    if b1 < input_len {
        return Err(Error::InsufficientData {
            required: input_len + horizon,
            available: b1,
        });
    }
    let scaler = spec.standardize.then(|| Standardizer::fit(&series.slice(0, b1)));
    let scaled = match &scaler {
        Some(s) => s.apply(series),
        None => series.clone(),
    };
    let train = make_windows(&scaled.slice(0, b1), input_len, horizon, spec.train_stride)?;
    let val = make_windows(&scaled.slice(b1 - input_len, b2), input_len, horizon, spec.eval_stride)?;
    let test = make_windows(&scaled.slice(b2 - input_len, end), input_len, horizon, spec.eval_stride)?;

    let mut h = Sha256::new();
    for v in [input_len, horizon, b1, b2, end, spec.train_stride, spec.eval_stride] {
        h.update((v as u64).to_le_bytes());
    }
    for row in &scaled.values[..] {
        for v in &row[..end] {
            h.update(v.to_le_bytes());
        }
    }
    Ok(PreparedData {
        train,
        val,
        test,
        scaler,
        fingerprint: hex(&h.finalize()),
    })
}

/// α and mean-shift statistics accumulated over an evaluation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSummary {
    pub samples: usize,
    pub alpha_mean: Option<f64>,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub mean_shift_abs_mean: Option<f64>,
    pub warnings: usize,
}

#[derive(Default)]
struct SummaryAcc {
    samples: usize,
    alpha_sum: f64,
    alpha_n: usize,
    alpha_min: f64,
    alpha_max: f64,
    shift_sum: f64,
    shift_n: usize,
    warnings: usize,
    first_warnings: Vec<String>,
}

impl SummaryAcc {
    fn new() -> Self {
        Self {
            alpha_min: f64::INFINITY,
            alpha_max: f64::NEG_INFINITY,
            ..Default::default()
        }
    }

    fn add(&mut self, d: &Diagnostics) {
        for c in &d.corrections {
            self.samples += 1;
            for &a in &c.alpha {
                self.alpha_sum += a;
                self.alpha_n += 1;
                self.alpha_min = self.alpha_min.min(a);
                self.alpha_max = self.alpha_max.max(a);
            }
            for s in c.mean_shift() {
                self.shift_sum += s.abs();
                self.shift_n += 1;
            }
        }
        self.warnings += d.warnings.len();
        for w in &d.warnings {
            if self.first_warnings.len() < 5 && !self.first_warnings.contains(w) {
                self.first_warnings.push(w.clone());
            }
        }
    }

    fn finish(self) -> (CorrectionSummary, Vec<String>) {
        let some = |ok: bool, v: f64| ok.then_some(v);
        (
            CorrectionSummary {
                samples: self.samples,
                alpha_mean: some(self.alpha_n > 0, self.alpha_sum / self.alpha_n.max(1) as f64),
                alpha_min: some(self.alpha_n > 0, self.alpha_min),
                alpha_max: some(self.alpha_n > 0, self.alpha_max),
                mean_shift_abs_mean: some(self.shift_n > 0, self.shift_sum / self.shift_n.max(1) as f64),
                warnings: self.warnings,
            },
            self.first_warnings,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub horizon: usize,
    pub metrics: BTreeMap<String, f64>,
    pub samples: usize,
    pub config_fingerprint: String,
    pub data_fingerprint: String,
    pub correction: CorrectionSummary,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn get(&self, metric: &str) -> f64 {
        self.metrics.get(metric).copied().unwrap_or(f64::NAN)
    }
}

/// Forecasts for every window plus aggregated correction diagnostics.
pub fn forecast_windows(
    model: &UMixer,
    windows: &[WindowSample],
    batch_size: usize,
) -> Result<(Vec<Vec<f64>>, CorrectionSummary, Vec<String>)> {
    let mut rng = RngStream::new(0);
    let mut preds = Vec::with_capacity(windows.len());
    let mut acc = SummaryAcc::new();
    no_grad(|| -> Result<()> {
        for batch in windows.chunks(batch_size.max(1)) {
            let inputs: Vec<&[f64]> = batch.iter().map(|w| w.x.as_slice()).collect();
            let out = model.forward(&inputs, &mut rng, false)?;
            acc.add(&out.diagnostics);
            let per = out.forecast.numel() / batch.len();
            preds.extend(out.forecast.data().chunks(per).map(|c| c.to_vec()));
        }
        Ok(())
    })?;
    let (summary, warnings) = acc.finish();
    Ok((preds, summary, warnings))
}

/// MSE and MAE over every entry of every test window.
pub fn evaluate_long_term(
    model: &UMixer,
    windows: &[WindowSample],
    dataset: &str,
    data_fingerprint: &str,
    batch_size: usize,
) -> Result<MetricsReport> {
    if windows.is_empty() {
        return Err(Error::Contract("no test windows to evaluate".into()));
    }
    let (preds, correction, warnings) = forecast_windows(model, windows, batch_size)?;
    let truth: Vec<f64> = windows.iter().flat_map(|w| w.y.iter().copied()).collect();
    let flat: Vec<f64> = preds.into_iter().flatten().collect();
    let mut metrics = BTreeMap::new();
    metrics.insert("mse".to_string(), mse(&truth, &flat)?);
    metrics.insert("mae".to_string(), mae(&truth, &flat)?);
    Ok(MetricsReport {
        dataset: dataset.to_string(),
        horizon: model.config.horizon,
        metrics,
        samples: windows.len(),
        config_fingerprint: crate::train::config_fingerprint(&model.config),
        data_fingerprint: data_fingerprint.to_string(),
        correction,
        warnings,
    })
}

/// Per-horizon rows and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonTable {
    pub rows: Vec<MetricsReport>,
    pub avg: BTreeMap<String, f64>,
}

impl HorizonTable {
    pub fn new(rows: Vec<MetricsReport>) -> Self {
        let mut avg = BTreeMap::new();
        if let Some(first) = rows.first() {
            for key in first.metrics.keys() {
                let mean = rows.iter().map(|r| r.get(key)).sum::<f64>() / rows.len() as f64;
                avg.insert(key.clone(), mean);
            }
        }
        Self { rows, avg }
    }

    pub fn to_csv(&self) -> String {
        let keys: Vec<&String> = self.avg.keys().collect();
        let mut out = format!(
            "horizon,{}\n",
            keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")
        );
        for r in &self.rows {
            let vals: Vec<String> = keys.iter().map(|k| format!("{}", r.get(k))).collect();
            out.push_str(&format!("{},{}\n", r.horizon, vals.join(",")));
        }
        let vals: Vec<String> = keys.iter().map(|k| format!("{}", self.avg[*k])).collect();
        out.push_str(&format!("avg,{}\n", vals.join(",")));
        out
    }
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;
    use crate::model::ModelConfig;

    #[test]
    fn prepared_windows_cover_segments() {
        let s = synthetic::sine_trend(200, 0);
        let spec = DataSpec {
            split: SplitSpec::Lengths([120, 40, 40]),
            ..Default::default()
        };
        let d = prepare_long_term(&s, 16, 8, &spec).unwrap();
        assert_eq!(d.train.len(), 120 - 24 + 1);
        assert_eq!(d.val.len(), 40 - 8 + 1);
        assert_eq!(d.test.len(), 40 - 8 + 1);
        let again = prepare_long_term(&s, 16, 8, &spec).unwrap();
        assert_eq!(d.fingerprint, again.fingerprint);
        let other = prepare_long_term(&s, 16, 4, &spec).unwrap();
        assert_ne!(d.fingerprint, other.fingerprint);
        let sc = d.scaler.unwrap();
        assert_eq!(sc.mean.len(), 2);
    }

    #[test]
    fn oversized_split_rejected() {
        let s = synthetic::sine_trend(100, 0);
        let spec = DataSpec {
            split: SplitSpec::Lengths([80, 20, 20]),
            ..Default::default()
        };
        assert!(prepare_long_term(&s, 16, 8, &spec).is_err());
    }

    #[test]
    fn avg_row_is_mean_of_rows() {
        let row = |h: usize, m: f64| MetricsReport {
            dataset: "x".into(),
            horizon: h,
            metrics: [("mse".to_string(), m), ("mae".to_string(), m / 2.0)].into_iter().collect(),
            samples: 1,
            config_fingerprint: String::new(),
            data_fingerprint: String::new(),
            correction: Default::default(),
            warnings: vec![],
        };
        let t = HorizonTable::new(vec![row(96, 0.1), row(192, 0.2), row(336, 0.3), row(720, 0.7)]);
        assert!((t.avg["mse"] - 0.325).abs() < 1e-12);
        assert!((t.avg["mae"] - 0.1625).abs() < 1e-12);
        assert!(t.to_csv().lines().last().unwrap().starts_with("avg,"));
    }

    #[test]
    fn identity_unet_reports_unit_alpha() {
        let mut cfg = ModelConfig::with_dims(2, 16, 4, 4, 4, 6, 0);
        cfg.dropout = 0.0;
        let model = UMixer::new(cfg, &mut RngStream::new(0)).unwrap();
        let s = synthetic::sine_trend(120, 0);
        let d = prepare_long_term(&s, 16, 4, &DataSpec::default()).unwrap();
        let r = evaluate_long_term(&model, &d.test, "sine", &d.fingerprint, 8).unwrap();
        assert_eq!(r.correction.alpha_min, Some(1.0));
        assert_eq!(r.correction.alpha_max, Some(1.0));
        assert_eq!(r.correction.mean_shift_abs_mean, Some(0.0));
        assert!(r.get("mse") >= 0.0 && r.get("mae") <= r.get("mse").sqrt() + 1e-12);
    }
}
