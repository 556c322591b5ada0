use std::collections::BTreeMap;

use crate::data::{M4Series, WindowSample};
use crate::error::{Error, Result};
use crate::model::UMixer;

use super::{forecast_windows, mase, naive2_forecast, owa, smape, MetricsReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ShortTermOptions {
    pub input_len: usize,
    pub horizon: usize,
    /// Seasonal period used by MASE and Naive2.
    pub period: usize,
    /// Most recent training windows kept per series.
    pub max_windows_per_series: usize,
}

/// The `len` values ending at `end`, left-padded with the first value when the
/// history is shorter.
fn padded_tail(values: &[f64], end: usize, len: usize) -> Vec<f64> {
    let start = end.saturating_sub(len);
    let pad = len - (end - start);
    let mut out = vec![values[0]; pad];
    out.extend_from_slice(&values[start..end]);
    out
}

/// Training windows from each series' history with its last `horizon` steps held
/// out, plus one validation window per series predicting that held-out tail.
pub fn short_term_windows(series: &[M4Series], opts: &ShortTermOptions) -> (Vec<WindowSample>, Vec<WindowSample>) {
    let (l, h) = (opts.input_len, opts.horizon);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for s in series {
        let v = &s.values;
        if v.len() < h + 2 {
            continue;
        }
        let cut = v.len() - h;
        let mk = |target_start: usize, values: &[f64]| WindowSample {
            start: target_start,
            channels: 1,
            input_len: l,
            horizon: h,
            x: padded_tail(values, target_start, l),
            y: values[target_start..target_start + h].to_vec(),
        };
        val.push(mk(cut, v));
        let region = &v[..cut];
        if region.len() > h {
            let last = region.len() - h;
            let first = last.saturating_sub(opts.max_windows_per_series.saturating_sub(1)).max(1);
            for t in first..=last {
                train.push(mk(t, region));
            }
        }
    }
    (train, val)
}

/// sMAPE, MASE and OWA of the model's forecasts against held-out test values.
pub fn evaluate_short_term(
    model: &UMixer,
    insample: &[M4Series],
    outsample: &[M4Series],
    opts: &ShortTermOptions,
    dataset: &str,
    batch_size: usize,
) -> Result<MetricsReport> {
    if insample.len() != outsample.len() || insample.is_empty() {
        return Err(Error::dim("evaluate_short_term", &[insample.len()], &[outsample.len()]));
    }
    let mut windows = Vec::with_capacity(insample.len());
    for (tr, te) in insample.iter().zip(outsample) {
        if tr.id != te.id {
            return Err(Error::Contract(format!("series ids differ: {} vs {}", tr.id, te.id)));
        }
        if te.values.len() < opts.horizon || tr.values.is_empty() {
            return Err(Error::InsufficientData {
                required: opts.horizon,
                available: te.values.len(),
            });
        }
        windows.push(WindowSample {
            start: tr.values.len(),
            channels: 1,
            input_len: opts.input_len,
            horizon: opts.horizon,
            x: padded_tail(&tr.values, tr.values.len(), opts.input_len),
            y: te.values[..opts.horizon].to_vec(),
        });
    }
    let (preds, correction, mut warnings) = forecast_windows(model, &windows, batch_size)?;

    let (mut smape_sum, mut smape_n2_sum) = (0.0, 0.0);
    let (mut mase_sum, mut mase_n2_sum, mut mase_count) = (0.0, 0.0, 0usize);
    for ((tr, w), p) in insample.iter().zip(&windows).zip(&preds) {
        let (n2, warn) = naive2_forecast(&tr.values, opts.period, opts.horizon);
        if let Some(msg) = warn {
            warnings.push(format!("{}: {msg}", tr.id));
        }
        smape_sum += smape(&w.y, p)?;
        smape_n2_sum += smape(&w.y, &n2)?;
        match (mase(&w.y, p, &tr.values, opts.period), mase(&w.y, &n2, &tr.values, opts.period)) {
            (Ok(a), Ok(b)) => {
                mase_sum += a;
                mase_n2_sum += b;
                mase_count += 1;
            }
            (Err(e), _) | (_, Err(e)) => warnings.push(format!("{}: excluded from MASE: {e}", tr.id)),
        }
    }
    let n = windows.len() as f64;
    let (s, s2) = (smape_sum / n, smape_n2_sum / n);
    let mut metrics = BTreeMap::new();
    metrics.insert("smape".to_string(), s);
    if mase_count > 0 {
        let (m, m2) = (mase_sum / mase_count as f64, mase_n2_sum / mase_count as f64);
        metrics.insert("mase".to_string(), m);
        metrics.insert("owa".to_string(), owa(s, m, s2, m2));
    }
    Ok(MetricsReport {
        dataset: dataset.to_string(),
        horizon: opts.horizon,
        metrics,
        samples: windows.len(),
        config_fingerprint: crate::train::config_fingerprint(&model.config),
        data_fingerprint: String::new(),
        correction,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::rng::RngStream;

    fn series(id: &str, values: Vec<f64>) -> M4Series {
        M4Series { id: id.into(), values }
    }

    #[test]
    fn padding_repeats_first_value() {
        assert_eq!(padded_tail(&[5.0, 6.0], 2, 4), vec![5.0, 5.0, 5.0, 6.0]);
        assert_eq!(padded_tail(&[1.0, 2.0, 3.0, 4.0], 3, 2), vec![2.0, 3.0]);
    }

    #[test]
    fn windows_hold_out_the_tail() {
        let opts = ShortTermOptions {
            input_len: 4,
            horizon: 2,
            period: 1,
            max_windows_per_series: 3,
        };
        let s = series("a", (0..10).map(f64::from).collect());
        let (tr, va) = short_term_windows(&[s], &opts);
        assert_eq!(va.len(), 1);
        assert_eq!(va[0].y, vec![8.0, 9.0]);
        assert_eq!(va[0].x, vec![4.0, 5.0, 6.0, 7.0]);
        assert_eq!(tr.len(), 3);
        assert!(tr.iter().all(|w| w.start + 2 <= 8));
        assert_eq!(tr.last().unwrap().y, vec![6.0, 7.0]);
    }

    #[test]
    fn report_has_all_metrics_and_excludes_flat_series() {
        let mut cfg = ModelConfig::with_dims(1, 8, 2, 4, 2, 4, 1);
        cfg.dropout = 0.0;
        let model = UMixer::new(cfg, &mut RngStream::new(0)).unwrap();
        let opts = ShortTermOptions {
            input_len: 8,
            horizon: 2,
            period: 1,
            max_windows_per_series: 10,
        };
        let ins = vec![series("a", (1..=12).map(f64::from).collect()), series("b", vec![3.0; 12])];
        let outs = vec![series("a", vec![13.0, 14.0]), series("b", vec![3.0, 3.0])];
        let r = evaluate_short_term(&model, &ins, &outs, &opts, "toy", 4).unwrap();
        for k in ["smape", "mase", "owa"] {
            assert!(r.get(k).is_finite() && r.get(k) >= 0.0, "{k}");
        }
        assert!(r.warnings.iter().any(|w| w.starts_with("b: excluded")));
    }
}
