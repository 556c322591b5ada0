//! Fast oracle checks runnable from a release binary.
//!
//! Each check compares production code against an independent computation
//! (direct sums, brute-force enumeration, hand-computed fixtures, central
//! finite differences) and reports a single pass/fail outcome.

use std::time::Instant;

use serde::Serialize;

use crate::correction::{
    self, apply_correction, autocorr_matrix, autocovariance_direct, autocovariance_fft, CorrectionConfig,
    CorrelationMode,
};
use crate::data::{patch_count, patchify};
use crate::error::Result;
use crate::eval::{mae, mase, mse, naive2_forecast, owa, smape};
use crate::model::{model_forward, CorrectionSource, ModelConfig, UMixer};
use crate::rng::RngStream;
use crate::tensor::{grad_check_with, no_grad, GradCheckOptions, GradReport, ParamStore, Tensor};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed_ms: u128,
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckOutcome {
    let t = Instant::now();
    let (pass, detail) = f();
    CheckOutcome {
        name,
        pass,
        detail,
        elapsed_ms: t.elapsed().as_millis(),
    }
}

/// The smallest configuration used for end-to-end gradient checks.
pub fn gradcheck_config() -> ModelConfig {
    let mut cfg = ModelConfig::with_dims(2, 8, 4, 4, 2, 4, 1);
    cfg.dropout = 0.0;
    cfg
}

/// Finite-difference check of every parameter of a model under the training
/// loss. Correction statistics are computed once and held fixed, matching the
/// stop-gradient treatment in the backward pass.
pub fn model_grad_report(cfg: &ModelConfig, seed: u64, opts: GradCheckOptions) -> Result<GradReport> {
    let mut model = UMixer::new(cfg.clone(), &mut RngStream::new(seed))?;
    let mut rng = RngStream::new(seed.wrapping_add(1));
    let n_in = cfg.channels * cfg.input_len;
    let inputs: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..n_in).map(|i| (i as f64 * 0.37).sin() + 0.3 * rng.normal()).collect())
        .collect();
    let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
    let targets: Vec<f64> = (0..2 * cfg.channels * cfg.horizon).map(|_| rng.normal()).collect();
    let frozen = no_grad(|| model.forward(&refs, &mut RngStream::new(0), false))?
        .diagnostics
        .corrections;
    let params = model.params.clone();
    let forward = |store: &ParamStore| -> Result<Tensor> {
        let mut p = params.clone();
        p.store = store.clone();
        let source = if frozen.is_empty() {
            CorrectionSource::Compute
        } else {
            CorrectionSource::Frozen(&frozen)
        };
        model_forward(&p, cfg, &refs, &mut RngStream::new(0), false, source)?
            .forecast
            .l1_loss(&targets)
    };
    grad_check_with(&mut model.params.store, forward, opts)
}

pub fn gradient_fidelity() -> CheckOutcome {
    timed("gradient fidelity", || {
        let opts = GradCheckOptions {
            step: 1e-4,
            tol: 1e-4,
            max_entries_per_param: None,
        };
        match model_grad_report(&gradcheck_config(), 3, opts) {
            Ok(r) => (
                r.pass,
                format!("{} parameters, max relative error {:.3e}", r.params.len(), r.max_rel_error()),
            ),
            Err(e) => (false, e.to_string()),
        }
    })
}

pub fn fft_oracle(sequences: usize) -> CheckOutcome {
    timed("fft autocovariance oracle", || {
        let mut rng = RngStream::new(2024);
        let mut worst = 0.0f64;
        for _ in 0..sequences {
            let len = 2 + (rng.next_u64() % 511) as usize;
            let seq: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
            let a = autocovariance_fft(&seq);
            let b = autocovariance_direct(&seq);
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs());
            }
        }
        (worst <= 1e-8, format!("{sequences} sequences, max abs diff {worst:.3e}"))
    })
}

pub fn correction_identity() -> CheckOutcome {
    timed("correction identity", || {
        let run = || -> Result<(bool, String)> {
            let dims = [3usize, 6, 4];
            let mut rng = RngStream::new(9);
            let z: Vec<f64> = (0..72).map(|_| rng.normal() + 0.5).collect();
            let cfg = CorrectionConfig::default();
            let state = correction::record_state(&z, dims, &cfg)?;
            let applied = correction::derive_correction(&state, &z, dims, &cfg)?;
            let alpha_ok = applied.alpha.iter().all(|&a| (a - 1.0).abs() <= 1e-12);
            let t = Tensor::new(vec![1, 3, 6, 4], z.clone())?;
            let out = apply_correction(&t, &[applied], cfg.centered, cfg.axis)?;
            let max_diff = out.data().iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

            let seq: Vec<f64> = (0..32).map(|_| rng.normal()).collect();
            let scaled: Vec<f64> = seq.iter().map(|v| 4.0 * v).collect();
            let r = autocovariance_direct(&seq);
            let rs = autocovariance_direct(&scaled);
            let (cov, _) = autocorr_matrix(&r, CorrelationMode::Covariance, 1e-12);
            let (cov_s, _) = autocorr_matrix(&rs, CorrelationMode::Covariance, 1e-12);
            let cov_ok = cov.data.iter().zip(&cov_s.data).all(|(a, b)| 16.0 * a == *b);
            let (nrm, _) = autocorr_matrix(&r, CorrelationMode::Normalized, 1e-12);
            let (nrm_s, _) = autocorr_matrix(&rs, CorrelationMode::Normalized, 1e-12);
            let nrm_ok = nrm.data == nrm_s.data;
            let pass = alpha_ok && max_diff <= 1e-10 && cov_ok && nrm_ok;
            Ok((
                pass,
                format!(
                    "alpha==1 {alpha_ok}, output diff {max_diff:.1e}, covariance c^2 scaling {cov_ok}, normalized invariance {nrm_ok}"
                ),
            ))
        };
        run().unwrap_or_else(|e| (false, e.to_string()))
    })
}

/// Cuts patches by walking an explicitly padded buffer, without the closed-form count.
fn brute_force_patches(row: &[f64], patch_len: usize, stride: usize) -> Vec<Vec<f64>> {
    let mut padded = row.to_vec();
    for _ in 0..stride {
        padded.push(*row.last().expect("non-empty"));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + patch_len <= padded.len() {
        out.push(padded[start..start + patch_len].to_vec());
        start += stride;
    }
    out
}

pub fn patch_arithmetic() -> CheckOutcome {
    timed("patch arithmetic", || {
        let mut cases = 0usize;
        for l in 1..=64usize {
            let row: Vec<f64> = (0..l).map(|t| t as f64).collect();
            for p in 1..=l {
                for s in 1..=16usize {
                    cases += 1;
                    let want = brute_force_patches(&row, p, s);
                    if patch_count(l, p, s) != want.len() {
                        return (false, format!("count mismatch at L={l} P={p} S={s}"));
                    }
                    let got = match patchify(&row, 1, p, s) {
                        Ok(g) => g,
                        Err(e) => return (false, format!("L={l} P={p} S={s}: {e}")),
                    };
                    if (0..want.len()).any(|k| got.row(0, k) != want[k].as_slice()) {
                        return (false, format!("content mismatch at L={l} P={p} S={s}"));
                    }
                }
            }
        }
        (true, format!("{cases} (L, P, S) triples"))
    })
}

pub fn metric_oracles() -> CheckOutcome {
    timed("metric oracles", || {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        let mut failures = Vec::new();
        let mut check = |name: &str, ok: bool| {
            if !ok {
                failures.push(name.to_string());
            }
        };
        let run = |f: &mut dyn FnMut(&str, bool)| -> Result<()> {
            f("mse", close(mse(&[0.0, 0.0], &[1.0, 3.0])?, 5.0));
            f("mae", close(mae(&[0.0, 0.0], &[1.0, 3.0])?, 2.0));
            f("smape", close(smape(&[10.0], &[20.0])?, 66.666_666_666_666_67));
            f("smape 0/0", close(smape(&[0.0, 4.0], &[0.0, 2.0])?, 100.0 * (2.0 / 6.0)));
            // insample 2,4,8,16 with m=1 → mean diff (2+4+8)/3
            f("mase", close(mase(&[20.0, 30.0], &[18.0, 34.0], &[2.0, 4.0, 8.0, 16.0], 1)?, 3.0 / (14.0 / 3.0)));
            let insample: Vec<f64> = (0..24).map(|t| 10.0 + [1.0, 3.0, 2.0, 5.0][t % 4] + 0.01 * t as f64).collect();
            let truth = [12.0, 14.0, 13.0, 16.0];
            let (n2, _) = naive2_forecast(&insample, 4, 4);
            let s2 = smape(&truth, &n2)?;
            let m2 = mase(&truth, &n2, &insample, 4)?;
            f("owa(naive2, naive2)", close(owa(s2, m2, s2, m2), 1.0));
            f("owa fixture", close(owa(5.0, 0.5, 10.0, 1.0), 0.5));
            Ok(())
        };
        if let Err(e) = run(&mut check) {
            return (false, e.to_string());
        }
        if failures.is_empty() {
            (true, "mse, mae, smape (incl. 0/0), mase, owa fixtures".into())
        } else {
            (false, format!("failed: {}", failures.join(", ")))
        }
    })
}

/// All fast checks in a fixed order.
pub fn run_all() -> Vec<CheckOutcome> {
    vec![
        gradient_fidelity(),
        fft_oracle(200),
        correction_identity(),
        patch_arithmetic(),
        metric_oracles(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        for c in [fft_oracle(20), correction_identity(), metric_oracles()] {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn brute_force_enumerator_small_case() {
        let p = brute_force_patches(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0], 4, 3);
        let starts: Vec<f64> = p.iter().map(|v| v[0]).collect();
        assert_eq!(starts, vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(p[3], vec![9.0, 9.0, 9.0, 9.0]);
    }
}
