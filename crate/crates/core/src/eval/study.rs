use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::RawSeries;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::{train, TrainConfig};

use super::{evaluate_long_term, mean_std, prepare_long_term, DataSpec, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Unet removed: zero encoder/decoder levels.
    WoUe,
    /// Stationarity correction disabled.
    WoSc,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::WoUe, Variant::WoSc];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoUe => "wo_ue",
            Variant::WoSc => "wo_sc",
        }
    }

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::WoUe => c.levels = 0,
            Variant::WoSc => c.sc_enabled = false,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MetricsReport>,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub data_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub dataset: String,
    pub variants: Vec<VariantResult>,
}

impl AblationResult {
    pub fn variant(&self, v: Variant) -> &VariantResult {
        self.variants.iter().find(|r| r.variant == v).expect("all variants present")
    }

    /// Number of seeds where variant `a` has test MSE no greater than `b`.
    pub fn wins(&self, a: Variant, b: Variant) -> usize {
        let (ra, rb) = (self.variant(a), self.variant(b));
        ra.per_seed
            .iter()
            .zip(&rb.per_seed)
            .filter(|(x, y)| x.get("mse") <= y.get("mse"))
            .count()
    }

    /// One row per (variant, seed) followed by a mean row per variant.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seed,mse,mae\n");
        for v in &self.variants {
            for (seed, r) in v.seeds.iter().zip(&v.per_seed) {
                out.push_str(&format!("{},{},{},{}\n", v.variant.name(), seed, r.get("mse"), r.get("mae")));
            }
        }
        for v in &self.variants {
            out.push_str(&format!("{},mean,{},{}\n", v.variant.name(), v.mse_mean, v.mae_mean));
        }
        out
    }
}

/// Trains and tests each variant under every seed with otherwise identical settings.
pub fn ablation_suite(
    dataset: &str,
    series: &RawSeries,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    data_spec: &DataSpec,
    seeds: &[u64],
) -> Result<AblationResult> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut variants = Vec::new();
    for v in Variant::ALL {
        let cfg = v.apply(base);
        let data = prepare_long_term(series, cfg.input_len, cfg.horizon, data_spec)?;
        let mut per_seed = Vec::new();
        for &seed in seeds {
            let tc = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            let out = train(&cfg, &data.train, &data.val, &tc)?;
            let report = evaluate_long_term(&out.model, &data.test, dataset, &data.fingerprint, tc.batch_size)?;
            log::info!("{} seed {seed}: mse {:.6}", v.name(), report.get("mse"));
            per_seed.push(report);
        }
        let mses: Vec<f64> = per_seed.iter().map(|r| r.get("mse")).collect();
        let maes: Vec<f64> = per_seed.iter().map(|r| r.get("mae")).collect();
        let (mse_mean, mse_std) = mean_std(&mses);
        let (mae_mean, mae_std) = mean_std(&maes);
        variants.push(VariantResult {
            variant: v,
            seeds: seeds.to_vec(),
            per_seed,
            mse_mean,
            mse_std,
            mae_mean,
            mae_std,
            data_fingerprint: data.fingerprint,
        });
    }
    let fp = &variants[0].data_fingerprint;
    if variants.iter().any(|v| &v.data_fingerprint != fp) {
        return Err(Error::Contract("ablation variants saw different data splits".into()));
    }
    Ok(AblationResult {
        dataset: dataset.to_string(),
        variants,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub levels: usize,
    pub patch_len: usize,
    pub report: MetricsReport,
    pub train_wall_ms: u64,
}

/// Trains and evaluates every (levels, patch_len) pair, recording training time.
pub fn sensitivity_sweep(
    dataset: &str,
    series: &RawSeries,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    data_spec: &DataSpec,
    levels: &[usize],
    patch_lens: &[usize],
) -> Result<Vec<SweepCell>> {
    if let Some(&p) = patch_lens.iter().find(|&&p| p > base.input_len || p == 0) {
        return Err(Error::Config(format!(
            "patch length {p} must be in 1..={}",
            base.input_len
        )));
    }
    let data = prepare_long_term(series, base.input_len, base.horizon, data_spec)?;
    let mut cells = Vec::with_capacity(levels.len() * patch_lens.len());
    for &m in levels {
        for &p in patch_lens {
            let mut cfg = base.clone();
            cfg.levels = m;
            cfg.patch_len = p;
            let cfg = cfg.with_default_widths();
            let started = Instant::now();
            let out = train(&cfg, &data.train, &data.val, train_cfg)?;
            let train_wall_ms = started.elapsed().as_millis() as u64;
            let report = evaluate_long_term(&out.model, &data.test, dataset, &data.fingerprint, train_cfg.batch_size)?;
            log::info!("M={m} P={p}: mse {:.6} in {train_wall_ms} ms", report.get("mse"));
            cells.push(SweepCell {
                levels: m,
                patch_len: p,
                report,
                train_wall_ms,
            });
        }
    }
    Ok(cells)
}

/// `levels,patch_len,mse,mae`.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("levels,patch_len,mse,mae\n");
    for c in cells {
        out.push_str(&format!("{},{},{},{}\n", c.levels, c.patch_len, c.report.get("mse"), c.report.get("mae")));
    }
    out
}

/// `levels,patch_len,train_wall_ms`, kept apart from the reproducible metrics.
pub fn sweep_timing_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("levels,patch_len,train_wall_ms\n");
    for c in cells {
        out.push_str(&format!("{},{},{}\n", c.levels, c.patch_len, c.train_wall_ms));
    }
    out
}
