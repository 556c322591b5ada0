//! Flat run configuration.
//!
//! Precedence, lowest to highest: built-in defaults, the `--config` file,
//! the `UMIXER_OUT_DIR` environment variable (output directory only), then
//! `--set key=value` flags and `--out`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use umixer::correction::{AlphaRule, CorrectionConfig, CorrelationMode, LagAxis};
use umixer::eval::{DataSpec, SplitSpec};
use umixer::model::{DecoderSkip, ModelConfig, SkipMode};
use umixer::train::TrainConfig;

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "UMIXER_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Wide CSV: a timestamp column followed by one numeric column per channel.
    LongCsv,
    /// M4-style rows: series id followed by its values.
    M4,
    /// Built-in generator named by `dataset`.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: String,
    pub dataset_kind: DatasetKind,
    pub dataset_name: String,
    pub synthetic_length: usize,
    pub synthetic_seed: u64,
    /// Held-out values for M4 evaluation.
    pub m4_test: Option<String>,
    pub m4_frequency: String,
    pub max_windows_per_series: usize,
    pub output_dir: String,

    pub input_len: usize,
    pub horizon: usize,
    /// Horizons trained and evaluated as separate models; defaults to `[horizon]`.
    pub horizons: Vec<usize>,
    pub patch_len: usize,
    pub stride: usize,
    pub d_model: usize,
    pub levels: usize,
    pub dropout: f64,
    /// 0 selects 2·N.
    pub temporal_hidden: usize,
    /// 0 selects 2·D.
    pub channel_hidden: usize,
    pub share_temporal_mlp: bool,
    pub skip_mode: SkipMode,
    pub decoder_skip: DecoderSkip,
    pub ln_eps: f64,
    pub sc_enabled: bool,
    pub sc_mode: CorrelationMode,
    pub sc_centered: bool,
    pub sc_eps: f64,
    pub sc_axis: LagAxis,
    pub sc_alpha_rule: AlphaRule,
    pub sc_use_fft: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// 0 disables early stopping.
    pub patience: usize,
    /// 0 disables clipping.
    pub grad_clip: f64,

    pub split: [f64; 3],
    /// Exact segment lengths; overrides `split` when all three are positive.
    pub split_lengths: [usize; 3],
    pub standardize: bool,
    pub train_stride: usize,
    pub eval_stride: usize,
    pub eval_batch_size: usize,

    pub ablation_seeds: Vec<u64>,
    pub sweep_levels: Vec<usize>,
    pub sweep_patch_lens: Vec<usize>,
    pub gradcheck_tol: f64,
    /// 0 checks every entry.
    pub gradcheck_max_entries: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sc = CorrectionConfig::default();
        Self {
            dataset: "sine_trend".into(),
            dataset_kind: DatasetKind::Synthetic,
            dataset_name: String::new(),
            synthetic_length: 2000,
            synthetic_seed: 0,
            m4_test: None,
            m4_frequency: "monthly".into(),
            max_windows_per_series: 32,
            output_dir: "umixer-out".into(),
            input_len: 96,
            horizon: 96,
            horizons: Vec::new(),
            patch_len: 16,
            stride: 8,
            d_model: 128,
            levels: 3,
            dropout: 0.1,
            temporal_hidden: 0,
            channel_hidden: 0,
            share_temporal_mlp: false,
            skip_mode: SkipMode::ConcatProject,
            decoder_skip: DecoderSkip::SameLevelEncoder,
            ln_eps: 1e-5,
            sc_enabled: true,
            sc_mode: sc.mode,
            sc_centered: sc.centered,
            sc_eps: sc.eps,
            sc_axis: sc.axis,
            sc_alpha_rule: sc.alpha_rule,
            sc_use_fft: sc.use_fft,
            epochs: 10,
            batch_size: 16,
            lr: 1e-4,
            seed: 2021,
            patience: 0,
            grad_clip: 0.0,
            split: [0.7, 0.1, 0.2],
            split_lengths: [0, 0, 0],
            standardize: true,
            train_stride: 1,
            eval_stride: 1,
            eval_batch_size: 64,
            ablation_seeds: vec![1, 2, 3, 4, 5],
            sweep_levels: vec![0, 1, 2, 3, 4],
            sweep_patch_lens: vec![8, 16, 24, 32],
            gradcheck_tol: 1e-4,
            gradcheck_max_entries: 0,
        }
    }
}

/// Every accepted key, used to report all unknown keys at once.
pub const KEYS: &[&str] = &[
    "dataset",
    "dataset_kind",
    "dataset_name",
    "synthetic_length",
    "synthetic_seed",
    "m4_test",
    "m4_frequency",
    "max_windows_per_series",
    "output_dir",
    "input_len",
    "horizon",
    "horizons",
    "patch_len",
    "stride",
    "d_model",
    "levels",
    "dropout",
    "temporal_hidden",
    "channel_hidden",
    "share_temporal_mlp",
    "skip_mode",
    "decoder_skip",
    "ln_eps",
    "sc_enabled",
    "sc_mode",
    "sc_centered",
    "sc_eps",
    "sc_axis",
    "sc_alpha_rule",
    "sc_use_fft",
    "epochs",
    "batch_size",
    "lr",
    "seed",
    "patience",
    "grad_clip",
    "split",
    "split_lengths",
    "standardize",
    "train_stride",
    "eval_stride",
    "eval_batch_size",
    "ablation_seeds",
    "sweep_levels",
    "sweep_patch_lens",
    "gradcheck_tol",
    "gradcheck_max_entries",
];

fn parse_value(raw: &str) -> toml::Value {
    // Reuse the TOML grammar for scalars and arrays; anything else is a bare string.
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Merges file contents, environment and flag overrides into a validated config.
    pub fn resolve(
        file: Option<&Path>,
        sets: &[String],
        out: Option<&Path>,
        env_out: Option<String>,
    ) -> Result<Self, CliError> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        if let Some(dir) = env_out {
            table.insert("output_dir".into(), toml::Value::String(dir));
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{s}`")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        if let Some(dir) = out {
            table.insert("output_dir".into(), toml::Value::String(dir.display().to_string()));
        }
        let unknown: Vec<&str> = table.keys().map(String::as_str).filter(|k| !KEYS.contains(k)).collect();
        if !unknown.is_empty() {
            return Err(CliError::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config(self.seed)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.horizons().iter().any(|&h| h == 0) {
            return Err(CliError::Config("horizons must be positive".into()));
        }
        if self.dataset_kind == DatasetKind::M4 && self.m4_test.is_none() {
            log::warn!("m4 dataset without m4_test: evaluate will be unavailable");
        }
        if self.eval_batch_size == 0 || self.train_stride == 0 || self.eval_stride == 0 {
            return Err(CliError::Config("eval_batch_size and strides must be positive".into()));
        }
        Ok(())
    }

    pub fn horizons(&self) -> Vec<usize> {
        if self.horizons.is_empty() {
            vec![self.horizon]
        } else {
            self.horizons.clone()
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }

    pub fn display_name(&self) -> String {
        if !self.dataset_name.is_empty() {
            return self.dataset_name.clone();
        }
        Path::new(&self.dataset)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.dataset.clone())
    }

    pub fn model_config(&self, channels: usize, horizon: usize) -> Result<ModelConfig, CliError> {
        let mut m = ModelConfig::with_dims(
            channels,
            self.input_len,
            horizon,
            self.patch_len,
            self.stride,
            self.d_model,
            self.levels,
        );
        m.dropout = self.dropout;
        if self.temporal_hidden > 0 {
            m.temporal_hidden = self.temporal_hidden;
        }
        if self.channel_hidden > 0 {
            m.channel_hidden = self.channel_hidden;
        }
        m.share_temporal_mlp = self.share_temporal_mlp;
        m.skip_mode = self.skip_mode;
        m.decoder_skip = self.decoder_skip;
        m.ln_eps = self.ln_eps;
        m.sc_enabled = self.sc_enabled;
        m.correction = CorrectionConfig {
            mode: self.sc_mode,
            centered: self.sc_centered,
            eps: self.sc_eps,
            fallback_alpha: 1.0,
            axis: self.sc_axis,
            alpha_rule: self.sc_alpha_rule,
            use_fft: self.sc_use_fft,
        };
        m.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(m)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed,
            patience: (self.patience > 0).then_some(self.patience),
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
        }
    }

    pub fn data_spec(&self) -> DataSpec {
        let split = if self.split_lengths.iter().all(|&v| v > 0) {
            SplitSpec::Lengths(self.split_lengths)
        } else {
            SplitSpec::Ratios(self.split)
        };
        DataSpec {
            split,
            standardize: self.standardize,
            train_stride: self.train_stride,
            eval_stride: self.eval_stride,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
