use serde::{Deserialize, Serialize};

use crate::correction::CorrectionConfig;
use crate::data::patch_count;
use crate::error::{Error, Result};

/// How a Mixer stage merges its input with its transformed output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipMode {
    /// Concatenate along the feature axis and project 2D → D.
    ConcatProject,
    /// Elementwise sum.
    ResidualAdd,
}

/// Second operand of each non-bottom decoder merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderSkip {
    /// `W_y(de_i(Y_out,i+1) + de_i(X_out,i))`: the same-level encoder output.
    SameLevelEncoder,
    /// `W_y(de_i(Y_out,i+1) + de_i(Y_out,i+1))`, the formula exactly as printed.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub channels: usize,
    pub input_len: usize,
    pub horizon: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub d_model: usize,
    pub levels: usize,
    pub dropout: f64,
    pub temporal_hidden: usize,
    pub channel_hidden: usize,
    pub share_temporal_mlp: bool,
    pub skip_mode: SkipMode,
    pub decoder_skip: DecoderSkip,
    pub sc_enabled: bool,
    pub correction: CorrectionConfig,
    pub ln_eps: f64,
}

impl ModelConfig {
    /// Long-term defaults: L=96, P=16, S=8, M=3, D=128, hidden widths 2N and 2D, dropout 0.1.
    pub fn long_term(channels: usize, horizon: usize) -> Self {
        Self::with_dims(channels, 96, horizon, 16, 8, 128, 3)
    }

    /// Short-term defaults: P=8, S=4.
    pub fn short_term(input_len: usize, horizon: usize) -> Self {
        Self::with_dims(1, input_len, horizon, 8, 4, 128, 3)
    }

    /// Conventional widths derived from the given dimensions.
    pub fn with_dims(
        channels: usize,
        input_len: usize,
        horizon: usize,
        patch_len: usize,
        stride: usize,
        d_model: usize,
        levels: usize,
    ) -> Self {
        let n = if patch_len <= input_len && stride > 0 {
            patch_count(input_len, patch_len, stride)
        } else {
            2
        };
        Self {
            channels,
            input_len,
            horizon,
            patch_len,
            stride,
            d_model,
            levels,
            dropout: 0.1,
            temporal_hidden: 2 * n,
            channel_hidden: 2 * d_model,
            share_temporal_mlp: false,
            skip_mode: SkipMode::ConcatProject,
            decoder_skip: DecoderSkip::SameLevelEncoder,
            sc_enabled: true,
            correction: CorrectionConfig::default(),
            ln_eps: 1e-5,
        }
    }

    /// Re-derives the hidden widths after a dimension change.
    pub fn with_default_widths(mut self) -> Self {
        self.temporal_hidden = 2 * self.num_patches();
        self.channel_hidden = 2 * self.d_model;
        self
    }

    pub fn num_patches(&self) -> usize {
        patch_count(self.input_len, self.patch_len, self.stride)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("channels", self.channels),
            ("input_len", self.input_len),
            ("horizon", self.horizon),
            ("patch_len", self.patch_len),
            ("stride", self.stride),
            ("d_model", self.d_model),
            ("temporal_hidden", self.temporal_hidden),
            ("channel_hidden", self.channel_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.patch_len > self.input_len {
            return Err(Error::Config(format!(
                "patch_len {} exceeds input_len {}",
                self.patch_len, self.input_len
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.ln_eps > 0.0) || !(self.correction.eps > 0.0) {
            return Err(Error::Config("eps values must be positive".into()));
        }
        Ok(())
    }
}
