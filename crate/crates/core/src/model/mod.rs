//! The U-Mixer network.
//!
//! Forward pipeline for a batch of C×L inputs:
//! instance normalization → patching → embedding `X_d = X_p·W_val + W_pos`
//! → Unet of Mixer blocks → stationarity correction → flatten and project
//! each channel to L+H steps → keep the last H steps and undo the
//! normalization.

mod block;
mod config;
mod params;

use serde::{Deserialize, Serialize};

use crate::correction::{self, AppliedCorrection, CorrectionState};
use crate::data::{normalize_instance, patchify, NormStats};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

use block::BlockCtx;
pub use config::{DecoderSkip, ModelConfig, SkipMode};
pub use params::{LinearParams, MlpBlockParams, MlpParams, ModelParams};

/// Per-forward diagnostics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// One entry per sample when the correction ran.
    pub corrections: Vec<AppliedCorrection>,
    pub warnings: Vec<String>,
    pub shapes: Vec<(String, Vec<usize>)>,
}

impl Diagnostics {
    pub fn alpha(&self) -> Vec<&[f64]> {
        self.corrections.iter().map(|c| c.alpha.as_slice()).collect()
    }
}

pub struct ForwardOutput {
    /// (B, C, H) forecasts in the original scale.
    pub forecast: Tensor,
    pub diagnostics: Diagnostics,
}

/// Statistics to reuse instead of recomputing them from the current pass.
#[derive(Debug, Clone, Copy)]
pub enum CorrectionSource<'a> {
    Compute,
    Frozen(&'a [AppliedCorrection]),
}

/// A configured network and its parameters.
#[derive(Debug, Clone)]
pub struct UMixer {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl UMixer {
    pub fn new(config: ModelConfig, rng: &mut RngStream) -> Result<Self> {
        let params = ModelParams::init(&config, rng)?;
        Ok(Self { config, params })
    }

    /// Forward pass over a batch of row-major C×L inputs.
    pub fn forward(
        &self,
        inputs: &[&[f64]],
        rng: &mut RngStream,
        training: bool,
    ) -> Result<ForwardOutput> {
        self.forward_with(inputs, rng, training, CorrectionSource::Compute)
    }

    pub fn forward_with(
        &self,
        inputs: &[&[f64]],
        rng: &mut RngStream,
        training: bool,
        source: CorrectionSource<'_>,
    ) -> Result<ForwardOutput> {
        model_forward(&self.params, &self.config, inputs, rng, training, source)
    }

    /// Single-sample inference; returns the C×H forecast row-major.
    pub fn predict(&self, x: &[f64]) -> Result<(Vec<f64>, Diagnostics)> {
        let mut rng = RngStream::new(0);
        let out = crate::tensor::no_grad(|| self.forward(&[x], &mut rng, false))?;
        Ok((out.forecast.data().to_vec(), out.diagnostics))
    }
}

/// `(B, C·N, P) · W_val + W_pos`, reshaped to (B, C, N, D).
pub fn embed(x_p: &Tensor, params: &ModelParams, cfg: &ModelConfig) -> Result<Tensor> {
    let s = &params.store;
    let b = x_p.shape()[0];
    let n = cfg.num_patches();
    let x_d = x_p.linear(&s.leaf(params.w_val), None)?.add_bcast(&s.leaf(params.w_pos))?;
    x_d.reshape(&[b, cfg.channels, n, cfg.d_model])
}

/// Encoders feed each other; decoders run from the deepest level up, merging
/// with the same-level encoder output through `W_y`. M=0 is the identity.
pub fn unet_forward(
    x_d: &Tensor,
    params: &ModelParams,
    cfg: &ModelConfig,
    rng: &mut RngStream,
    training: bool,
) -> Result<Tensor> {
    let m = cfg.levels;
    if m == 0 {
        return Ok(x_d.clone());
    }
    let ctx = BlockCtx {
        store: &params.store,
        dropout: cfg.dropout,
        ln_eps: cfg.ln_eps,
        training,
    };
    let mut enc_out: Vec<Tensor> = Vec::with_capacity(m);
    for enc in &params.encoders {
        let input = enc_out.last().unwrap_or(x_d);
        let out = block::mlp_block_forward(input, enc, &ctx, rng)?;
        enc_out.push(out);
    }
    let mut y = block::mlp_block_forward(&enc_out[m - 1], &params.decoders[m - 1], &ctx, rng)?;
    for level in (0..m - 1).rev() {
        let dec = &params.decoders[level];
        let from_deeper = block::mlp_block_forward(&y, dec, &ctx, rng)?;
        let second = match cfg.decoder_skip {
            DecoderSkip::SameLevelEncoder => block::mlp_block_forward(&enc_out[level], dec, &ctx, rng)?,
            DecoderSkip::Literal => block::mlp_block_forward(&y, dec, &ctx, rng)?,
        };
        let merge = &params.merges[level];
        y = from_deeper
            .add(&second)?
            .linear(&params.store.leaf(merge.w), Some(&params.store.leaf(merge.b)))?;
    }
    Ok(y)
}

/// Flattens each channel's (N, D) block and projects it to L+H steps.
pub fn head_project(y_hat_d: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let sh = y_hat_d.shape();
    if sh.len() != 4 {
        return Err(Error::dim("head_project", sh, &[4]));
    }
    let flat = y_hat_d.reshape(&[sh[0], sh[1], sh[2] * sh[3]])?;
    let s = &params.store;
    flat.linear(&s.leaf(params.head.w), Some(&s.leaf(params.head.b)))
}

/// Columns L..L+H of each channel, scaled back by σ_in and shifted by μ_in.
pub fn denormalize_output(y_p: &Tensor, stats: &[NormStats], input_len: usize, horizon: usize) -> Result<Tensor> {
    let sh = y_p.shape();
    if sh.len() != 3 || sh[0] != stats.len() || sh[2] != input_len + horizon {
        return Err(Error::dim("denormalize_output", sh, &[stats.len(), input_len + horizon]));
    }
    let c = sh[1];
    let tail = y_p.slice_last(input_len, horizon)?;
    let mut scale = Vec::with_capacity(tail.numel());
    let mut shift = Vec::with_capacity(tail.numel());
    for st in stats {
        if st.mu_in.len() != c {
            return Err(Error::dim("denormalize_output", &[c], &[st.mu_in.len()]));
        }
        for ci in 0..c {
            scale.extend(std::iter::repeat(st.sigma_in[ci]).take(horizon));
            shift.extend(std::iter::repeat(st.mu_in[ci]).take(horizon));
        }
    }
    tail.affine_const(&scale, &shift)
}

pub fn model_forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &[&[f64]],
    rng: &mut RngStream,
    training: bool,
    source: CorrectionSource<'_>,
) -> Result<ForwardOutput> {
    let (c, l) = (cfg.channels, cfg.input_len);
    let b = inputs.len();
    if b == 0 {
        return Err(Error::Contract("forward needs at least one input".into()));
    }
    let n = cfg.num_patches();
    let mut stats = Vec::with_capacity(b);
    let mut patches = Vec::with_capacity(b * c * n * cfg.patch_len);
    for x in inputs {
        if x.len() != c * l {
            return Err(Error::dim("model_forward", &[c, l], &[x.len()]));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("input contains non-finite values".into()));
        }
        let (xn, st) = normalize_instance(x, c);
        patches.extend(patchify(&xn, c, cfg.patch_len, cfg.stride)?.patches);
        stats.push(st);
    }
    let mut diag = Diagnostics::default();
    let x_p = Tensor::new(vec![b, c * n, cfg.patch_len], patches)?;
    diag.shapes.push(("x_p".into(), x_p.shape().to_vec()));
    let x_d = embed(&x_p, params, cfg)?;
    diag.shapes.push(("x_d".into(), x_d.shape().to_vec()));

    let dims = [c, n, cfg.d_model];
    let sample_len = c * n * cfg.d_model;
    let x_states: Option<Vec<CorrectionState>> = match (cfg.sc_enabled, source) {
        (true, CorrectionSource::Compute) => {
            let states: Result<Vec<_>> = x_d
                .data()
                .chunks(sample_len)
                .map(|z| correction::record_state(z, dims, &cfg.correction))
                .collect();
            match states {
                Ok(s) => Some(s),
                Err(e) => {
                    diag.warnings.push(format!("stationarity correction skipped: {e}"));
                    None
                }
            }
        }
        _ => None,
    };

    let y_d = unet_forward(&x_d, params, cfg, rng, training)?;
    diag.shapes.push(("y_d".into(), y_d.shape().to_vec()));

    let y_hat_d = if !cfg.sc_enabled {
        y_d
    } else {
        let corrections = match (source, x_states) {
            (CorrectionSource::Frozen(frozen), _) => Some(frozen.to_vec()),
            (CorrectionSource::Compute, Some(states)) => Some(
                states
                    .iter()
                    .zip(y_d.data().chunks(sample_len))
                    .map(|(st, y)| correction::derive_correction(st, y, dims, &cfg.correction))
                    .collect::<Result<Vec<_>>>()?,
            ),
            (CorrectionSource::Compute, None) => None,
        };
        match corrections {
            Some(corr) => {
                let out = correction::apply_correction(&y_d, &corr, cfg.correction.centered, cfg.correction.axis)?;
                for cr in &corr {
                    diag.warnings.extend(cr.warnings.iter().cloned());
                }
                diag.corrections = corr;
                out
            }
            None => y_d,
        }
    };

    let y_p = head_project(&y_hat_d, params)?;
    diag.shapes.push(("y_p".into(), y_p.shape().to_vec()));
    let forecast = denormalize_output(&y_p, &stats, l, cfg.horizon)?;
    diag.shapes.push(("y_hat".into(), forecast.shape().to_vec()));
    for w in &diag.warnings {
        log::debug!("{w}");
    }
    Ok(ForwardOutput {
        forecast,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::patchify;
    use crate::tensor::{backward, grad_check, no_grad, ParamStore};

    fn tiny() -> ModelConfig {
        let mut c = ModelConfig::with_dims(2, 8, 4, 4, 2, 4, 1);
        c.dropout = 0.0;
        c
    }

    fn input(cfg: &ModelConfig, seed: u64) -> Vec<f64> {
        let mut r = RngStream::new(seed);
        (0..cfg.channels * cfg.input_len).map(|i| (i as f64 * 0.3).sin() + 0.2 * r.normal()).collect()
    }

    #[test]
    fn embed_identity_and_zero_cases() {
        let mut cfg = ModelConfig::with_dims(2, 8, 4, 4, 2, 4, 0);
        cfg.dropout = 0.0;
        let mut params = ModelParams::init(&cfg, &mut RngStream::new(0)).unwrap();
        let n = cfg.num_patches();
        let eye: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        *params.store.get_mut(params.w_val).data_mut() = eye;
        params.store.get_mut(params.w_pos).data_mut().fill(0.0);
        let x: Vec<f64> = (0..16).map(f64::from).collect();
        let ps = patchify(&x, 2, 4, 2).unwrap();
        let xp = Tensor::new(vec![1, 2 * n, 4], ps.patches.clone()).unwrap();
        let xd = embed(&xp, &params, &cfg).unwrap();
        assert_eq!(xd.shape(), &[1, 2, n, 4]);
        assert_eq!(xd.data(), &ps.patches[..]);

        let zero = Tensor::zeros(&[1, 2 * n, 4]);
        let pos = params.store.get(params.w_pos).data().to_vec();
        params.store.get_mut(params.w_val).data_mut().fill(0.3);
        *params.store.get_mut(params.w_pos).data_mut() = pos.iter().map(|v| v + 1.0).collect();
        let xd = embed(&zero, &params, &cfg).unwrap();
        assert_eq!(xd.data(), params.store.get(params.w_pos).data());
    }

    #[test]
    fn default_config_shapes() {
        let cfg = ModelConfig::long_term(7, 96);
        let model = UMixer::new(cfg.clone(), &mut RngStream::new(0)).unwrap();
        let x = vec![1.0; 7 * 96];
        let x: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + (i as f64).sin()).collect();
        let (y, diag) = model.predict(&x).unwrap();
        assert_eq!(y.len(), 7 * 96);
        let shape = |k: &str| diag.shapes.iter().find(|(n, _)| n == k).unwrap().1.clone();
        assert_eq!(shape("x_d"), vec![1, 7, 12, 128]);
        assert_eq!(shape("y_d"), vec![1, 7, 12, 128]);
        assert_eq!(shape("y_p"), vec![1, 7, 192]);
        assert_eq!(shape("y_hat"), vec![1, 7, 96]);
    }

    #[test]
    fn unet_identity_at_m0_and_single_level() {
        let mut cfg = tiny();
        cfg.levels = 0;
        let params = ModelParams::init(&cfg, &mut RngStream::new(1)).unwrap();
        let n = cfg.num_patches();
        let mut r = RngStream::new(2);
        let x = Tensor::new(vec![1, 2, n, 4], (0..2 * n * 4).map(|_| r.normal()).collect()).unwrap();
        let y = unet_forward(&x, &params, &cfg, &mut RngStream::new(0), false).unwrap();
        assert_eq!(y.data(), x.data());

        let cfg = tiny();
        let params = ModelParams::init(&cfg, &mut RngStream::new(1)).unwrap();
        let y = unet_forward(&x, &params, &cfg, &mut RngStream::new(0), false).unwrap();
        let ctx = BlockCtx {
            store: &params.store,
            dropout: 0.0,
            ln_eps: cfg.ln_eps,
            training: false,
        };
        let mut r = RngStream::new(0);
        let e = block::mlp_block_forward(&x, &params.encoders[0], &ctx, &mut r).unwrap();
        let d = block::mlp_block_forward(&e, &params.decoders[0], &ctx, &mut r).unwrap();
        assert_eq!(y.data(), d.data());
    }

    #[test]
    fn unet_three_levels_keeps_shape() {
        let mut cfg = ModelConfig::with_dims(2, 16, 4, 4, 4, 6, 3);
        cfg.dropout = 0.0;
        let params = ModelParams::init(&cfg, &mut RngStream::new(1)).unwrap();
        let n = cfg.num_patches();
        let x = Tensor::zeros(&[2, 2, n, 6]);
        let y = unet_forward(&x, &params, &cfg, &mut RngStream::new(0), true).unwrap();
        assert_eq!(y.shape(), &[2, 2, n, 6]);
    }

    #[test]
    fn head_zero_input_zero_bias() {
        let cfg = tiny();
        let mut params = ModelParams::init(&cfg, &mut RngStream::new(1)).unwrap();
        params.store.get_mut(params.head.b).data_mut().fill(0.0);
        let n = cfg.num_patches();
        let y = head_project(&Tensor::zeros(&[1, 2, n, 4]), &params).unwrap();
        assert_eq!(y.shape(), &[1, 2, 12]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_hand_weights() {
        // N=1, D=2, L+H=3
        let mut store = ParamStore::new();
        let w = store.add("head.w", vec![2, 3], vec![1.0, 0.0, 2.0, 0.0, 1.0, -1.0]).unwrap();
        let b = store.add("head.b", vec![3], vec![0.5, 0.0, 0.0]).unwrap();
        let x = Tensor::new(vec![1, 1, 1, 2], vec![3.0, 4.0]).unwrap();
        let flat = x.reshape(&[1, 1, 2]).unwrap();
        let y = flat.linear(&store.leaf(w), Some(&store.leaf(b))).unwrap();
        assert_eq!(y.data(), &[3.5, 4.0, 2.0]);
    }

    #[test]
    fn denormalize_cases() {
        let st = NormStats {
            mu_in: vec![10.0],
            sigma_in: vec![2.0],
        };
        let y = Tensor::new(vec![1, 1, 3], vec![99.0, 1.0, -1.0]).unwrap();
        let out = denormalize_output(&y, &[st], 1, 2).unwrap();
        assert_eq!(out.data(), &[12.0, 8.0]);

        let unit = NormStats {
            mu_in: vec![0.0],
            sigma_in: vec![1.0],
        };
        let out = denormalize_output(&y, &[unit], 1, 2).unwrap();
        assert_eq!(out.data(), &[1.0, -1.0]);
    }

    #[test]
    fn correction_is_identity_without_unet() {
        let mut cfg = tiny();
        cfg.levels = 0;
        let model = UMixer::new(cfg.clone(), &mut RngStream::new(4)).unwrap();
        let x = input(&cfg, 5);
        let (y_sc, diag) = model.predict(&x).unwrap();
        for a in diag.alpha() {
            assert!(a.iter().all(|&v| v == 1.0));
        }
        assert!(diag.corrections[0].mean_shift().iter().all(|&v| v == 0.0));
        let mut off = model.clone();
        off.config.sc_enabled = false;
        let (y_plain, _) = off.predict(&x).unwrap();
        for (a, b) in y_sc.iter().zip(&y_plain) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = ModelConfig::with_dims(2, 16, 4, 4, 4, 6, 2);
        let model = UMixer::new(cfg.clone(), &mut RngStream::new(4)).unwrap();
        let x = input(&cfg, 6);
        let (a, _) = model.predict(&x).unwrap();
        let (b, _) = model.predict(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn full_model_gradient_with_frozen_statistics() {
        let cfg = tiny();
        let mut model = UMixer::new(cfg.clone(), &mut RngStream::new(7)).unwrap();
        let x = input(&cfg, 8);
        let y: Vec<f64> = input(&cfg, 9)[..cfg.channels * cfg.horizon].to_vec();
        let frozen = no_grad(|| model.forward(&[&x], &mut RngStream::new(0), false))
            .unwrap()
            .diagnostics
            .corrections;
        let params = model.params.clone();
        let loss = |store: &ParamStore| {
            let mut p = params.clone();
            p.store = store.clone();
            model_forward(&p, &cfg, &[&x], &mut RngStream::new(0), false, CorrectionSource::Frozen(&frozen))?
                .forecast
                .mse_loss(&y)
        };
        assert!(backward(&loss(&model.params.store).unwrap()).unwrap().len() > 0);
        let report = grad_check(&mut model.params.store, loss, 1e-4).unwrap();
        assert!(report.pass, "max rel error {}", report.max_rel_error());
    }
}
