use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::{ParamId, ParamStore};

use super::config::{ModelConfig, SkipMode};

#[derive(Debug, Clone)]
pub struct MlpParams {
    pub fc1_w: ParamId,
    pub fc1_b: ParamId,
    pub fc2_w: ParamId,
    pub fc2_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

/// One Mixer block: a temporal stage then a channel stage.
#[derive(Debug, Clone)]
pub struct MlpBlockParams {
    /// Per-channel weights `[C, N, h]` / `[C, h, N]` unless shared.
    pub temporal: MlpParams,
    pub temporal_shared: bool,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub skip1: Option<LinearParams>,
    pub channel: MlpParams,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
    pub skip2: Option<LinearParams>,
}

/// Every learnable tensor of the network, addressed through typed handles.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub store: ParamStore,
    pub w_val: ParamId,
    pub w_pos: ParamId,
    pub encoders: Vec<MlpBlockParams>,
    pub decoders: Vec<MlpBlockParams>,
    /// Merge layers for levels 1..M−1; the bottom decoder has none.
    pub merges: Vec<LinearParams>,
    pub head: LinearParams,
}

struct Init<'a> {
    store: ParamStore,
    rng: &'a mut RngStream,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, shape: Vec<usize>, fan_in: usize) -> Result<ParamId> {
        let bound = (1.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.uniform_in(-bound, bound)).collect();
        self.store.add(name, shape, data)
    }

    fn constant(&mut self, name: String, shape: Vec<usize>, v: f64) -> Result<ParamId> {
        let n = shape.iter().product();
        self.store.add(name, shape, vec![v; n])
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Result<LinearParams> {
        Ok(LinearParams {
            w: self.uniform(format!("{prefix}.w"), vec![fan_in, fan_out], fan_in)?,
            b: self.uniform(format!("{prefix}.b"), vec![fan_out], fan_in)?,
        })
    }

    fn block(&mut self, prefix: &str, cfg: &ModelConfig) -> Result<MlpBlockParams> {
        let (n, d, c) = (cfg.num_patches(), cfg.d_model, cfg.channels);
        let (ht, hc) = (cfg.temporal_hidden, cfg.channel_hidden);
        let temporal = if cfg.share_temporal_mlp {
            MlpParams {
                fc1_w: self.uniform(format!("{prefix}.temporal.fc1.w"), vec![n, ht], n)?,
                fc1_b: self.uniform(format!("{prefix}.temporal.fc1.b"), vec![ht], n)?,
                fc2_w: self.uniform(format!("{prefix}.temporal.fc2.w"), vec![ht, n], ht)?,
                fc2_b: self.uniform(format!("{prefix}.temporal.fc2.b"), vec![n], ht)?,
            }
        } else {
            MlpParams {
                fc1_w: self.uniform(format!("{prefix}.temporal.fc1.w"), vec![c, n, ht], n)?,
                fc1_b: self.uniform(format!("{prefix}.temporal.fc1.b"), vec![c, ht], n)?,
                fc2_w: self.uniform(format!("{prefix}.temporal.fc2.w"), vec![c, ht, n], ht)?,
                fc2_b: self.uniform(format!("{prefix}.temporal.fc2.b"), vec![c, n], ht)?,
            }
        };
        let ln1_gamma = self.constant(format!("{prefix}.ln1.gamma"), vec![d], 1.0)?;
        let ln1_beta = self.constant(format!("{prefix}.ln1.beta"), vec![d], 0.0)?;
        let skip1 = match cfg.skip_mode {
            SkipMode::ConcatProject => Some(self.linear(&format!("{prefix}.skip1"), 2 * d, d)?),
            SkipMode::ResidualAdd => None,
        };
        let channel = MlpParams {
            fc1_w: self.uniform(format!("{prefix}.channel.fc1.w"), vec![d, hc], d)?,
            fc1_b: self.uniform(format!("{prefix}.channel.fc1.b"), vec![hc], d)?,
            fc2_w: self.uniform(format!("{prefix}.channel.fc2.w"), vec![hc, d], hc)?,
            fc2_b: self.uniform(format!("{prefix}.channel.fc2.b"), vec![d], hc)?,
        };
        let ln2_gamma = self.constant(format!("{prefix}.ln2.gamma"), vec![d], 1.0)?;
        let ln2_beta = self.constant(format!("{prefix}.ln2.beta"), vec![d], 0.0)?;
        let skip2 = match cfg.skip_mode {
            SkipMode::ConcatProject => Some(self.linear(&format!("{prefix}.skip2"), 2 * d, d)?),
            SkipMode::ResidualAdd => None,
        };
        Ok(MlpBlockParams {
            temporal,
            temporal_shared: cfg.share_temporal_mlp,
            ln1_gamma,
            ln1_beta,
            skip1,
            channel,
            ln2_gamma,
            ln2_beta,
            skip2,
        })
    }
}

impl ModelParams {
    /// Uniform ±sqrt(1/fan_in) for linear layers, N(0, 0.02²) positional table,
    /// unit gamma and zero beta for layer norms.
    pub fn init(cfg: &ModelConfig, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let (c, n, p, d) = (cfg.channels, cfg.num_patches(), cfg.patch_len, cfg.d_model);
        let mut init = Init {
            store: ParamStore::new(),
            rng,
        };
        let w_val = init.uniform("embed.w_val".into(), vec![p, d], p)?;
        let pos: Vec<f64> = (0..c * n * d).map(|_| 0.02 * init.rng.normal()).collect();
        let w_pos = init.store.add("embed.w_pos", vec![c * n, d], pos)?;
        let mut encoders = Vec::with_capacity(cfg.levels);
        let mut decoders = Vec::with_capacity(cfg.levels);
        let mut merges = Vec::new();
        for level in 1..=cfg.levels {
            encoders.push(init.block(&format!("enc{level}"), cfg)?);
        }
        for level in 1..=cfg.levels {
            decoders.push(init.block(&format!("dec{level}"), cfg)?);
            if level < cfg.levels {
                merges.push(init.linear(&format!("merge{level}"), d, d)?);
            }
        }
        let head = init.linear("head", n * d, cfg.input_len + cfg.horizon)?;
        Ok(Self {
            store: init.store,
            w_val,
            w_pos,
            encoders,
            decoders,
            merges,
            head,
        })
    }

    pub fn num_scalars(&self) -> usize {
        self.store.total_numel()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_config() {
        let cfg = ModelConfig::with_dims(2, 8, 4, 4, 2, 4, 2);
        let p = ModelParams::init(&cfg, &mut RngStream::new(0)).unwrap();
        let n = cfg.num_patches();
        assert_eq!(p.store.get(p.w_val).shape, vec![4, 4]);
        assert_eq!(p.store.get(p.w_pos).shape, vec![2 * n, 4]);
        assert_eq!(p.store.get(p.encoders[0].temporal.fc1_w).shape, vec![2, n, 2 * n]);
        assert_eq!(p.merges.len(), 1);
        assert_eq!(p.store.get(p.head.w).shape, vec![n * 4, 12]);
        assert!(p.store.all_finite());
    }

    #[test]
    fn shared_temporal_weights_have_one_copy() {
        let mut cfg = ModelConfig::with_dims(3, 8, 4, 4, 2, 4, 1);
        cfg.share_temporal_mlp = true;
        let p = ModelParams::init(&cfg, &mut RngStream::new(0)).unwrap();
        let n = cfg.num_patches();
        assert_eq!(p.store.get(p.encoders[0].temporal.fc1_w).shape, vec![n, 2 * n]);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::with_dims(2, 8, 4, 4, 2, 4, 1);
        let a = ModelParams::init(&cfg, &mut RngStream::new(5)).unwrap();
        let b = ModelParams::init(&cfg, &mut RngStream::new(5)).unwrap();
        for ((_, pa), (_, pb)) in a.store.iter().zip(b.store.iter()) {
            assert_eq!(pa.data(), pb.data());
        }
    }
}
