//! Mini-batch training with Adam, best-validation retention and resumable state.

mod adam;
mod checkpoint;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, UMixer};
use crate::rng::RngStream;
use crate::tensor::{backward, no_grad, ParamStore, Tensor};

pub use adam::{clip_global_norm, AdamHyper, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Global gradient-norm cap.
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    pub fn long_term(seed: u64) -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            lr: 1e-4,
            seed,
            patience: None,
            grad_clip: None,
        }
    }

    pub fn short_term(seed: u64) -> Self {
        Self {
            batch_size: 32,
            ..Self::long_term(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} is not a finite non-negative number", self.lr)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config("grad_clip must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_l1: f64,
    pub val_l1: Option<f64>,
    pub wall_ms: u64,
}

/// Writes one JSON object per epoch.
pub fn write_history_jsonl(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in history {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Hex SHA-256 of the canonical JSON form of a model configuration.
pub fn config_fingerprint(cfg: &ModelConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("model config serializes");
    hex(&Sha256::digest(json))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Time-averaged L1 between a forecast batch and stacked targets.
pub fn l1_loss(forecast: &Tensor, targets: &[f64]) -> Result<Tensor> {
    forecast.l1_loss(targets)
}

/// Owns every piece of mutable training state so it can be checkpointed.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: UMixer,
    pub config: TrainConfig,
    pub best: ParamStore,
    pub best_val: Option<f64>,
    pub adam: AdamState,
    pub rng: RngStream,
    pub history: Vec<EpochRecord>,
    pub stale_epochs: usize,
}

pub struct TrainOutcome {
    /// Parameters with the best validation L1 (the last epoch when there is no validation set).
    pub model: UMixer,
    pub history: Vec<EpochRecord>,
    pub checkpoint: Checkpoint,
}

impl Trainer {
    /// Initializes parameters and the training stream from `config.seed`.
    pub fn new(model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(config.seed);
        let model = UMixer::new(model_config, &mut rng)?;
        let adam = AdamState::new(&model.params.store, AdamHyper::with_lr(config.lr));
        Ok(Self {
            best: model.params.store.clone(),
            model,
            config,
            best_val: None,
            adam,
            rng,
            history: Vec::new(),
            stale_epochs: 0,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.train_config.validate()?;
        let mut rng = RngStream::new(ck.train_config.seed);
        let mut model = UMixer::new(ck.model_config.clone(), &mut rng)?;
        model.params.store.copy_from(&ck.params)?;
        let mut best = model.params.store.clone();
        best.copy_from(&ck.best_params)?;
        Ok(Self {
            model,
            config: ck.train_config,
            best,
            best_val: ck.best_val,
            adam: ck.adam,
            rng: RngStream::from_state(ck.rng_seed, ck.rng_word_pos),
            history: ck.history,
            stale_epochs: ck.stale_epochs,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model_config: self.model.config.clone(),
            train_config: self.config.clone(),
            params: self.model.params.store.clone(),
            best_params: self.best.clone(),
            best_val: self.best_val,
            adam: self.adam.clone(),
            rng_seed: self.rng.seed(),
            rng_word_pos: self.rng.word_pos(),
            history: self.history.clone(),
            stale_epochs: self.stale_epochs,
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    pub fn best_model(&self) -> UMixer {
        let mut m = self.model.clone();
        m.params.store = self.best.clone();
        m
    }

    fn should_stop(&self) -> bool {
        matches!(self.config.patience, Some(p) if self.stale_epochs >= p)
    }

    /// One pass over shuffled mini-batches followed by validation.
    pub fn run_epoch(&mut self, train: &[WindowSample], val: &[WindowSample]) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::Contract("training needs at least one window".into()));
        }
        let started = Instant::now();
        let epoch = self.epochs_done() + 1;
        let last_good = self.checkpoint();
        let mut order: Vec<usize> = (0..train.len()).collect();
        self.rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| train[i].x.as_slice()).collect();
            let targets: Vec<f64> = batch.iter().flat_map(|&i| train[i].y.iter().copied()).collect();
            let out = self.model.forward(&inputs, &mut self.rng, true)?;
            let loss = l1_loss(&out.forecast, &targets)?;
            if !loss.item().is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_good: Box::new(last_good),
                });
            }
            loss_sum += loss.item() * batch.len() as f64;
            let grads = backward(&loss)?;
            let mut aligned = grads.aligned(&self.model.params.store);
            if let Some(max_norm) = self.config.grad_clip {
                clip_global_norm(&mut aligned, max_norm);
            }
            self.adam.step(&mut self.model.params.store, &aligned)?;
        }
        let train_l1 = loss_sum / train.len() as f64;

        let val_l1 = if val.is_empty() {
            None
        } else {
            Some(mean_l1(&self.model, val, self.config.batch_size)?)
        };
        let score = val_l1.unwrap_or(train_l1);
        match self.best_val {
            Some(b) if score >= b => self.stale_epochs += 1,
            _ => {
                self.best_val = Some(score);
                self.best = self.model.params.store.clone();
                self.stale_epochs = 0;
            }
        }
        let rec = EpochRecord {
            epoch,
            train_l1,
            val_l1,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        log::info!(
            "epoch {epoch}: train L1 {train_l1:.6}{}",
            val_l1.map(|v| format!(", val L1 {v:.6}")).unwrap_or_default()
        );
        self.history.push(rec.clone());
        Ok(rec)
    }

    /// Runs epochs until `config.epochs` have been completed or patience runs out.
    pub fn fit(&mut self, train: &[WindowSample], val: &[WindowSample]) -> Result<()> {
        while self.epochs_done() < self.config.epochs && !self.should_stop() {
            self.run_epoch(train, val)?;
        }
        Ok(())
    }
}

/// Trains from scratch and returns the best-validation model.
pub fn train(
    model_config: &ModelConfig,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(model_config.clone(), config.clone())?;
    t.fit(train_windows, val_windows)?;
    Ok(TrainOutcome {
        model: t.best_model(),
        history: t.history.clone(),
        checkpoint: t.checkpoint(),
    })
}

/// Inference-mode forecasts for every window, in window order.
pub fn predict_windows(model: &UMixer, windows: &[WindowSample], batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut rng = RngStream::new(0);
    let mut out = Vec::with_capacity(windows.len());
    no_grad(|| -> Result<()> {
        for batch in windows.chunks(batch_size.max(1)) {
            let inputs: Vec<&[f64]> = batch.iter().map(|w| w.x.as_slice()).collect();
            let f = model.forward(&inputs, &mut rng, false)?.forecast;
            let per = f.numel() / batch.len();
            out.extend(f.data().chunks(per).map(|c| c.to_vec()));
        }
        Ok(())
    })?;
    Ok(out)
}

/// Mean absolute error over all windows and entries.
pub fn mean_l1(model: &UMixer, windows: &[WindowSample], batch_size: usize) -> Result<f64> {
    let preds = predict_windows(model, windows, batch_size)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (p, w) in preds.iter().zip(windows) {
        sum += p.iter().zip(&w.y).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += p.len();
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, synthetic, RawSeries};

    fn tiny_setup() -> (ModelConfig, Vec<WindowSample>, Vec<WindowSample>) {
        let mut cfg = ModelConfig::with_dims(2, 16, 4, 4, 4, 6, 1);
        cfg.dropout = 0.1;
        let s = synthetic::generate(synthetic::SyntheticKind::SineTrend, 140, 0);
        let tr = s.slice(0, 100);
        let va = s.slice(100, 140);
        (cfg, make_windows(&tr, 16, 4, 4).unwrap(), make_windows(&va, 16, 4, 4).unwrap())
    }

    fn tcfg(epochs: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            lr,
            seed: 11,
            patience: None,
            grad_clip: None,
        }
    }

    #[test]
    fn zero_lr_history_is_flat() {
        let (cfg, tr, va) = tiny_setup();
        let mut c = cfg;
        c.dropout = 0.0;
        let out = train(&c, &tr, &va, &tcfg(3, 0.0)).unwrap();
        let h = &out.history;
        for w in h.windows(2) {
            assert!((w[0].train_l1 - w[1].train_l1).abs() < 1e-12);
            assert!((w[0].val_l1.unwrap() - w[1].val_l1.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_history_and_params() {
        let (cfg, tr, va) = tiny_setup();
        let a = train(&cfg, &tr, &va, &tcfg(2, 1e-3)).unwrap();
        let b = train(&cfg, &tr, &va, &tcfg(2, 1e-3)).unwrap();
        let strip = |h: &[EpochRecord]| h.iter().map(|r| (r.train_l1, r.val_l1)).collect::<Vec<_>>();
        assert_eq!(strip(&a.history), strip(&b.history));
        assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (cfg, tr, va) = tiny_setup();
        let full = train(&cfg, &tr, &va, &tcfg(2, 1e-3)).unwrap();

        let mut first = Trainer::new(cfg.clone(), tcfg(1, 1e-3)).unwrap();
        first.fit(&tr, &va).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        first.checkpoint().save(&path).unwrap();
        let mut ck = Checkpoint::load(&path).unwrap();
        ck.train_config.epochs = 2;
        let mut resumed = Trainer::from_checkpoint(ck).unwrap();
        resumed.fit(&tr, &va).unwrap();
        assert_eq!(resumed.checkpoint().to_bytes().unwrap(), full.checkpoint.to_bytes().unwrap());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (cfg, tr, va) = tiny_setup();
        let out = train(&cfg, &tr, &va, &tcfg(1, 1e-3)).unwrap();
        let bytes = out.checkpoint.to_bytes().unwrap();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.params, out.checkpoint.params);
        assert_eq!(loaded.to_bytes().unwrap(), bytes);

        let t = Trainer::from_checkpoint(loaded).unwrap();
        let before = predict_windows(&out.model, &va, 8).unwrap();
        let after = predict_windows(&t.best_model(), &va, 8).unwrap();
        for (a, b) in before.iter().flatten().zip(after.iter().flatten()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn corrupt_truncated_and_versioned_files_are_rejected() {
        let (cfg, tr, va) = tiny_setup();
        let bytes = train(&cfg, &tr, &va, &tcfg(1, 1e-3)).unwrap().checkpoint.to_bytes().unwrap();

        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x01;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Checksum)));

        let cut = &bytes[..bytes.len() - 100];
        let err = Checkpoint::from_bytes(cut).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(Error::Version { found: 2, .. })));

        assert!(Checkpoint::from_bytes(b"garbage").is_err());
    }

    #[test]
    fn divergence_returns_last_good_state() {
        let (cfg, _, va) = tiny_setup();
        let mut values = vec![vec![0.0; 60], vec![0.0; 60]];
        values[0][30] = f64::MAX;
        values[1][30] = -f64::MAX;
        let s = RawSeries::from_channels(values).unwrap();
        let tr = make_windows(&s, 16, 4, 4).unwrap();
        let mut t = Trainer::new(cfg, tcfg(2, 1e-3)).unwrap();
        match t.fit(&tr, &va) {
            Err(Error::Diverged { epoch, last_good }) => {
                assert_eq!(epoch, 1);
                assert!(last_good.history.is_empty());
            }
            Err(e) => panic!("unexpected error {e}"),
            Ok(()) => panic!("training should diverge"),
        }
    }

    #[test]
    fn history_jsonl_has_one_line_per_epoch() {
        let (cfg, tr, va) = tiny_setup();
        let out = train(&cfg, &tr, &va, &tcfg(2, 1e-3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.jsonl");
        write_history_jsonl(&p, &out.history).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let rec: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        for key in ["epoch", "train_l1", "val_l1", "wall_ms"] {
            assert!(rec.get(key).is_some());
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = tcfg(0, 1e-3);
        assert!(c.validate().is_err());
        c.epochs = 1;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
