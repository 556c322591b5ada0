use umixer::data::{make_windows, RawSeries};
use umixer::model::ModelConfig;
use umixer::train::{TrainConfig, Trainer};

/// Without the Unet and the correction the model reduces to embed + head,
/// which must still fit a linear ramp.
#[test]
fn bare_model_learns_a_linear_ramp() {
    let ramp: Vec<f64> = (0..300).map(|t| 0.05 * t as f64 + (t as f64 * 0.3).sin()).collect();
    let series = RawSeries::from_channels(vec![ramp]).unwrap();
    let windows = make_windows(&series, 24, 6, 1).unwrap();
    let mut cfg = ModelConfig::with_dims(1, 24, 6, 6, 3, 8, 0);
    cfg.sc_enabled = false;
    cfg.dropout = 0.0;
    let tc = TrainConfig {
        epochs: 15,
        batch_size: 16,
        lr: 3e-3,
        seed: 4,
        patience: None,
        grad_clip: None,
    };
    let mut t = Trainer::new(cfg, tc).unwrap();
    t.fit(&windows, &[]).unwrap();
    let first = t.history.first().unwrap().train_l1;
    let last = t.history.last().unwrap().train_l1;
    assert!(last < 0.5 * first, "train L1 {first} -> {last}");
}

#[test]
fn gradient_clipping_keeps_training_finite() {
    let s: Vec<f64> = (0..200).map(|t| ((t * 7919) % 101) as f64 * 1e3).collect();
    let series = RawSeries::from_channels(vec![s.clone(), s]).unwrap();
    let windows = make_windows(&series, 16, 4, 2).unwrap();
    let mut cfg = ModelConfig::with_dims(2, 16, 4, 4, 2, 8, 1);
    cfg.dropout = 0.0;
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 8,
        lr: 1e-2,
        seed: 9,
        patience: None,
        grad_clip: Some(1.0),
    };
    let mut t = Trainer::new(cfg, tc).unwrap();
    t.fit(&windows, &[]).unwrap();
    assert!(t.history.iter().all(|r| r.train_l1.is_finite()));
}

#[test]
fn early_stopping_halts_after_patience() {
    let noise: Vec<f64> = (0..240).map(|t| ((t * 48271) % 97) as f64 / 97.0).collect();
    let series = RawSeries::from_channels(vec![noise]).unwrap();
    let windows = make_windows(&series, 16, 4, 1).unwrap();
    let (train, val) = windows.split_at(180);
    let mut cfg = ModelConfig::with_dims(1, 16, 4, 4, 2, 8, 1);
    cfg.dropout = 0.0;
    let tc = TrainConfig {
        epochs: 60,
        batch_size: 8,
        lr: 5e-2,
        seed: 2,
        patience: Some(2),
        grad_clip: None,
    };
    let mut t = Trainer::new(cfg, tc).unwrap();
    t.fit(train, val).unwrap();
    assert!(t.epochs_done() < 60, "ran all {} epochs", t.epochs_done());
    assert_eq!(t.stale_epochs, 2);
}
