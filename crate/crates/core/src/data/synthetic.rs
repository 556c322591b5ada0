//! Generated benchmark series.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

use super::RawSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Two noise-free channels: sinusoids riding on linear trends.
    SineTrend,
    /// Seasonal channels with AR(1) noise and a level shift that only
    /// occurs inside the last fifth of the series (the test segment of a
    /// 7:1:2 split).
    LevelShift,
}

impl SyntheticKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sine_trend" => Some(Self::SineTrend),
            "level_shift" => Some(Self::LevelShift),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SineTrend => "sine_trend",
            Self::LevelShift => "level_shift",
        }
    }
}

pub fn generate(kind: SyntheticKind, length: usize, seed: u64) -> RawSeries {
    match kind {
        SyntheticKind::SineTrend => sine_trend(length, seed),
        SyntheticKind::LevelShift => level_shift(length, seed),
    }
}

pub fn sine_trend(length: usize, seed: u64) -> RawSeries {
    let mut rng = RngStream::new(seed);
    let p0 = rng.uniform_in(0.0, TAU);
    let p1 = rng.uniform_in(0.0, TAU);
    let a: Vec<f64> = (0..length)
        .map(|t| {
            let t = t as f64;
            (TAU * t / 24.0 + p0).sin() + 0.001 * t
        })
        .collect();
    let b: Vec<f64> = (0..length)
        .map(|t| {
            let t = t as f64;
            0.5 * (TAU * t / 48.0 + p1).cos() + 0.8 * (TAU * t / 12.0).sin() - 0.0005 * t
        })
        .collect();
    RawSeries::from_channels(vec![a, b]).expect("non-empty")
}

pub fn level_shift(length: usize, seed: u64) -> RawSeries {
    let mut rng = RngStream::new(seed);
    let channels = 3;
    let shift_at = length * 9 / 10;
    let mut values = Vec::with_capacity(channels);
    for c in 0..channels {
        let phase = rng.uniform_in(0.0, TAU);
        let amp = 1.0 + 0.25 * c as f64;
        let mut noise = 0.0;
        let row = (0..length)
            .map(|t| {
                noise = 0.7 * noise + 0.1 * rng.normal();
                let tf = t as f64;
                let season = amp * (TAU * tf / 24.0 + phase).sin() + 0.3 * (TAU * tf / 8.0).sin();
                let level = if t >= shift_at { 3.0 } else { 0.0 };
                season + noise + level
            })
            .collect();
        values.push(row);
    }
    RawSeries::from_channels(values).expect("non-empty")
}
