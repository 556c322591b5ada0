//! Series loading, chronological splitting, windowing, instance
//! normalization, and patching.

mod loader;
pub mod synthetic;
mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loader::{load_csv, load_m4, write_csv, M4Series};
pub use transform::{normalize_instance, patch_count, patchify, NormStats, PatchSet, Standardizer, SIGMA_FLOOR};

/// A multivariate series stored channel-major: `values[c][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub channel_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub timestamps: Vec<String>,
}

impl RawSeries {
    pub fn new(channel_names: Vec<String>, values: Vec<Vec<f64>>, timestamps: Vec<String>) -> Result<Self> {
        let c = values.len();
        if c == 0 || channel_names.len() != c {
            return Err(Error::Parameter(format!(
                "series needs at least one channel and one name per channel (got {} names, {c} rows)",
                channel_names.len()
            )));
        }
        let t = values[0].len();
        if t == 0 || values.iter().any(|r| r.len() != t) || timestamps.len() != t {
            return Err(Error::Parameter("every channel must have the same non-zero length".into()));
        }
        Ok(Self {
            channel_names,
            values,
            timestamps,
        })
    }

    /// Builds a series with generated channel names and integer timestamps.
    pub fn from_channels(values: Vec<Vec<f64>>) -> Result<Self> {
        let names = (0..values.len()).map(|c| format!("ch{c}")).collect();
        let t = values.first().map_or(0, Vec::len);
        let stamps = (0..t).map(|i| i.to_string()).collect();
        Self::new(names, values, stamps)
    }

    pub fn channels(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Steps `start..end` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> RawSeries {
        RawSeries {
            channel_names: self.channel_names.clone(),
            values: self.values.iter().map(|r| r[start..end].to_vec()).collect(),
            timestamps: self.timestamps[start..end].to_vec(),
        }
    }

    /// Column-major → row-major block `[c][t]` flattened for steps `start..start+len`.
    pub fn block(&self, start: usize, len: usize) -> Vec<f64> {
        self.values
            .iter()
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect()
    }
}

/// One training instance: input `x` (C×L) followed immediately by target `y` (C×H).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub start: usize,
    pub channels: usize,
    pub input_len: usize,
    pub horizon: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Splits into train/val/test at `floor(cumulative_weight / total · T)`.
pub fn chronological_split(s: &RawSeries, ratios: [f64; 3]) -> Result<(RawSeries, RawSeries, RawSeries)> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Config(format!("split ratios must be nonnegative, got {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("split ratios must sum to a positive value".into()));
    }
    let t = s.len();
    if t < 3 {
        return Err(Error::InsufficientData {
            required: 3,
            available: t,
        });
    }
    let b1 = ((ratios[0] * t as f64) / total).floor() as usize;
    let b2 = (((ratios[0] + ratios[1]) * t as f64) / total).floor() as usize;
    let b2 = b2.min(t);
    if b1 == 0 || b2 <= b1 || b2 >= t {
        return Err(Error::Config(format!(
            "split {ratios:?} of {t} steps leaves an empty segment (boundaries {b1}, {b2})"
        )));
    }
    Ok((s.slice(0, b1), s.slice(b1, b2), s.slice(b2, t)))
}

/// Sliding windows with the given stride, ordered by start index.
pub fn make_windows(s: &RawSeries, input_len: usize, horizon: usize, stride: usize) -> Result<Vec<WindowSample>> {
    if input_len == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Config("window lengths and stride must be positive".into()));
    }
    let need = input_len + horizon;
    let t = s.len();
    if t < need {
        return Err(Error::InsufficientData {
            required: need,
            available: t,
        });
    }
    let count = (t - need) / stride + 1;
    Ok((0..count)
        .map(|k| {
            let start = k * stride;
            WindowSample {
                start,
                channels: s.channels(),
                input_len,
                horizon,
                x: s.block(start, input_len),
                y: s.block(start + input_len, horizon),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, t: usize) -> RawSeries {
        RawSeries::from_channels(
            (0..c)
                .map(|ci| (0..t).map(|i| (ci * 1000 + i) as f64).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_622_and_712() {
        let s = ramp(1, 10);
        let (a, b, c) = chronological_split(&s, [6.0, 2.0, 2.0]).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (6, 2, 2));
        let (a, b, c) = chronological_split(&s, [7.0, 1.0, 2.0]).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (7, 1, 2));
    }

    #[test]
    fn split_is_a_partition() {
        let s = ramp(2, 97);
        let (a, b, c) = chronological_split(&s, [7.0, 1.0, 2.0]).unwrap();
        for ch in 0..2 {
            let mut joined = a.values[ch].clone();
            joined.extend(&b.values[ch]);
            joined.extend(&c.values[ch]);
            assert_eq!(joined, s.values[ch]);
        }
    }

    #[test]
    fn split_rejects_empty_segment() {
        let s = ramp(1, 3);
        assert!(matches!(chronological_split(&s, [1.0, 0.0, 1.0]), Err(Error::Config(_))));
        assert!(matches!(chronological_split(&s, [0.0, 0.0, 0.0]), Err(Error::Config(_))));
    }

    #[test]
    fn window_counts() {
        let s = ramp(1, 200);
        assert_eq!(make_windows(&s, 96, 96, 1).unwrap().len(), 9);
        let s = ramp(1, 192);
        assert_eq!(make_windows(&s, 96, 96, 1).unwrap().len(), 1);
        let s = ramp(1, 191);
        assert!(matches!(
            make_windows(&s, 96, 96, 1),
            Err(Error::InsufficientData { required: 192, available: 191 })
        ));
    }

    #[test]
    fn windows_are_adjacent_in_time() {
        let s = ramp(2, 30);
        for w in make_windows(&s, 8, 4, 3).unwrap() {
            for c in 0..2 {
                let last_x = w.x[c * 8 + 7];
                let first_y = w.y[c * 4];
                assert_eq!(first_y, last_x + 1.0);
                assert_eq!(last_x, (c * 1000 + w.start + 7) as f64);
            }
        }
    }
}
