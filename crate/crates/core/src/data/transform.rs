use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::RawSeries;

/// Lower bound applied to per-channel standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu_in: Vec<f64>,
    pub sigma_in: Vec<f64>,
}

impl NormStats {
    /// Undoes the normalization of a C×K row-major block.
    pub fn denormalize(&self, block: &[f64]) -> Vec<f64> {
        let k = block.len() / self.mu_in.len();
        block
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.sigma_in[i / k] + self.mu_in[i / k])
            .collect()
    }
}

/// Per-channel standardization of a C×L block with population statistics.
pub fn normalize_instance(x: &[f64], channels: usize) -> (Vec<f64>, NormStats) {
    let l = x.len() / channels;
    let mut mu = Vec::with_capacity(channels);
    let mut sigma = Vec::with_capacity(channels);
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(l) {
        let m = row.iter().sum::<f64>() / l as f64;
        let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / l as f64;
        let s = var.sqrt().max(SIGMA_FLOOR);
        out.extend(row.iter().map(|v| (v - m) / s));
        mu.push(m);
        sigma.push(s);
    }
    (
        out,
        NormStats {
            mu_in: mu,
            sigma_in: sigma,
        },
    )
}

/// Dataset-level standardization fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &RawSeries) -> Self {
        let (mean, std) = train
            .values
            .iter()
            .map(|r| {
                let n = r.len() as f64;
                let m = r.iter().sum::<f64>() / n;
                let v = r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
                (m, v.sqrt().max(SIGMA_FLOOR))
            })
            .unzip();
        Self { mean, std }
    }

    pub fn apply(&self, s: &RawSeries) -> RawSeries {
        let mut out = s.clone();
        for ((row, m), sd) in out.values.iter_mut().zip(&self.mean).zip(&self.std) {
            for v in row.iter_mut() {
                *v = (*v - m) / sd;
            }
        }
        out
    }
}

/// `floor((L − P) / S) + 2`.
pub fn patch_count(input_len: usize, patch_len: usize, stride: usize) -> usize {
    (input_len - patch_len) / stride + 2
}

/// Patches of every channel, row `c·N + n` holding the `n`-th patch of channel `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<f64>,
    pub channels: usize,
    pub num_patches: usize,
    pub patch_len: usize,
    pub stride: usize,
}

impl PatchSet {
    pub fn row(&self, c: usize, n: usize) -> &[f64] {
        let i = c * self.num_patches + n;
        &self.patches[i * self.patch_len..(i + 1) * self.patch_len]
    }
}

/// Pads each channel with `stride` copies of its last value, then cuts
/// `N = floor((L−P)/S)+2` patches at offsets `0, S, …, (N−1)·S`.
pub fn patchify(xn: &[f64], channels: usize, patch_len: usize, stride: usize) -> Result<PatchSet> {
    let l = xn.len() / channels;
    if patch_len == 0 || stride == 0 {
        return Err(Error::Config("patch length and stride must be positive".into()));
    }
    if patch_len > l {
        return Err(Error::Config(format!("patch length {patch_len} exceeds input length {l}")));
    }
    let n = patch_count(l, patch_len, stride);
    let mut patches = Vec::with_capacity(channels * n * patch_len);
    let mut padded = Vec::with_capacity(l + stride);
    for row in xn.chunks(l) {
        padded.clear();
        padded.extend_from_slice(row);
        padded.extend(std::iter::repeat(row[l - 1]).take(stride));
        for k in 0..n {
            let off = k * stride;
            patches.extend_from_slice(&padded[off..off + patch_len]);
        }
    }
    Ok(PatchSet {
        patches,
        channels,
        num_patches: n,
        patch_len,
        stride,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_is_clamped() {
        let (xn, st) = normalize_instance(&[2.0, 2.0, 2.0], 1);
        assert_eq!(xn, vec![0.0, 0.0, 0.0]);
        assert_eq!(st.sigma_in, vec![SIGMA_FLOOR]);
        assert_eq!(st.mu_in, vec![2.0]);
    }

    #[test]
    fn two_point_channel() {
        let (xn, st) = normalize_instance(&[1.0, 3.0], 1);
        assert_eq!(xn, vec![-1.0, 1.0]);
        assert_eq!(st.mu_in, vec![2.0]);
        assert_eq!(st.sigma_in, vec![1.0]);
    }

    #[test]
    fn normalized_moments_and_round_trip() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() * 3.0 + i as f64 * 0.1).collect();
        let (xn, st) = normalize_instance(&x, 2);
        for row in xn.chunks(20) {
            let m = row.iter().sum::<f64>() / 20.0;
            let sd = (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 20.0).sqrt();
            assert!(m.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-9);
        }
        let back = st.denormalize(&xn);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn default_config_patches() {
        let x: Vec<f64> = (0..96).map(f64::from).collect();
        let ps = patchify(&x, 1, 16, 8).unwrap();
        assert_eq!(ps.num_patches, 12);
        assert_eq!(ps.row(0, 11)[0], 88.0);
        // Last patch covers padded indices 88..=103; indices ≥ 96 repeat the final value.
        assert_eq!(ps.row(0, 11)[7], 95.0);
        assert_eq!(ps.row(0, 11)[15], 95.0);
    }

    #[test]
    fn patch_equals_input_length() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let ps = patchify(&x, 1, 4, 2).unwrap();
        assert_eq!(ps.num_patches, 2);
        assert_eq!(ps.row(0, 0), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ps.row(0, 1), &[3.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn hand_enumerated_offsets() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let ps = patchify(&x, 1, 4, 3).unwrap();
        assert_eq!(ps.num_patches, 4);
        let starts: Vec<f64> = (0..4).map(|n| ps.row(0, n)[0]).collect();
        assert_eq!(starts, vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(ps.row(0, 3), &[9.0, 9.0, 9.0, 9.0]);
    }

    #[test]
    fn patch_longer_than_input_is_rejected() {
        assert!(matches!(patchify(&[1.0, 2.0], 1, 3, 1), Err(Error::Config(_))));
    }

    #[test]
    fn row_layout_is_channel_major() {
        let x: Vec<f64> = (0..16).map(f64::from).collect();
        let ps = patchify(&x, 2, 4, 4).unwrap();
        assert_eq!(ps.num_patches, 3);
        assert_eq!(ps.row(1, 0), &[8.0, 9.0, 10.0, 11.0]);
        assert_eq!(&ps.patches[3 * 4..4 * 4], ps.row(1, 0));
    }
}
