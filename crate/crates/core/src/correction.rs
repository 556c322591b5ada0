//! Stationarity correction of the decoder output.
//!
//! The embedded input `X_d` and decoder output `Y_d` (both C×N×D per sample)
//! are viewed as a bundle of lag sequences along one axis (the patch-token
//! axis by default). Each sequence is centered by its own mean, its linear
//! autocovariance is averaged over the bundle, and the averaged lags are
//! assembled into a Toeplitz matrix `R`. A per-position factor
//!
//! ```text
//! α_i = sqrt( Σ_j R_x[i][j]·R_y[i][j] / Σ_j R_x[i][j]² )
//! ```
//!
//! rescales `Y_d` and the per-position means are shifted back onto those of
//! `X_d`. All statistics are constants with respect to differentiation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{fft, ifft_real, Complex, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// Lags divided by the lag-0 autocovariance.
    Normalized,
    /// Raw autocovariances.
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagAxis {
    /// Sequences run over the N patch tokens; one α per token.
    Token,
    /// Sequences run over the D embedding features; one α per feature.
    Feature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// Denominator Σ_j R_x².
    Literal,
    /// Row-wise least squares of R_x ≈ α²·R_y: denominator Σ_j R_y².
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConfig {
    pub mode: CorrelationMode,
    pub centered: bool,
    pub eps: f64,
    pub fallback_alpha: f64,
    pub axis: LagAxis,
    pub alpha_rule: AlphaRule,
    pub use_fft: bool,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            mode: CorrelationMode::Normalized,
            centered: true,
            eps: 1e-12,
            fallback_alpha: 1.0,
            axis: LagAxis::Token,
            alpha_rule: AlphaRule::Literal,
            use_fft: true,
        }
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

/// Per-position means and the centered lag sequences of one C×N×D sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStats {
    /// Mean at each lag position, averaged over every sequence.
    pub mu: Vec<f64>,
    /// Variance at each lag position across sequences.
    pub sigma: Vec<f64>,
    /// Sequences with their own mean removed.
    pub centered: Vec<Vec<f64>>,
}

/// Extracts the lag sequences of `z` (C×N×D, row-major) along `axis`.
pub fn token_sequence_stats(z: &[f64], dims: [usize; 3], axis: LagAxis) -> Result<SequenceStats> {
    let [c, n, d] = dims;
    if z.len() != c * n * d {
        return Err(Error::dim("token_sequence_stats", &[z.len()], &dims));
    }
    let (len, count) = match axis {
        LagAxis::Token => (n, c * d),
        LagAxis::Feature => (d, c * n),
    };
    if len < 2 {
        return Err(Error::Parameter(format!(
            "lag axis has length {len}; at least 2 positions are needed"
        )));
    }
    let mut sequences = Vec::with_capacity(count);
    match axis {
        LagAxis::Token => {
            for ci in 0..c {
                for di in 0..d {
                    sequences.push((0..n).map(|ni| z[(ci * n + ni) * d + di]).collect::<Vec<_>>());
                }
            }
        }
        LagAxis::Feature => {
            for row in z.chunks(d) {
                sequences.push(row.to_vec());
            }
        }
    }
    let mut mu = vec![0.0; len];
    for s in &sequences {
        for (m, v) in mu.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= count as f64;
    }
    let mut sigma = vec![0.0; len];
    for s in &sequences {
        for ((sg, v), m) in sigma.iter_mut().zip(s).zip(&mu) {
            *sg += (v - m) * (v - m);
        }
    }
    for sg in &mut sigma {
        *sg /= count as f64;
    }
    let centered = sequences
        .into_iter()
        .map(|s| {
            let m = s.iter().sum::<f64>() / len as f64;
            s.into_iter().map(|v| v - m).collect()
        })
        .collect();
    Ok(SequenceStats { mu, sigma, centered })
}

/// `r[k] = Σ_{t<N−k} seq[t]·seq[t+k]`.
pub fn autocovariance_direct(seq: &[f64]) -> Vec<f64> {
    let n = seq.len();
    (0..n)
        .map(|k| (0..n - k).map(|t| seq[t] * seq[t + k]).sum())
        .collect()
}

fn power_spectrum(seq: &[f64], padded: usize) -> Vec<Complex<f64>> {
    let mut buf = seq.to_vec();
    buf.resize(padded, 0.0);
    fft(&buf)
        .into_iter()
        .map(|c| Complex::new(c.norm_sqr(), 0.0))
        .collect()
}

/// Linear autocovariance through the power spectrum, zero-padded to 2N.
pub fn autocovariance_fft(seq: &[f64]) -> Vec<f64> {
    let n = seq.len();
    if n == 0 {
        return Vec::new();
    }
    let mut r = ifft_real(&power_spectrum(seq, 2 * n));
    r.truncate(n);
    r
}

/// Autocovariance averaged over many equal-length sequences.
pub fn mean_autocovariance(seqs: &[Vec<f64>], use_fft: bool) -> Vec<f64> {
    let Some(n) = seqs.first().map(Vec::len) else {
        return Vec::new();
    };
    let k = seqs.len() as f64;
    if use_fft {
        // The inverse transform is linear, so one inversion of the summed
        // power spectra gives the summed autocovariances.
        let mut acc = vec![Complex::new(0.0, 0.0); 2 * n];
        for s in seqs {
            for (a, p) in acc.iter_mut().zip(power_spectrum(s, 2 * n)) {
                *a += p;
            }
        }
        let mut r = ifft_real(&acc);
        r.truncate(n);
        r.into_iter().map(|v| v / k).collect()
    } else {
        let mut acc = vec![0.0; n];
        for s in seqs {
            for (a, v) in acc.iter_mut().zip(autocovariance_direct(s)) {
                *a += v;
            }
        }
        acc.into_iter().map(|v| v / k).collect()
    }
}

/// Toeplitz assembly `R[i][j] = r[|i−j|]`, scaled by `r[0]` in normalized mode.
/// Returns a warning when normalized mode meets `r[0] ≤ eps` and falls back to identity.
pub fn autocorr_matrix(r: &[f64], mode: CorrelationMode, eps: f64) -> (SquareMatrix, Option<String>) {
    let n = r.len();
    let scale = match mode {
        CorrelationMode::Covariance => 1.0,
        CorrelationMode::Normalized => {
            if !(r[0] > eps) {
                return (
                    SquareMatrix::identity(n),
                    Some(format!("lag-0 autocovariance {:.3e} ≤ eps; using identity", r[0])),
                );
            }
            r[0]
        }
    };
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let v = r[i.abs_diff(j)];
            data.push(if scale == 1.0 { v } else { v / scale });
        }
    }
    (SquareMatrix { n, data }, None)
}

/// Per-position scale factors; degenerate rows fall back to `fallback`.
pub fn compute_alpha(
    rx: &SquareMatrix,
    ry: &SquareMatrix,
    eps: f64,
    fallback: f64,
    rule: AlphaRule,
) -> Result<(Vec<f64>, Vec<String>)> {
    if rx.n != ry.n {
        return Err(Error::dim("compute_alpha", &[rx.n, rx.n], &[ry.n, ry.n]));
    }
    let mut warnings = Vec::new();
    let alpha = (0..rx.n)
        .map(|i| {
            let (xr, yr) = (rx.row(i), ry.row(i));
            let num: f64 = xr.iter().zip(yr).map(|(a, b)| a * b).sum();
            let den: f64 = match rule {
                AlphaRule::Literal => xr.iter().map(|a| a * a).sum(),
                AlphaRule::LeastSquares => yr.iter().map(|b| b * b).sum(),
            };
            if !(den >= eps) {
                warnings.push(format!("alpha[{i}]: denominator {den:.3e} below eps; fallback {fallback}"));
                return fallback;
            }
            let ratio = num / den;
            if !(ratio >= 0.0) || !ratio.is_finite() {
                warnings.push(format!("alpha[{i}]: ratio {ratio:.3e} is negative; fallback {fallback}"));
                return fallback;
            }
            ratio.sqrt()
        })
        .collect();
    Ok((alpha, warnings))
}

/// Statistics recorded from one C×N×D sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionState {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub r: SquareMatrix,
    pub mode: CorrelationMode,
    pub warnings: Vec<String>,
}

pub fn record_state(z: &[f64], dims: [usize; 3], cfg: &CorrectionConfig) -> Result<CorrectionState> {
    let stats = token_sequence_stats(z, dims, cfg.axis)?;
    let r = mean_autocovariance(&stats.centered, cfg.use_fft);
    let (r, warn) = autocorr_matrix(&r, cfg.mode, cfg.eps);
    Ok(CorrectionState {
        mu: stats.mu,
        sigma: stats.sigma,
        r,
        mode: cfg.mode,
        warnings: warn.into_iter().collect(),
    })
}

/// The constants applied to one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedCorrection {
    pub alpha: Vec<f64>,
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub warnings: Vec<String>,
}

impl AppliedCorrection {
    /// `∇_μ = μ_x − μ_y`.
    pub fn mean_shift(&self) -> Vec<f64> {
        self.mu_x.iter().zip(&self.mu_y).map(|(a, b)| a - b).collect()
    }
}

/// Derives α from the recorded input state and the decoder output of one sample.
pub fn derive_correction(
    x_state: &CorrectionState,
    y_d: &[f64],
    dims: [usize; 3],
    cfg: &CorrectionConfig,
) -> Result<AppliedCorrection> {
    let y_state = record_state(y_d, dims, cfg)?;
    let (alpha, mut warnings) = compute_alpha(&x_state.r, &y_state.r, cfg.eps, cfg.fallback_alpha, cfg.alpha_rule)?;
    warnings.extend(x_state.warnings.iter().cloned());
    warnings.extend(y_state.warnings);
    Ok(AppliedCorrection {
        alpha,
        mu_x: x_state.mu.clone(),
        mu_y: y_state.mu,
        warnings,
    })
}

/// Applies per-sample corrections to a batch `y_d` of shape (B, C, N, D).
///
/// centered: `Ŷ = α·(Y − μ_y) + μ_x`; otherwise `Ŷ = α·Y + (μ_x − μ_y)`.
pub fn apply_correction(
    y_d: &Tensor,
    corrections: &[AppliedCorrection],
    centered: bool,
    axis: LagAxis,
) -> Result<Tensor> {
    let shape = y_d.shape();
    if shape.len() != 4 || shape[0] != corrections.len() {
        return Err(Error::dim("apply_correction", shape, &[corrections.len()]));
    }
    let (c, n, d) = (shape[1], shape[2], shape[3]);
    let len = match axis {
        LagAxis::Token => n,
        LagAxis::Feature => d,
    };
    let mut scale = Vec::with_capacity(y_d.numel());
    let mut shift = Vec::with_capacity(y_d.numel());
    for corr in corrections {
        if corr.alpha.len() != len || corr.mu_x.len() != len || corr.mu_y.len() != len {
            return Err(Error::dim("apply_correction", &[len], &[corr.alpha.len(), corr.mu_x.len()]));
        }
        let offsets: Vec<f64> = (0..len)
            .map(|k| {
                if centered {
                    corr.mu_x[k] - corr.alpha[k] * corr.mu_y[k]
                } else {
                    corr.mu_x[k] - corr.mu_y[k]
                }
            })
            .collect();
        for _ in 0..c {
            for ni in 0..n {
                for di in 0..d {
                    let k = if axis == LagAxis::Token { ni } else { di };
                    scale.push(corr.alpha[k]);
                    shift.push(offsets[k]);
                }
            }
        }
    }
    y_d.affine_const(&scale, &shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn stats_of_constant_and_hand_case() {
        let z = vec![3.0; 2 * 3 * 2];
        let st = token_sequence_stats(&z, [2, 3, 2], LagAxis::Token).unwrap();
        assert_eq!(st.mu, vec![3.0; 3]);
        assert!(st.centered.iter().flatten().all(|&v| v == 0.0));

        let st = token_sequence_stats(&[1.0, 2.0, 3.0], [1, 3, 1], LagAxis::Token).unwrap();
        assert_eq!(st.mu, vec![1.0, 2.0, 3.0]);
        assert_eq!(st.centered, vec![vec![-1.0, 0.0, 1.0]]);
    }

    #[test]
    fn stats_need_two_positions() {
        assert!(token_sequence_stats(&[1.0, 2.0], [2, 1, 1], LagAxis::Token).is_err());
    }

    #[test]
    fn mu_invariant_under_channel_permutation() {
        let mut rng = RngStream::new(5);
        let (c, n, d) = (3, 4, 2);
        let z: Vec<f64> = (0..c * n * d).map(|_| rng.normal()).collect();
        let mut p = Vec::new();
        for ci in [2, 0, 1] {
            p.extend_from_slice(&z[ci * n * d..(ci + 1) * n * d]);
        }
        let a = token_sequence_stats(&z, [c, n, d], LagAxis::Token).unwrap();
        let b = token_sequence_stats(&p, [c, n, d], LagAxis::Token).unwrap();
        for (x, y) in a.mu.iter().zip(&b.mu) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn direct_autocovariance_cases() {
        assert_eq!(autocovariance_direct(&[0.0; 4]), vec![0.0; 4]);
        assert_eq!(autocovariance_direct(&[1.0, -1.0, 1.0, -1.0]), vec![4.0, -3.0, 2.0, -1.0]);
        let mut rng = RngStream::new(2);
        let s: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let r = autocovariance_direct(&s);
        assert!(r.iter().all(|v| v.abs() <= r[0] + 1e-12));
    }

    #[test]
    fn fft_autocovariance_cases() {
        let mut rng = RngStream::new(7);
        let s: Vec<f64> = (0..7).map(|_| rng.normal()).collect();
        let (a, b) = (autocovariance_fft(&s), autocovariance_direct(&s));
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        assert!(autocovariance_fft(&[0.0; 5]).iter().all(|v| v.abs() < 1e-300));
        let r = autocovariance_fft(&[1.0, 0.0, 0.0]);
        assert!((r[0] - 1.0).abs() < 1e-15 && r[1].abs() < 1e-15 && r[2].abs() < 1e-15);
    }

    #[test]
    fn matrix_assembly() {
        let (m, w) = autocorr_matrix(&[1.0, 0.5, 0.2], CorrelationMode::Normalized, 1e-12);
        assert!(w.is_none());
        assert_eq!(m.row(0), &[1.0, 0.5, 0.2]);
        assert_eq!(m.row(1), &[0.5, 1.0, 0.5]);
        assert!(m.is_symmetric(0.0));
        let (m, w) = autocorr_matrix(&[0.0, 0.0], CorrelationMode::Normalized, 1e-12);
        assert_eq!(m, SquareMatrix::identity(2));
        assert!(w.is_some());
    }

    #[test]
    fn alpha_cases() {
        let (rx, _) = autocorr_matrix(&[1.0, 0.5], CorrelationMode::Covariance, 0.0);
        let (a, w) = compute_alpha(&rx, &rx, 1e-12, 1.0, AlphaRule::Literal).unwrap();
        assert_eq!(a, vec![1.0, 1.0]);
        assert!(w.is_empty());

        let (ry, _) = autocorr_matrix(&[1.0, 0.25], CorrelationMode::Covariance, 0.0);
        let (a, _) = compute_alpha(&rx, &ry, 1e-12, 1.0, AlphaRule::Literal).unwrap();
        assert!((a[0] - 0.9f64.sqrt()).abs() < 1e-15);

        let zero_row = SquareMatrix {
            n: 2,
            data: vec![0.0, 0.0, 0.0, 1.0],
        };
        let (a, w) = compute_alpha(&zero_row, &ry, 1e-12, 1.0, AlphaRule::Literal).unwrap();
        assert_eq!(a[0], 1.0);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn literal_correction_hand_value() {
        let y = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let corr = AppliedCorrection {
            alpha: vec![2.0],
            mu_x: vec![3.0],
            mu_y: vec![0.0],
            warnings: vec![],
        };
        let out = apply_correction(&y, &[corr], false, LagAxis::Token).unwrap();
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn centered_correction_restores_token_means() {
        let mut rng = RngStream::new(9);
        let (c, n, d) = (2, 5, 3);
        let x: Vec<f64> = (0..c * n * d).map(|_| rng.normal() + 2.0).collect();
        let y: Vec<f64> = (0..c * n * d).map(|_| rng.normal() * 0.3 - 1.0).collect();
        let cfg = CorrectionConfig::default();
        let xs = record_state(&x, [c, n, d], &cfg).unwrap();
        let corr = derive_correction(&xs, &y, [c, n, d], &cfg).unwrap();
        let yt = Tensor::new(vec![1, c, n, d], y).unwrap();
        let out = apply_correction(&yt, &[corr], true, LagAxis::Token).unwrap();
        let st = token_sequence_stats(out.data(), [c, n, d], LagAxis::Token).unwrap();
        for (a, b) in st.mu.iter().zip(&xs.mu) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn feature_axis_runs() {
        let mut rng = RngStream::new(10);
        let (c, n, d) = (2, 3, 4);
        let x: Vec<f64> = (0..c * n * d).map(|_| rng.normal()).collect();
        let cfg = CorrectionConfig {
            axis: LagAxis::Feature,
            ..Default::default()
        };
        let xs = record_state(&x, [c, n, d], &cfg).unwrap();
        let corr = derive_correction(&xs, &x, [c, n, d], &cfg).unwrap();
        assert_eq!(corr.alpha, vec![1.0; d]);
        let xt = Tensor::new(vec![1, c, n, d], x.clone()).unwrap();
        let out = apply_correction(&xt, &[corr], true, LagAxis::Feature).unwrap();
        for (a, b) in out.data().iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
