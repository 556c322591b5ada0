//! Seasonally adjusted last-value baseline.

/// Seasonal period per M4 frequency name.
pub fn m4_period(frequency: &str) -> Option<usize> {
    match frequency.to_ascii_lowercase().as_str() {
        "yearly" => Some(1),
        "quarterly" => Some(4),
        "monthly" => Some(12),
        "weekly" => Some(1),
        "daily" => Some(1),
        "hourly" => Some(24),
        _ => None,
    }
}

fn acf(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (lag..n).map(|t| (x[t] - mean) * (x[t - lag] - mean)).sum();
    num / denom
}

/// 90% one-sided test that the lag-`m` autocorrelation is significant.
pub fn is_seasonal(x: &[f64], m: usize) -> bool {
    if m <= 1 || x.len() < 2 * m {
        return false;
    }
    let acf_sq: f64 = (1..m).map(|k| acf(x, k).powi(2)).sum();
    let limit = 1.645 * ((1.0 + 2.0 * acf_sq) / x.len() as f64).sqrt();
    acf(x, m).abs() > limit
}

/// Centered moving average of order `m` (2×m for even `m`); `None` at the edges.
fn centered_ma(x: &[f64], m: usize) -> Vec<Option<f64>> {
    let n = x.len();
    let mut out = vec![None; n];
    if m % 2 == 1 {
        let h = m / 2;
        for t in h..n.saturating_sub(h) {
            out[t] = Some(x[t - h..=t + h].iter().sum::<f64>() / m as f64);
        }
    } else {
        let h = m / 2;
        for t in h..n.saturating_sub(h) {
            let inner: f64 = x[t + 1 - h..t + h].iter().sum();
            out[t] = Some((0.5 * x[t - h] + inner + 0.5 * x[t + h]) / m as f64);
        }
    }
    out
}

/// Multiplicative seasonal indices by position modulo `m`, normalized to mean 1.
pub fn seasonal_indices(x: &[f64], m: usize) -> Vec<f64> {
    let trend = centered_ma(x, m);
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (t, tr) in trend.iter().enumerate() {
        if let Some(tr) = tr {
            sums[t % m] += x[t] / tr;
            counts[t % m] += 1;
        }
    }
    let raw: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c.max(1) as f64).collect();
    let mean = raw.iter().sum::<f64>() / m as f64;
    raw.iter().map(|r| r / mean).collect()
}

/// Forecast and an optional warning when the seasonal path had to be skipped.
pub fn naive2_forecast(insample: &[f64], m: usize, horizon: usize) -> (Vec<f64>, Option<String>) {
    let Some(&last) = insample.last() else {
        return (vec![0.0; horizon], Some("empty history; forecasting zeros".into()));
    };
    let flat = vec![last; horizon];
    if m <= 1 {
        return (flat, None);
    }
    if insample.len() < 2 * m {
        return (
            flat,
            Some(format!("history of {} is shorter than 2×{m}; non-seasonal naive used", insample.len())),
        );
    }
    if !is_seasonal(insample, m) {
        return (flat, None);
    }
    if insample.iter().any(|&v| v <= 0.0) {
        return (
            flat,
            Some("non-positive values prevent multiplicative adjustment; non-seasonal naive used".into()),
        );
    }
    let si = seasonal_indices(insample, m);
    let n = insample.len();
    let level = insample[n - 1] / si[(n - 1) % m];
    ((0..horizon).map(|h| level * si[(n + h) % m]).collect(), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m1_repeats_last() {
        assert_eq!(naive2_forecast(&[1.0, 5.0, 3.0], 1, 3).0, vec![3.0; 3]);
    }

    #[test]
    fn constant_series_gives_constant() {
        let (f, w) = naive2_forecast(&[4.0; 30], 12, 6);
        assert_eq!(f, vec![4.0; 6]);
        assert!(w.is_none());
    }

    #[test]
    fn pure_seasonal_pattern_is_repeated() {
        let pattern = [1.0, 2.0, 3.0, 4.0];
        let x: Vec<f64> = (0..16).map(|t| pattern[t % 4]).collect();
        assert!(is_seasonal(&x, 4));
        let (f, _) = naive2_forecast(&x, 4, 8);
        for (h, v) in f.iter().enumerate() {
            assert!((v - pattern[(16 + h) % 4]).abs() < 1e-12, "{h}: {v}");
        }
    }

    #[test]
    fn short_history_warns() {
        let (f, w) = naive2_forecast(&[1.0, 2.0, 3.0], 4, 2);
        assert_eq!(f, vec![3.0; 2]);
        assert!(w.is_some());
    }

    #[test]
    fn indices_average_to_one() {
        let x: Vec<f64> = (0..40).map(|t| 10.0 + t as f64 * 0.1 + [1.0, -2.0, 0.5][t % 3]).collect();
        let si = seasonal_indices(&x, 3);
        assert!((si.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
    }
}
