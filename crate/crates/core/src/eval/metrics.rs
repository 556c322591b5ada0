use crate::error::{Error, Result};

fn same_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::dim(op, &[a.len()], &[b.len()]));
    }
    Ok(())
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    same_len("mse", y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    same_len("mae", y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Symmetric MAPE in percent; a term with `y = ŷ = 0` contributes 0.
pub fn smape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    same_len("smape", y, y_hat)?;
    let total: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| {
            let denom = a.abs() + b.abs();
            if denom == 0.0 {
                0.0
            } else {
                (a - b).abs() / denom
            }
        })
        .sum();
    Ok(200.0 * total / y.len() as f64)
}

/// Mean absolute error scaled by the in-sample seasonal-naive error at lag `m`.
pub fn mase(y: &[f64], y_hat: &[f64], insample: &[f64], m: usize) -> Result<f64> {
    same_len("mase", y, y_hat)?;
    if m == 0 || insample.len() <= m {
        return Err(Error::InsufficientData {
            required: m + 1,
            available: insample.len(),
        });
    }
    let scale = insample.windows(m + 1).map(|w| (w[m] - w[0]).abs()).sum::<f64>() / (insample.len() - m) as f64;
    if scale == 0.0 {
        return Err(Error::UndefinedMase);
    }
    Ok(mae(y, y_hat)? / scale)
}

/// Overall weighted average relative to the Naive2 baseline.
pub fn owa(smape: f64, mase: f64, smape_naive2: f64, mase_naive2: f64) -> f64 {
    0.5 * (smape / smape_naive2 + mase / mase_naive2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_fixtures() {
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 2.0);
        assert!((smape(&[10.0], &[20.0]).unwrap() - 200.0 * 10.0 / 30.0).abs() < 1e-9);
        assert_eq!(smape(&[0.0, 10.0], &[0.0, 10.0]).unwrap(), 0.0);
        // insample diffs at m=1: 1,1,1 → scale 1
        assert_eq!(mase(&[5.0, 6.0], &[4.0, 8.0], &[1.0, 2.0, 3.0, 4.0], 1).unwrap(), 1.5);
        assert_eq!(owa(10.0, 2.0, 10.0, 2.0), 1.0);
        assert_eq!(owa(5.0, 2.0, 10.0, 1.0), 0.5 * (0.5 + 2.0));
    }

    #[test]
    fn perfect_forecast_scores_zero() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(smape(&y, &y).unwrap(), 0.0);
        assert_eq!(mase(&y, &y, &[1.0, 3.0, 2.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn undefined_and_mismatched() {
        assert!(matches!(mase(&[1.0], &[2.0], &[3.0, 3.0, 3.0], 1), Err(Error::UndefinedMase)));
        assert!(mase(&[1.0], &[2.0], &[3.0], 1).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }
}
