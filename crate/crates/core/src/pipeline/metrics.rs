//! Error metrics over paired observations and forecasts.

use crate::error::{usage, Result};

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() || y.len() != y_hat.len() {
        return usage(format!(
            "metric needs equal non-zero lengths, got {} and {}",
            y.len(),
            y_hat.len()
        ));
    }
    Ok(())
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean and population standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(mse(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(mae(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 2.0);
        assert!(mae(&[0.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn mean_std_population() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
        assert_eq!(mean_std(&[0.5; 30]), (0.5, 0.0));
    }

    proptest! {
        #[test]
        fn mae_bounded_by_rmse(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..60)) {
            let (y, yh): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = mae(&y, &yh).unwrap();
            let s = mse(&y, &yh).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!(a <= s.sqrt() * (1.0 + 1e-12) + 1e-12);
        }
    }
}
