//! Summary statistics and the Kolmogorov–Smirnov test against a normal law.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(x: &[f64], q: f64) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Kolmogorov–Smirnov statistic and asymptotic p-value of `x` against `N(mean, variance)`.
pub fn ks_normal(x: &[f64], mean: f64, variance: f64) -> Result<(f64, f64)> {
    if x.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    let law = Normal::new(mean, variance.sqrt())
        .map_err(|e| Error::Domain(format!("reference normal law: {e}")))?;
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, xi) in v.iter().enumerate() {
        let f = law.cdf(*xi);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok((d, kolmogorov_sf(n.sqrt() * d)))
}

/// `P(K > x)` for the Kolmogorov distribution, series truncated at 100 terms.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // The alternating series has not started converging; the true value is 1 to 1e-20.
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
        s += sign * (-2.0 * k * k * x * x).exp();
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_and_quantiles() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(median(&x), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Standard table values of the limiting distribution.
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_sf(1.63) - 0.0098).abs() < 5e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_accepts_normal_quantiles() {
        let law = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..500)
            .map(|i| law.inverse_cdf((i as f64 + 0.5) / 500.0))
            .collect();
        let (d, p) = ks_normal(&x, 0.0, 1.0).unwrap();
        assert!(d <= 0.0011);
        assert!(p > 0.99);
        let (_, p_shift) = ks_normal(&x, 0.5, 1.0).unwrap();
        assert!(p_shift < 1e-6);
    }
}
