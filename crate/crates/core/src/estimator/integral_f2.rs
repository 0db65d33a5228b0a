use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::models::Sample;
use crate::par::{map_indexed, Schedule};

use super::check_bandwidth;

/// Estimates `∫ f²` from scalar data as
/// `Û = (1/(n(n−1))) Σ_{i≠j} K_h(0 − |X_i − X_j|)`.
///
/// `|X₁ − X₂|` has density `f_g` on `[0, ∞)` with `f_g(0) = 2∫f²`. The
/// kernel is not folded at the boundary, so only half of its mass sees
/// `f_g` and `Û` itself converges to `f_g(0)/2 = ∫f²`.
pub fn estimate_integral_f2(sample: &Sample, kernel: &Kernel, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    if sample.dim() != 1 || kernel.dim() != 1 {
        return Err(Error::Domain(
            "∫f² estimation needs scalar data and a 1-d kernel".into(),
        ));
    }
    let n = sample.n();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let mut v = sample.values().to_vec();
    v.sort_by(f64::total_cmp);
    let reach = kernel.support_radius().unwrap_or(kernel.axis_radius()) * h;
    let partial = map_indexed(Schedule::default(), n, |i| {
        let mut acc = 0.0;
        for xj in &v[i + 1..] {
            let d = xj - v[i];
            if d > reach {
                break;
            }
            acc += kernel.scaled1(h, 0.0 - d);
        }
        acc
    });
    Ok(2.0 * partial.iter().sum::<f64>() / (n as f64 * (n - 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::u_naive;
    use crate::models::SampleModel;

    #[test]
    fn single_pair() {
        let s = Sample::from_scalars(&[0.0, 0.0]);
        let k = Kernel::gaussian();
        let v = estimate_integral_f2(&s, &k, 0.5).unwrap();
        assert_eq!(v, k.scaled1(0.5, 0.0));
        assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn agrees_with_distance_u_statistic() {
        let model: SampleModel = "normal01:distance".parse().unwrap();
        let s = crate::models::sample(&model, 80, 21).unwrap();
        for k in [Kernel::gaussian(), Kernel::epanechnikov()] {
            let a = estimate_integral_f2(&s, &k, 0.3).unwrap();
            let b = u_naive(&s, &model, &k, &[0.0], 0.3).unwrap();
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn needs_two_points() {
        let s = Sample::from_scalars(&[1.0]);
        assert!(estimate_integral_f2(&s, &Kernel::gaussian(), 0.3).is_err());
    }
}
